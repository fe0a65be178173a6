"""Pins the solid-harmonic table against independent oracles.

The reference is the defining combination of complex spherical harmonics
(scipy's, Condon-Shortley phases included): Y_{l,0} for m=0,
(Y_{l,m} + (-1)^m Y_{l,-m})/sqrt(2) for m>0 and
(Y_{l,m} - (-1)^m Y_{l,-m})/sqrt(-2) for m<0, multiplied by r^l.
"""

import numpy as np
import pytest
from scipy.special import sph_harm

from shuttlekit import harmonics


def reference_real_solid(l, m, points):
    pts = np.atleast_2d(points)
    r = np.linalg.norm(pts, axis=1)
    theta = np.arccos(np.clip(pts[:, 2] / np.where(r == 0, 1.0, r), -1, 1))
    phi = np.arctan2(pts[:, 1], pts[:, 0])
    if m == 0:
        val = sph_harm(0, l, phi, theta).real
    elif m > 0:
        val = ((sph_harm(m, l, phi, theta)
                + (-1) ** m * sph_harm(-m, l, phi, theta)) / np.sqrt(2)).real
    else:
        val = ((sph_harm(m, l, phi, theta)
                - (-1) ** m * sph_harm(-m, l, phi, theta)) / (1j * np.sqrt(2))).real
    return val * r ** l


def all_lm():
    return [(l, m) for l in range(5) for m in range(-l, l + 1)]


@pytest.mark.parametrize("l,m", all_lm())
def test_matches_spherical_harmonic_combination(l, m):
    rng = np.random.RandomState(7 * l + m + 40)
    pts = rng.uniform(-2, 2, (20, 3))
    mine = harmonics.solid_harmonic(l, m, pts)
    ref = reference_real_solid(l, m, pts)
    assert np.allclose(mine, ref, rtol=1e-12, atol=1e-13)


@pytest.mark.parametrize("l,m", all_lm())
def test_harmonicity(l, m):
    # Laplacian of each monomial table entry, evaluated at random points
    rng = np.random.RandomState(3 * l + m + 11)
    pts = rng.uniform(-1, 1, (10, 3))
    h = harmonics.solid_harmonic_hessian(l, m, pts)
    trace = np.trace(h, axis1=1, axis2=2)
    assert np.abs(trace).max() < 1e-14 * max(1.0, np.abs(h).max())


def test_origin_values():
    assert harmonics.solid_harmonic(0, 0, np.zeros(3)) == pytest.approx(
        1 / np.sqrt(4 * np.pi), abs=0)
    for l, m in all_lm():
        if l >= 1:
            assert harmonics.solid_harmonic(l, m, np.zeros(3)) == 0.0


def test_degree_one_pin():
    # R_{1,0} = sqrt(3/4pi) z
    assert harmonics.solid_harmonic(1, 0, [0.0, 0.0, 2.0]) == pytest.approx(
        2 * np.sqrt(3 / (4 * np.pi)), rel=1e-15)


def test_xy_quadrupole_pin():
    # In the Condon-Shortley-derived convention the xy harmonic carries a
    # minus sign; its magnitude is the familiar sqrt(15/4pi).
    val = harmonics.solid_harmonic(2, -2, [1.0, 1.0, 0.0])
    assert val == pytest.approx(-np.sqrt(15 / (4 * np.pi)), rel=1e-15)
    ref = reference_real_solid(2, -2, np.array([[1.0, 1.0, 0.0]]))[0]
    assert val == pytest.approx(ref, rel=1e-12)


def test_orthonormal_on_unit_sphere():
    # Gauss-Legendre x uniform azimuth is exact for degree <= 8 integrands
    nodes, weights = np.polynomial.legendre.leggauss(30)
    nphi = 64
    phis = 2 * np.pi * np.arange(nphi) / nphi
    ct = nodes[:, None]
    st = np.sqrt(1 - ct ** 2)
    pts = np.stack([ (st * np.cos(phis)).ravel(),
                     (st * np.sin(phis)).ravel(),
                     (ct * np.ones(nphi)).ravel() ], axis=1)
    V = harmonics.basis_matrix(4, pts)
    wq = (np.outer(weights, np.ones(nphi)) * (2 * np.pi / nphi)).ravel()
    gram = (V * wq[:, None]).T @ V
    assert np.abs(gram - np.eye(25)).max() < 1e-13


def test_gradient_hessian_by_finite_differences():
    rng = np.random.RandomState(0)
    step = 1e-6
    for l, m in [(1, 1), (2, 0), (3, -2), (4, 3)]:
        p = rng.uniform(-1, 1, 3)
        g = harmonics.solid_harmonic_gradient(l, m, p)
        h = harmonics.solid_harmonic_hessian(l, m, p)
        for u in range(3):
            e = np.eye(3)[u] * step
            fd = (harmonics.solid_harmonic(l, m, p + e)
                  - harmonics.solid_harmonic(l, m, p - e)) / (2 * step)
            assert g[u] == pytest.approx(fd, rel=1e-8, abs=1e-8)
            fdg = (harmonics.solid_harmonic_gradient(l, m, p + e)
                   - harmonics.solid_harmonic_gradient(l, m, p - e)) / (2 * step)
            assert np.allclose(h[:, u], fdg, rtol=1e-6, atol=1e-6)


def test_index_maps():
    assert harmonics.index_to_lm(0) == (0, 0)
    assert harmonics.index_to_lm(1) == (1, -1)
    assert harmonics.index_to_lm(2) == (1, 0)
    assert harmonics.index_to_lm(3) == (1, 1)
    assert harmonics.index_to_lm(4) == (2, -2)
    assert harmonics.index_to_lm(8) == (2, 2)
    for i in range(25):
        l, m = harmonics.index_to_lm(i)
        assert harmonics.lm_to_index(l, m) == i
    assert harmonics.num_coefficients(4) == 25


def test_unsupported_labels_raise():
    with pytest.raises(ValueError):
        harmonics.solid_harmonic(5, 0, np.zeros(3))
    with pytest.raises(ValueError):
        harmonics.solid_harmonic(2, 3, np.zeros(3))
    with pytest.raises(ValueError):
        harmonics.lm_to_index(-1, 0)


def test_derivative_tables_match_pointwise_derivatives():
    g = harmonics.gradient_table()
    h = harmonics.hessian_table()
    t3 = harmonics.third_derivative_table()
    for j, m in enumerate((-1, 0, 1)):
        assert np.allclose(g[j], harmonics.solid_harmonic_gradient(1, m, np.zeros(3)))
    for j, m in enumerate(range(-2, 3)):
        assert np.allclose(h[j], harmonics.solid_harmonic_hessian(2, m, np.zeros(3)))
    # third derivatives of degree-3 polynomials are constant: finite difference
    # of the Hessian gives the same tensor
    step = 0.5
    for j, m in enumerate(range(-3, 4)):
        for u in range(3):
            e = np.eye(3)[u] * step
            fd = (harmonics.solid_harmonic_hessian(3, m, e)
                  - harmonics.solid_harmonic_hessian(3, m, -e)) / (2 * step)
            assert np.allclose(t3[j, u], fd, rtol=1e-12, atol=1e-12)
