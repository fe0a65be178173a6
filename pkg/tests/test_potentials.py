import json

import numpy as np
import pytest
from scipy.integrate import dblquad

from shuttlekit import harmonics
from shuttlekit.potentials import (CapabilityError, CompositeElectrode,
                                   EvaluationError, MultipoleSumElectrode,
                                   PlanarRectangleSetElectrode,
                                   PointChargeSetElectrode, TrapModel,
                                   electrode_from_dict, load_trap_model,
                                   save_trap_model)
from conftest import random_multipole_model, random_point_charge_model


def test_multipole_sum_degree_one():
    model = MultipoleSumElectrode({(1, 0): 1.0})
    for z in (0.5, 1.0):
        assert model.potential([0, 0, z]) == pytest.approx(
            np.sqrt(3 / (4 * np.pi)) * z, rel=1e-15)


def test_point_charge_coulomb_value():
    model = PointChargeSetElectrode([[0, 0, 0]], [1.0])
    assert model.potential([2.0, 0, 0]) == pytest.approx(1 / (4 * np.pi * 2.0), rel=1e-15)


def test_point_charge_gradient_pin():
    # charge q at (0,0,1): gradient of phi at the origin points along +z
    model = PointChargeSetElectrode([[0, 0, 1.0]], [2.0])
    g = model.gradient(np.zeros(3))
    assert np.allclose(g, [0, 0, 2.0 / (4 * np.pi)], rtol=1e-14)


def test_planar_rectangle_against_quadrature_oracle():
    # oracle: the defining half-space integral of the gapless-plane problem,
    # phi(r) = (z / 2 pi) * iint_patch dA / |r - r'|^3
    rect = (-2e-4, 3e-4, -1e-4, 2e-4)
    model = PlanarRectangleSetElectrode([rect])
    for pt in ([5e-5, 3e-5, 1.3e-4], [0.0, 0.0, 2e-4], [4e-4, -2e-4, 0.7e-4]):
        x, y, z = pt
        val, _ = dblquad(lambda yp, xp: z / (2 * np.pi)
                         / ((x - xp) ** 2 + (y - yp) ** 2 + z ** 2) ** 1.5,
                         rect[0], rect[1], rect[2], rect[3],
                         epsabs=1e-12, epsrel=1e-10)
        assert model.potential(pt) == pytest.approx(val, rel=1e-9)


def test_planar_rectangle_boundary_and_decay():
    model = PlanarRectangleSetElectrode([(-1e-4, 1e-4, -1e-4, 1e-4)])
    assert model.potential([0, 0, 0]) == 1.0          # on the patch
    assert model.potential([5e-4, 0, 0]) == 0.0       # in the grounded plane
    assert model.potential([0, 0, 1e-6]) == pytest.approx(1.0, abs=1e-2)
    assert model.potential([0, 0, 0.5]) < 1e-5        # asymptotic decay
    # mirror symmetry in z
    assert model.potential([2e-5, 1e-5, 1e-4]) == pytest.approx(
        model.potential([2e-5, 1e-5, -1e-4]), rel=1e-15)


def test_point_charge_exclusion_radius():
    model = PointChargeSetElectrode([[0, 0, 0]], [1.0], exclusion_radius=1e-5)
    with pytest.raises(EvaluationError) as err:
        model.potential([5e-6, 0, 0])
    assert "charge 0" in str(err.value)
    # default from declared clearance
    model2 = PointChargeSetElectrode([[0, 0, 0]], [1.0], clearance=1e-3)
    assert model2.exclusion_radius == pytest.approx(1e-6)


def test_superposition_linearity():
    rng = np.random.RandomState(3)
    parts = [random_multipole_model(rng, order=2), random_point_charge_model(rng)]
    weights = [0.7, -1.3]
    combined = CompositeElectrode(list(zip(weights, parts)))
    pts = rng.uniform(-1e-4, 1e-4, (12, 3))
    expect = sum(w * p.potential(pts) for w, p in zip(weights, parts))
    got = combined.potential(pts)
    assert np.allclose(got, expect, rtol=1e-13)


def test_multipole_sum_discrete_laplacian_vanishes():
    # the 7-point Laplacian of a harmonic polynomial is pure discretization
    # error, O(step^2): halving the step shrinks it fourfold, and it is tiny
    # against the same stencil applied to a non-harmonic control function
    rng = np.random.RandomState(5)
    model = random_multipole_model(rng, order=4)
    p = rng.uniform(-1e-4, 1e-4, 3)

    def stencil(f, h):
        out = -6 * f(p)
        for u in range(3):
            e = np.eye(3)[u] * h
            out += f(p + e) + f(p - e)
        return out / h ** 2

    lap_h = stencil(model.potential, 2e-6)
    lap_h2 = stencil(model.potential, 1e-6)
    assert abs(lap_h) < 1e-3 * np.abs(model.hessian(p)).max()
    assert abs(lap_h2) < 0.3 * abs(lap_h)


@pytest.mark.parametrize("maker", [random_multipole_model, random_point_charge_model])
def test_exact_derivatives_match_finite_differences(maker):
    rng = np.random.RandomState(11)
    model = maker(rng)
    p = rng.uniform(-5e-5, 5e-5, 3)
    step = 1e-6 * max(np.abs(p).max(), 1e-4)
    g = model.gradient(p)
    h = model.hessian(p)
    for u in range(3):
        e = np.eye(3)[u] * step
        fd = (model.potential(p + e) - model.potential(p - e)) / (2 * step)
        assert g[u] == pytest.approx(fd, rel=1e-6, abs=1e-9 * np.abs(g).max())
        fdg = (model.gradient(p + e) - model.gradient(p - e)) / (2 * step)
        assert np.allclose(h[:, u], fdg, rtol=1e-6, atol=1e-7 * np.abs(h).max())


def test_hessians_are_symmetric_traceless():
    rng = np.random.RandomState(13)
    for maker in (random_multipole_model, random_point_charge_model):
        model = maker(rng)
        p = rng.uniform(-5e-5, 5e-5, 3)
        h = model.hessian(p)
        assert np.abs(h - h.T).max() < 1e-12 * np.abs(h).max()
        assert abs(np.trace(h)) < 1e-13 * np.abs(h).max()


def test_quadrupole_hessian_pin():
    model = MultipoleSumElectrode({(2, 0): 1.0})
    assert np.allclose(model.gradient(np.zeros(3)), 0.0)
    h = model.hessian(np.zeros(3))
    expect = -np.sqrt(15 / (4 * np.pi)) * np.diag([1 / np.sqrt(3), 1 / np.sqrt(3),
                                                   -2 / np.sqrt(3)])
    assert np.allclose(h, expect, rtol=1e-14)


def test_planar_backend_has_no_closed_form_derivatives():
    model = PlanarRectangleSetElectrode([(-1e-4, 1e-4, -1e-4, 1e-4)])
    with pytest.raises(CapabilityError):
        model.gradient(np.array([0, 0, 1e-4]))


def _toy_trap():
    dc = [PointChargeSetElectrode([[0, 0, 3e-4]], [1.0], clearance=1e-4),
          MultipoleSumElectrode({(2, 0): 1e6})]
    rf = MultipoleSumElectrode({(2, 2): 5e6})
    return TrapModel(dc_electrodes=dc, rf_electrode=rf,
                     electrode_locations=[[0, 0, 3e-4], [0, 0, 0]],
                     v_rf=205.0, omega=2 * np.pi * 29.5e6,
                     charge=1.602e-19, mass=6.64e-26,
                     characteristic_length=224e-6)


def test_trap_model_roundtrip(tmp_path):
    trap = _toy_trap()
    f = tmp_path / "trap.json"
    save_trap_model(trap, f)
    loaded = load_trap_model(f)
    assert loaded.n_dc == 2
    assert loaded.alpha_rf == pytest.approx(trap.alpha_rf, rel=1e-15)
    pts = np.random.RandomState(0).uniform(-1e-4, 1e-4, (5, 3))
    for a, b in zip(trap.dc_electrodes, loaded.dc_electrodes):
        assert np.allclose(a.potential(pts), b.potential(pts), rtol=0, atol=0)
    # alpha_rf definition
    assert trap.alpha_rf == pytest.approx(
        trap.charge * trap.v_rf ** 2 / (2 * trap.mass * trap.omega ** 2))


def test_trap_model_validation():
    with pytest.raises(ValueError):
        TrapModel(dc_electrodes=[], rf_electrode=MultipoleSumElectrode({(0, 0): 1.0}),
                  electrode_locations=np.zeros((0, 3)), v_rf=-1.0,
                  omega=1e8, charge=1e-19, mass=1e-26, characteristic_length=1e-4)
    with pytest.raises(ValueError):
        TrapModel(dc_electrodes=[MultipoleSumElectrode({(0, 0): 1.0})],
                  rf_electrode=MultipoleSumElectrode({(0, 0): 1.0}),
                  electrode_locations=np.zeros((1, 3)), v_rf=1.0,
                  omega=-1e8, charge=1e-19, mass=1e-26, characteristic_length=1e-4)


def test_electrode_from_dict_unknown_kind():
    with pytest.raises(ValueError):
        electrode_from_dict({"kind": "mesh"})
