import numpy as np
import pytest

from shuttlekit import harmonics, multipole
from shuttlekit.multipole import (DesignGrid, IllConditionedDesignError, LocalFrame,
                                  build_design_basis, expand_along_path,
                                  expand_potential, fibonacci_grid,
                                  load_expansion_set, save_expansion_set,
                                  transform_design_points)
from shuttlekit.path import ShuttlingPath
from shuttlekit.potentials import MultipoleSumElectrode, TrapModel
from conftest import expand_at, random_multipole_model, rotation_matrix


class TestFibonacciGrid:
    def test_two_points_are_the_poles(self):
        g = fibonacci_grid(2)
        assert np.allclose(g.points[:, 2], [1.0, -1.0])
        assert np.allclose(np.linalg.norm(g.points, axis=1), 1.0)

    def test_unit_norms_and_descending_z(self):
        g = fibonacci_grid(1000)
        norms = np.linalg.norm(g.points, axis=1)
        assert np.abs(norms - 1.0).max() < 1e-14
        assert np.all(np.diff(g.points[:, 2]) < 0)
        assert g.points[0, 2] == 1.0 and g.points[-1, 2] == -1.0

    def test_quasi_uniformity_k25(self):
        # centroid of the 25-point grid, frozen from a direct computation
        g = fibonacci_grid(25)
        assert np.linalg.norm(g.points.mean(axis=0)) < 0.05

    def test_golden_angle_increments(self):
        g = fibonacci_grid(40)
        phi = np.arctan2(g.points[:, 1], g.points[:, 0])
        inc = np.diff(phi[1:-1]) % (2 * np.pi)   # poles have undefined azimuth
        golden = (np.pi * (3 - np.sqrt(5))) % (2 * np.pi)
        assert np.allclose(inc, golden, atol=1e-9)

    def test_small_k_rejected(self):
        with pytest.raises(ValueError):
            fibonacci_grid(1)


class TestDesignBasis:
    def test_orthonormalized_columns_l4_k25(self, basis_l4_k25):
        U = basis_l4_k25.orthonormal
        assert np.abs(U.T @ U - np.eye(25)).max() < 1e-13

    def test_order_zero_gram(self):
        for K in (2, 7, 30):
            b = build_design_basis(0, fibonacci_grid(K))
            assert b.gram.shape == (1, 1)
            assert b.gram[0, 0] == pytest.approx(K / (4 * np.pi), rel=1e-13)
            assert np.allclose(b.orthonormal[:, 0], 1 / np.sqrt(K), rtol=1e-13)

    def test_minimal_square_case_l2_k9(self):
        # recorded outcome: the 9-point grid is well conditioned for L=2
        b = build_design_basis(2, fibonacci_grid(9))
        U = b.orthonormal
        assert np.abs(U.T @ U - np.eye(9)).max() < 1e-10

    def test_ill_conditioned_design_raises(self):
        with pytest.raises(IllConditionedDesignError) as err:
            build_design_basis(4, fibonacci_grid(10))   # K < (L+1)^2
        assert "K=10" in str(err.value) and "L=4" in str(err.value)

    def test_gram_is_positive_definite(self, basis_l4_k25):
        evals = np.linalg.eigvalsh(basis_l4_k25.gram)
        assert evals[0] > 0
        assert np.abs(basis_l4_k25.gram - basis_l4_k25.gram.T).max() == 0.0

    def test_sqrt_factors(self, basis_l4_k25):
        b = basis_l4_k25
        assert np.allclose(b.gram_sqrt @ b.gram_sqrt, b.gram, rtol=1e-10)
        assert np.allclose(b.gram_inv_sqrt @ b.gram_sqrt, np.eye(25), atol=1e-11)


class TestTransform:
    def test_identity(self, grid25):
        frame = LocalFrame(np.zeros(3), np.eye(3), 1.0)
        assert np.allclose(transform_design_points(frame, grid25), grid25.points)

    def test_translation(self, grid25):
        p = np.array([1e-6, 2e-6, 3e-6])
        frame = LocalFrame(p, np.eye(3), 1e-6)
        q = transform_design_points(frame, grid25)
        assert np.allclose(q, p + 1e-6 * grid25.points)
        assert np.allclose(np.linalg.norm(q - p, axis=1), 1e-6, rtol=1e-12)

    def test_rotation_about_z(self, grid25):
        R = rotation_matrix([0, 0, 1], np.pi / 2)
        frame = LocalFrame(np.zeros(3), R, 1.0)
        q = transform_design_points(frame, grid25)
        # x coordinates map onto y
        assert np.allclose(q[:, 1], grid25.points[:, 0], atol=1e-15)

    def test_frame_validation(self):
        with pytest.raises(ValueError):
            LocalFrame(np.zeros(3), np.eye(3) * 1.1, 1.0)
        with pytest.raises(ValueError):
            LocalFrame(np.zeros(3), np.diag([1.0, 1.0, -1.0]), 1.0)
        with pytest.raises(ValueError):
            LocalFrame(np.zeros(3), np.eye(3), 0.0)


class TestExpansion:
    def test_exact_recovery_of_basis_content(self, grid25, basis_l4_k25):
        phi = (0.3 * harmonics.solid_harmonic(2, 0, grid25.points)
               + 0.7 * harmonics.solid_harmonic(2, 2, grid25.points)
               + 1.0 * harmonics.solid_harmonic(4, -2, grid25.points))
        c = expand_potential(phi, basis_l4_k25, kappa=1.0)
        expect = np.zeros(25)
        expect[harmonics.lm_to_index(2, 0)] = 0.3
        expect[harmonics.lm_to_index(2, 2)] = 0.7
        expect[harmonics.lm_to_index(4, -2)] = 1.0
        assert np.abs(c - expect).max() < 1e-13

    def test_constant_input(self, grid25, basis_l4_k25):
        c = expand_potential(np.full(25, 5.0), basis_l4_k25, kappa=1.0)
        assert c[0] == pytest.approx(5.0 * np.sqrt(4 * np.pi), rel=1e-13)
        assert np.abs(c[1:]).max() < 1e-12

    def test_kappa_rescaling_removes_sphere_size(self, basis_l4_k25):
        # harmonic model with content through l=2: extraction is exact at any
        # sphere size, so the rescaled coefficients coincide
        d = 1e-4
        content = {(1, 1): 0.9 / d, (2, 0): 1.3 / d ** 2,
                   (2, 2): -0.4 / d ** 2, (2, -1): 0.6 / d ** 2}
        model = MultipoleSumElectrode(content)
        c1 = expand_at(model, np.zeros(3), basis_l4_k25, kappa=1e-2 * d)
        c2 = expand_at(model, np.zeros(3), basis_l4_k25, kappa=1e-3 * d)
        present = [harmonics.lm_to_index(l, m) for (l, m) in content]
        assert np.abs((c1[present] - c2[present]) / c1[present]).max() < 1e-10
        for (l, m), v in content.items():
            assert c1[harmonics.lm_to_index(l, m)] == pytest.approx(v, rel=1e-10)

    def test_kappa_plateau(self, basis_l4_k25):
        # analytic l<=4 model: per-degree coefficients kappa-independent over
        # [1e-4, 1e-1] of the characteristic length; the quartic content is
        # strong enough that its samples stay above rounding at the smallest
        # sphere
        d = 1e-4
        model = MultipoleSumElectrode({(2, 0): 1.0 / d ** 2, (2, 2): 0.7 / d ** 2,
                                       (4, 0): 80.0 / d ** 4, (4, -2): 55.0 / d ** 4})
        ref = expand_at(model, np.zeros(3), basis_l4_k25, kappa=1e-2 * d)
        degrees = basis_l4_k25.degrees
        for frac in (1e-4, 1e-3, 1e-1):
            c = expand_at(model, np.zeros(3), basis_l4_k25, kappa=frac * d)
            for l in (2, 4):
                sel = degrees == l
                scale = np.abs(ref[sel]).max()
                assert np.abs(c[sel] - ref[sel]).max() < 1e-8 * scale

    def test_round_trip_on_grid(self, grid25, basis_l4_k25):
        rng = np.random.RandomState(6)
        model = random_multipole_model(rng, order=4)
        kappa = 2e-6
        frame = LocalFrame(np.array([3e-5, -1e-5, 2e-5]), np.eye(3), kappa)
        pts = transform_design_points(frame, grid25)
        vals = model.potential(pts)
        c = expand_potential(vals, basis_l4_k25, kappa)
        recon = multipole.reconstruct_on_grid(c, basis_l4_k25, kappa)
        assert np.abs(recon - vals).max() < 1e-12 * np.abs(vals).max()

    def test_frame_covariance_of_field_coefficients(self, basis_l3_k25):
        # the l=1 block transforms as a vector under frame rotations
        rng = np.random.RandomState(8)
        model = random_multipole_model(rng, order=3)
        p = np.array([2e-5, 1e-5, -3e-5])
        R = rotation_matrix([1, 0.3, -0.5], 0.8)
        kappa = 1e-6
        c_lab = expand_at(model, p, basis_l3_k25, kappa)
        c_rot = expand_at(model, p, basis_l3_k25, kappa, rotation=R)
        from shuttlekit.confinement import field_from_coeffs
        e_lab = field_from_coeffs(c_lab)
        e_rot = field_from_coeffs(c_rot)
        assert np.allclose(R @ e_rot, e_lab, rtol=1e-10)

    def test_symmetry_forbidden_coefficients_vanish(self, basis_l4_k25):
        # even-in-x model: coefficients of x-odd basis functions stay at
        # rounding level
        model = MultipoleSumElectrode({(2, 0): 1e8, (2, 2): 5e7, (4, 0): 1e16,
                                       (4, 2): 3e15, (4, 4): 2e15, (3, 0): 2e11})
        c = expand_at(model, np.zeros(3), basis_l4_k25, kappa=1e-6)
        x_odd = []
        for i in range(25):
            l, m = harmonics.index_to_lm(i)
            terms = harmonics.MONOMIALS[(l, m)]
            if any(px % 2 == 1 for _, (px, _, _) in terms):
                x_odd.append(i)
        assert np.abs(c[x_odd]).max() < 1e-10 * np.abs(c).max()

    def test_sample_count_mismatch(self, basis_l4_k25):
        with pytest.raises(ValueError):
            expand_potential(np.zeros(24), basis_l4_k25, kappa=1.0)


def _line_path(n_steps, omega=(1e6, 2e6, 3e6)):
    pts = np.column_stack([np.linspace(0, 1e-4, n_steps),
                           np.zeros(n_steps), np.zeros(n_steps)])
    return ShuttlingPath.from_points(pts, np.asarray(omega))


def _trap_with(dc_models, rf_model=None):
    rf = rf_model or MultipoleSumElectrode({(2, 2): 1e6})
    return TrapModel(dc_electrodes=dc_models, rf_electrode=rf,
                     electrode_locations=np.zeros((len(dc_models), 3)),
                     v_rf=100.0, omega=2 * np.pi * 30e6, charge=1.6e-19,
                     mass=6.6e-26, characteristic_length=1e-4)


class TestExpandAlongPath:
    def test_single_electrode_pure_gradient(self):
        trap = _trap_with([MultipoleSumElectrode({(1, 0): 1.0})])
        # up hint along y keeps the local frame aligned with the trap frame
        path = ShuttlingPath.from_points(
            np.array([[0, 0, 0], [1e-6, 0, 0]]), np.array([1e6, 1e6, 1e6]),
            up_hint=(0.0, 1.0, 0.0))
        es = expand_along_path(trap, path, order=2, K=25)
        c = es.dc_coeffs[0, 0, 0]
        assert c[harmonics.lm_to_index(1, 0)] == pytest.approx(1.0, rel=1e-12)
        # compare spurious coefficients at the sampling scale (units 1/m^l)
        degrees = np.array([harmonics.index_to_lm(i)[0] for i in range(9)])
        scaled = c * es.kappa ** degrees
        others = np.delete(scaled, harmonics.lm_to_index(1, 0))
        assert np.abs(others).max() < 1e-12 * es.kappa

    def test_translation_invariant_model(self):
        # a global quadrupole looks the same from every path point up to the
        # l<=2 content it induces; the l=2 coefficients must not drift
        trap = _trap_with([MultipoleSumElectrode({(2, 2): 1e6})])
        path = _line_path(5)
        es = expand_along_path(trap, path, order=2, K=25)
        ref = es.dc_coeffs[0, 0, 0, 4:]
        for t in range(1, 5):
            assert np.allclose(es.dc_coeffs[0, t, 0, 4:], ref,
                               rtol=1e-10, atol=1e-10 * np.abs(ref).max())

    def test_query_count(self):
        calls = {"points": 0}

        class Counting(MultipoleSumElectrode):
            def potential(self, points):
                calls["points"] += np.atleast_2d(points).shape[0]
                return super().potential(points)

        dc = [Counting({(1, 0): 1.0}), Counting({(2, 0): 1.0})]
        trap = _trap_with(dc, rf_model=Counting({(2, 2): 1.0}))
        path = _line_path(3)
        expand_along_path(trap, path, order=2, K=25)
        # K * W * T * (N + 1) backend queries
        assert calls["points"] == 25 * 1 * 3 * (2 + 1)

    def test_backend_errors_are_annotated(self):
        from shuttlekit.potentials import PointChargeSetElectrode
        bad = PointChargeSetElectrode([[0.0, 0.0, 0.0]], [1.0], exclusion_radius=1e-3)
        trap = _trap_with([bad])
        path = _line_path(2)
        with pytest.raises(Exception) as err:
            expand_along_path(trap, path, order=2, K=25)
        assert "step" in str(err.value) and "dc[0]" in str(err.value)


def test_cache_roundtrip_bit_exact(tmp_path):
    trap = _trap_with([MultipoleSumElectrode({(1, 1): 3.0, (3, 2): 2e9})])
    path = _line_path(4)
    es = expand_along_path(trap, path, order=3, K=25)
    f = tmp_path / "cache.npz"
    save_expansion_set(es, f)
    loaded = load_expansion_set(f)
    assert loaded.order == es.order and loaded.grid_size == es.grid_size
    assert loaded.kappa == es.kappa
    assert np.array_equal(loaded.dc_coeffs, es.dc_coeffs)
    assert np.array_equal(loaded.rf_coeffs, es.rf_coeffs)
    assert np.array_equal(loaded.positions, es.positions)
    assert np.array_equal(loaded.rotations, es.rotations)


def test_cache_key_sensitivity():
    trap = _trap_with([MultipoleSumElectrode({(1, 1): 3.0})])
    path = _line_path(4)
    k1 = multipole.expansion_cache_key(trap, path, 3, 25, 1e-6)
    k2 = multipole.expansion_cache_key(trap, path, 3, 25, 2e-6)
    k3 = multipole.expansion_cache_key(trap, path, 2, 25, 1e-6)
    assert len({k1, k2, k3}) == 3
