import numpy as np
import pytest

from shuttlekit import multipole
from shuttlekit.potentials import MultipoleSumElectrode, PointChargeSetElectrode


@pytest.fixture(scope="session")
def grid25():
    return multipole.fibonacci_grid(25)


@pytest.fixture(scope="session")
def basis_l4_k25(grid25):
    return multipole.build_design_basis(4, grid25)


@pytest.fixture(scope="session")
def basis_l3_k25(grid25):
    return multipole.build_design_basis(3, grid25)


def random_multipole_model(rng, order=4, scale_length=1e-4):
    """Random harmonic-polynomial electrode with content through ``order``.

    Coefficients are scaled so each degree contributes comparably at the
    reference length, which keeps every extraction well conditioned.
    """
    coeffs = {}
    for l in range(order + 1):
        for m in range(-l, l + 1):
            coeffs[(l, m)] = rng.uniform(-1.0, 1.0) / scale_length ** l
    return MultipoleSumElectrode(coeffs)


def random_point_charge_model(rng, n_charges=8, radius=3e-4):
    """Charges on a shell of the given radius around the origin."""
    directions = rng.normal(size=(n_charges, 3))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    pos = directions * radius * rng.uniform(1.0, 1.6, n_charges)[:, None]
    return PointChargeSetElectrode(pos, rng.uniform(0.5, 2.0, n_charges),
                                   clearance=radius / 2)


def expand_at(model, point, basis, kappa, rotation=None):
    frame = multipole.LocalFrame(point, np.eye(3) if rotation is None else rotation, kappa)
    pts = multipole.transform_design_points(frame, basis.grid)
    return multipole.expand_potential(model.potential(pts), basis, kappa)


def rotation_matrix(axis, angle):
    axis = np.asarray(axis, dtype=float)
    axis /= np.linalg.norm(axis)
    K = np.array([[0, -axis[2], axis[1]],
                  [axis[2], 0, -axis[0]],
                  [-axis[1], axis[0], 0]])
    return np.eye(3) + np.sin(angle) * K + (1 - np.cos(angle)) * (K @ K)
