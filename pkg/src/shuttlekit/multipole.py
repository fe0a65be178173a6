"""Spherical Fibonacci designs and local multipole expansion of unit potentials.

The expansion samples a unit potential on ``K`` grid points distributed over a
sphere of radius ``kappa`` around a support point, projects the samples onto an
orthonormalized solid-harmonic basis, reverts the orthonormalization to obtain
coefficients of the bare basis functions, and finally removes the sphere-size
dependence by rescaling each coefficient with ``kappa**(-l)``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from . import harmonics
from .potentials import TrapModel

__all__ = [
    "DesignGrid",
    "DesignBasis",
    "LocalFrame",
    "ExpansionSet",
    "IllConditionedDesignError",
    "fibonacci_grid",
    "build_design_basis",
    "transform_design_points",
    "expand_potential",
    "expand_along_path",
    "save_expansion_set",
    "load_expansion_set",
]

GOLDEN_ANGLE = np.pi * (3.0 - np.sqrt(5.0))


class IllConditionedDesignError(RuntimeError):
    """The design Gram matrix is numerically too ill conditioned to invert."""


@dataclass(frozen=True)
class DesignGrid:
    """``K`` unit vectors on the sphere, generated by the Fibonacci rule."""

    points: np.ndarray   # (K, 3)

    @property
    def size(self) -> int:
        return self.points.shape[0]


def fibonacci_grid(K: int) -> DesignGrid:
    """Quasi-uniform spherical grid of ``K`` points.

    Uses ``z_k = 1 - 2k/(K-1)`` with ``k = 0..K-1``, so the z coordinates run
    from the north to the south pole, and azimuths advance by the golden
    angle ``pi (3 - sqrt 5)``.
    """
    if K < 2:
        raise ValueError("fibonacci_grid needs K >= 2")
    k = np.arange(K, dtype=float)
    z = 1.0 - 2.0 * k / (K - 1)
    rho = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    phi = k * GOLDEN_ANGLE
    pts = np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])
    return DesignGrid(points=pts)


@dataclass(frozen=True)
class DesignBasis:
    """Orthogonalized solid-harmonic basis on a design grid.

    ``design_matrix`` has shape ``(K, (L+1)**2)`` with one basis function per
    column; ``gram = design_matrix.T @ design_matrix``. ``orthonormal`` is the
    column-orthonormalized matrix ``design_matrix @ gram_inv_sqrt``, so
    ``orthonormal.T @ orthonormal`` is the identity.
    """

    order: int
    grid: DesignGrid
    design_matrix: np.ndarray      # (K, B)
    gram: np.ndarray               # (B, B)
    gram_sqrt: np.ndarray          # (B, B)
    gram_inv_sqrt: np.ndarray      # (B, B)
    orthonormal: np.ndarray        # (K, B)

    @property
    def size(self) -> int:
        return self.design_matrix.shape[1]

    def index_to_lm(self, i: int) -> tuple[int, int]:
        return harmonics.index_to_lm(i)

    @property
    def degrees(self) -> np.ndarray:
        """Degree l of each coefficient, shape ``(B,)``."""
        return np.array([harmonics.index_to_lm(i)[0] for i in range(self.size)])


def build_design_basis(order: int, grid: DesignGrid,
                       cond_threshold: float = 1e12) -> DesignBasis:
    """Evaluate the basis on the grid and orthonormalize via the Gram matrix.

    The symmetric square-root factors are computed with a dense eigendecomposition,
    which is cheap at these sizes ((L+1)^2 <= 25).
    """
    V = harmonics.basis_matrix(order, grid.points)
    G = V.T @ V
    evals, evecs = np.linalg.eigh(G)
    if evals[0] <= 0 or evals[-1] / evals[0] > cond_threshold:
        raise IllConditionedDesignError(
            f"design Gram matrix is ill conditioned for K={grid.size}, L={order} "
            f"(eigenvalue range {evals[0]:.3e} .. {evals[-1]:.3e})")
    sq = evecs @ np.diag(np.sqrt(evals)) @ evecs.T
    isq = evecs @ np.diag(1.0 / np.sqrt(evals)) @ evecs.T
    U = V @ isq
    return DesignBasis(order=order, grid=grid, design_matrix=V, gram=G,
                       gram_sqrt=sq, gram_inv_sqrt=isq, orthonormal=U)


@dataclass(frozen=True)
class LocalFrame:
    """Support point with an attached rotated coordinate system.

    ``rotation`` maps local-frame components to trap-frame components; its
    columns are the local axes expressed in the trap frame. ``kappa`` is the
    expansion sphere radius in meters.
    """

    position: np.ndarray    # (3,)
    rotation: np.ndarray    # (3, 3), SO(3)
    kappa: float

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float).reshape(3))
        R = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        object.__setattr__(self, "rotation", R)
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")
        if np.abs(R.T @ R - np.eye(3)).max() > 1e-12:
            raise ValueError("rotation is not orthogonal")
        if np.linalg.det(R) < 0:
            raise ValueError("rotation must be proper (det +1)")

    def to_local(self, points):
        return (np.atleast_2d(points) - self.position) @ self.rotation

    def to_trap(self, local_points):
        return np.atleast_2d(local_points) @ self.rotation.T + self.position


def transform_design_points(frame: LocalFrame, grid: DesignGrid) -> np.ndarray:
    """Place the design points on the expansion sphere of a support point.

    ``q_k = p + kappa * R r_k``; the result has shape ``(K, 3)`` in the trap
    frame.
    """
    return frame.position + frame.kappa * grid.points @ frame.rotation.T


def expand_potential(values, basis: DesignBasis, kappa: float) -> np.ndarray:
    """Expansion coefficients from potential samples on the design sphere.

    ``values`` must be the potential evaluated at
    :func:`transform_design_points` of the same grid and frame. Returns the
    coefficient vector ``c`` (length ``(L+1)**2``) of the solid-harmonic
    expansion in local-frame coordinates, rescaled to physical units
    ``c_i -> c_i / kappa**l_i``.
    """
    vals = np.asarray(values, dtype=float)
    if vals.ndim == 1:
        if vals.shape[0] != basis.grid.size:
            raise ValueError(
                f"got {vals.shape[0]} samples for a K={basis.grid.size} design grid")
    elif vals.shape[-1] != basis.grid.size:
        raise ValueError(
            f"got {vals.shape[-1]} samples for a K={basis.grid.size} design grid")
    # project onto the orthonormal columns, then revert the orthonormalization
    c_ortho = vals @ basis.orthonormal
    c = c_ortho @ basis.gram_inv_sqrt
    return c * kappa ** (-basis.degrees.astype(float))


def reconstruct_on_grid(coeffs, basis: DesignBasis, kappa: float) -> np.ndarray:
    """Evaluate an expansion back on the design sphere samples (unit test aid)."""
    c = np.asarray(coeffs, dtype=float) * kappa ** basis.degrees.astype(float)
    return basis.design_matrix @ c


@dataclass
class ExpansionSet:
    """Per (well, step, electrode) multipole coefficients along a path.

    ``dc_coeffs`` has shape ``(W, T, N, B)`` and ``rf_coeffs`` ``(W, T, B)``;
    coefficients are expressed in each support point's local frame, with
    physical units V/m^l per applied volt.
    """

    order: int
    grid_size: int
    kappa: float
    dc_coeffs: np.ndarray
    rf_coeffs: np.ndarray
    positions: np.ndarray      # (W, T, 3)
    rotations: np.ndarray      # (W, T, 3, 3)
    meta: dict = field(default_factory=dict)

    @property
    def n_wells(self) -> int:
        return self.dc_coeffs.shape[0]

    @property
    def n_steps(self) -> int:
        return self.dc_coeffs.shape[1]

    @property
    def n_electrodes(self) -> int:
        return self.dc_coeffs.shape[2]

    def frame(self, w: int, t: int) -> LocalFrame:
        return LocalFrame(self.positions[w, t], self.rotations[w, t], self.kappa)


def expand_along_path(trap: TrapModel, path, order: int, K: int,
                      kappa: float | None = None) -> ExpansionSet:
    """Expand every dc electrode and the rf electrode at every support point.

    ``path`` is a :class:`shuttlekit.path.ShuttlingPath`. The default sphere
    radius is ``1e-2`` times the trap's characteristic length. In total this
    queries the backends on ``K * W * T * (N + 1)`` points.
    """
    if kappa is None:
        kappa = 1e-2 * trap.characteristic_length
    grid = fibonacci_grid(K)
    basis = build_design_basis(order, grid)
    W, T = path.n_wells, path.n_steps
    N = trap.n_dc
    B = basis.size
    dc = np.empty((W, T, N, B))
    rf = np.empty((W, T, B))
    electrodes = list(trap.dc_electrodes) + [trap.rf_electrode]
    for w in range(W):
        for t in range(T):
            frame = LocalFrame(path.positions[w, t], path.rotations[w, t], kappa)
            pts = transform_design_points(frame, grid)
            for n, electrode in enumerate(electrodes):
                try:
                    vals = electrode.potential(pts)
                except Exception as exc:
                    label = "rf" if n == N else f"dc[{n}]"
                    raise type(exc)(
                        f"backend evaluation failed at well {w}, step {t}, "
                        f"electrode {label}: {exc}") from exc
                c = expand_potential(vals, basis, kappa)
                if n == N:
                    rf[w, t] = c
                else:
                    dc[w, t, n] = c
    return ExpansionSet(order=order, grid_size=K, kappa=kappa,
                        dc_coeffs=dc, rf_coeffs=rf,
                        positions=path.positions.copy(),
                        rotations=path.rotations.copy())


def expansion_cache_key(trap: TrapModel, path, order: int, K: int, kappa: float) -> str:
    """Stable key for an expansion cache entry."""
    h = hashlib.sha256()
    h.update(json.dumps(trap.to_dict(), sort_keys=True).encode())
    h.update(path.positions.tobytes())
    h.update(path.rotations.tobytes())
    h.update(f"L={order};K={K};kappa={kappa!r}".encode())
    return h.hexdigest()[:32]


def save_expansion_set(es: ExpansionSet, path) -> None:
    """Write an expansion cache file; arrays round-trip bit exactly."""
    header = json.dumps({"order": es.order, "grid_size": es.grid_size,
                         "kappa": es.kappa, "meta": es.meta})
    np.savez(path, header=np.frombuffer(header.encode(), dtype=np.uint8),
             dc_coeffs=es.dc_coeffs, rf_coeffs=es.rf_coeffs,
             positions=es.positions, rotations=es.rotations)


def load_expansion_set(path) -> ExpansionSet:
    with np.load(path) as data:
        header = json.loads(bytes(data["header"].tobytes()).decode())
        return ExpansionSet(order=int(header["order"]),
                            grid_size=int(header["grid_size"]),
                            kappa=float(header["kappa"]),
                            dc_coeffs=data["dc_coeffs"],
                            rf_coeffs=data["rf_coeffs"],
                            positions=data["positions"],
                            rotations=data["rotations"],
                            meta=header.get("meta", {}))
