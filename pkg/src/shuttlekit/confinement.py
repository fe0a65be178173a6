"""Fields, Hessians, ponderomotive quantities and secular modes from expansion
coefficients.

Ponderomotive forces are reported as effective electric fields (V/m) and
effective Hessians (V/m^2) so they can be treated on the same footing as the
electrostatic quantities; conversion to mechanical units happens only in the
dynamics and validity modules.

The effective rf field is computed as ``alpha_rf * h_rf @ e_rf``, which is the
exact gradient of the pseudopotential for a harmonic unit potential and is
therefore consistent with the coefficient conventions of
:mod:`shuttlekit.harmonics` by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .harmonics import GRAD_L1, HESS_L2, THIRD_L3

__all__ = [
    "ConfinementPoint",
    "SecularModes",
    "field_from_coeffs",
    "hessian_from_coeffs",
    "ponderomotive_field",
    "ponderomotive_hessian",
    "total_field_and_hessian",
    "secular_modes",
    "match_mode_order",
    "mathieu_parameters",
    "confinement_point",
]


def field_from_coeffs(c) -> np.ndarray:
    """Unit electric field from the l=1 coefficients, ``e = -grad phi`` [1/m].

    Accepts a single coefficient vector or any stacked array where the last
    axis indexes the coefficients (length >= 4).
    """
    c = np.asarray(c, dtype=float)
    return -np.einsum("...i,is->...s", c[..., 1:4], GRAD_L1)


def hessian_from_coeffs(c) -> np.ndarray:
    """Unit potential Hessian from the five l=2 coefficients [1/m^2]."""
    c = np.asarray(c, dtype=float)
    return np.einsum("...i,irs->...rs", c[..., 4:9], HESS_L2)


def ponderomotive_field(c_rf, alpha_rf: float) -> np.ndarray:
    """Effective rf field ``E_rf = alpha_rf h_rf e_rf`` [V/m]."""
    e = field_from_coeffs(c_rf)
    h = hessian_from_coeffs(c_rf)
    return alpha_rf * np.einsum("...rs,...s->...r", h, e)


def ponderomotive_hessian(c_rf, alpha_rf: float, include_b: bool = True):
    """Two parts of the pseudopotential Hessian [V/m^2].

    Part a is ``alpha_rf h_rf^2`` (symmetric positive semidefinite); part b is
    ``alpha_rf (grad phi . grad) h_rf = -alpha_rf (e_rf . grad) h_rf``, built
    from the l=3 coefficients, and vanishes wherever the rf field is zero.
    The sign follows from differentiating the pseudopotential twice and is
    pinned by the finite-difference oracle tests.

    Returns ``(part_a, part_b)``; ``include_b=False`` returns a zero part b
    without requiring l=3 coefficients.
    """
    c = np.asarray(c_rf, dtype=float)
    h = hessian_from_coeffs(c)
    part_a = alpha_rf * np.einsum("...rk,...ks->...rs", h, h)
    if not include_b:
        return part_a, np.zeros_like(part_a)
    if c.shape[-1] < 16:
        raise ValueError(
            "part b of the ponderomotive Hessian needs coefficients through "
            f"l=3 (16 entries); got {c.shape[-1]}")
    e = field_from_coeffs(c)
    grad_h = np.einsum("...j,jtrs->...trs", c[..., 9:16], THIRD_L3)
    part_b = -alpha_rf * np.einsum("...t,...trs->...rs", e, grad_h)
    return part_a, part_b


@dataclass
class ConfinementPoint:
    """Per-electrode unit quantities plus rf quantities at one support point.

    All tensors are expressed in the support point's local frame: ``e_dc``
    has shape ``(N, 3)`` [1/m], ``h_dc`` shape ``(N, 3, 3)`` [1/m^2];
    ``field_rf`` is the effective ponderomotive field [V/m] and
    ``hessian_rf_a/b`` the two parts of the ponderomotive Hessian [V/m^2].
    """

    e_dc: np.ndarray
    h_dc: np.ndarray
    e_rf: np.ndarray
    h_rf: np.ndarray
    field_rf: np.ndarray
    hessian_rf_a: np.ndarray
    hessian_rf_b: np.ndarray

    @property
    def hessian_rf(self) -> np.ndarray:
        return self.hessian_rf_a + self.hessian_rf_b


def confinement_point(expansions, trap, w: int, t: int) -> ConfinementPoint:
    """Assemble the confinement quantities for well ``w`` at step ``t``.

    With expansions truncated below l=3 the rf Hessian part b is taken as
    zero, which is exact on the rf null.
    """
    c_dc = expansions.dc_coeffs[w, t]
    c_rf = expansions.rf_coeffs[w, t]
    alpha = trap.alpha_rf
    include_b = c_rf.shape[-1] >= 16
    part_a, part_b = ponderomotive_hessian(c_rf, alpha, include_b=include_b)
    return ConfinementPoint(
        e_dc=field_from_coeffs(c_dc),
        h_dc=hessian_from_coeffs(c_dc),
        e_rf=field_from_coeffs(c_rf),
        h_rf=hessian_from_coeffs(c_rf),
        field_rf=ponderomotive_field(c_rf, alpha),
        hessian_rf_a=part_a,
        hessian_rf_b=part_b,
    )


def total_field_and_hessian(point: ConfinementPoint, voltages):
    """Total effective field and Hessian for a dc voltage set.

    ``E = E_rf + sum_n V_n e_n`` [V/m], ``H = H_rf + sum_n V_n h_n`` [V/m^2].
    """
    v = np.asarray(voltages, dtype=float)
    if v.shape[0] != point.e_dc.shape[0]:
        raise ValueError(f"got {v.shape[0]} voltages for {point.e_dc.shape[0]} electrodes")
    E = point.field_rf + np.einsum("n,ns->s", v, point.e_dc)
    H = point.hessian_rf + np.einsum("n,nrs->rs", v, point.h_dc)
    return E, H


@dataclass
class SecularModes:
    """Secular frequencies and mode axes of a total Hessian.

    ``axes[:, u]`` is the unit eigenvector of mode ``u``; modes are sorted by
    ascending eigenvalue and each eigenvector's first nonzero component is
    made positive so the decomposition is deterministic. ``omegas`` holds
    ``sqrt(lambda Q / m)`` for stable modes and 0 for unstable ones, with the
    raw eigenvalues kept alongside.
    """

    omegas: np.ndarray        # (3,) [rad/s]
    axes: np.ndarray          # (3, 3), columns are eigenvectors
    stable: np.ndarray        # (3,) bool
    eigenvalues: np.ndarray   # (3,) [V/m^2]


def secular_modes(H, charge: float, mass: float, sym_tol: float = 1e-9) -> SecularModes:
    """Eigendecompose a total Hessian into secular modes, ``w^2 = lambda Q/m``."""
    H = np.asarray(H, dtype=float)
    scale = max(np.abs(H).max(), 1.0)
    if np.abs(H - H.T).max() > sym_tol * scale:
        raise ValueError("Hessian is not symmetric within tolerance")
    evals, evecs = np.linalg.eigh(0.5 * (H + H.T))
    order = np.argsort(evals)
    evals, evecs = evals[order], evecs[:, order]
    for u in range(3):
        v = evecs[:, u]
        nz = np.argmax(np.abs(v) > 1e-8)
        if v[nz] < 0:
            evecs[:, u] = -v
    stable = evals > 0
    omegas = np.sqrt(np.clip(evals, 0.0, None) * charge / mass)
    return SecularModes(omegas=omegas, axes=evecs, stable=stable, eigenvalues=evals)


def match_mode_order(reference_axes, modes: SecularModes) -> SecularModes:
    """Reorder modes to maximally overlap a reference axis set.

    Used for mode tracking along a path so adjacent steps keep a consistent
    axis labeling even when eigenvalues cross.
    """
    overlap = np.abs(reference_axes.T @ modes.axes)   # (3 ref, 3 new)
    perm = np.full(3, -1)
    taken = np.zeros(3, dtype=bool)
    for _ in range(3):
        i, j = np.unravel_index(np.argmax(np.where(taken[None, :], -1.0, overlap)), (3, 3))
        overlap[i, :] = -1.0
        taken[j] = True
        perm[i] = j
    return SecularModes(omegas=modes.omegas[perm], axes=modes.axes[:, perm],
                        stable=modes.stable[perm], eigenvalues=modes.eigenvalues[perm])


def mathieu_parameters(c_dc: float, c_rf: float, r_tilde: float, trap, v_dc: float):
    """Mathieu coefficients of the equivalent ideal-trap description.

    ``a = 8 Q V_dc c_dc / (m r~^2 Omega^2)``,
    ``q = 4 Q V_rf c_rf / (m r~^2 Omega^2)``, and the lowest-order secular
    frequency ``w = (Omega/2) sqrt(a + q^2/2)``.
    """
    if r_tilde <= 0:
        raise ValueError("r_tilde must be positive")
    denom = trap.mass * r_tilde ** 2 * trap.omega ** 2
    a = 8.0 * trap.charge * v_dc * c_dc / denom
    q = 4.0 * trap.charge * trap.v_rf * c_rf / denom
    omega = 0.5 * trap.omega * np.sqrt(a + 0.5 * q * q)
    return a, q, omega
