"""Validity criteria for the pseudopotential approximation, and rf-noise heating.

Wells positioned off the rf null carry driven micromotion of amplitude
``r_mu = Q V_rf |e_rf| / (m Omega^2)``. Superposing static and ponderomotive
forces then remains legitimate only while the micromotion stays small against
the length scales on which the fields vary, the static force stays weak
against the rf force, and the transport velocity stays below the micromotion
velocity scale. Each criterion is reported as a dimensionless ratio that
should stay well below one; ratios with vanishing denominators are flagged and
count as trivially passing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.constants import hbar

__all__ = [
    "CriteriaResult",
    "ValidityReport",
    "micromotion_amplitude",
    "gradient_of_field_norm",
    "check_criteria",
    "heating_rate",
    "validity_report",
]

CRITERIA = ("micromotion_vs_dc_scale", "micromotion_vs_rf_scale",
            "dc_force_vs_rf_force", "well_velocity_vs_micromotion")


def micromotion_amplitude(e_rf, trap) -> float:
    """Micromotion amplitude ``r_mu = Q V_rf |e_rf| / (m Omega^2)`` [m]."""
    return (trap.charge * trap.v_rf * np.linalg.norm(e_rf)
            / (trap.mass * trap.omega ** 2))


def gradient_of_field_norm(field, hessian_of_potential) -> float:
    """``| grad |E| | = sqrt(E H^2 E) / |E|`` for ``E = -grad phi``.

    Returns 0 for a vanishing field (degenerate case, flagged by the caller).
    """
    E = np.asarray(field, dtype=float)
    n = np.linalg.norm(E)
    if n == 0.0:
        return 0.0
    H = np.asarray(hessian_of_potential, dtype=float)
    return float(np.sqrt(E @ (H @ (H @ E))) / n)


@dataclass
class CriteriaResult:
    """Four criterion ratios with pass flags and degeneracy markers."""

    r_mu: float
    ratios: np.ndarray        # (4,)
    passed: np.ndarray        # (4,) bool
    degenerate: np.ndarray    # (4,) bool, trivially passing entries
    threshold: float

    def all_passed(self) -> bool:
        return bool(self.passed.all())


def check_criteria(e_dc, h_dc, e_rf, h_rf, trap, well_velocity: float = 0.0,
                   omega_min: float = 0.0, threshold: float = 0.1,
                   field_floor: float = 1e-6) -> CriteriaResult:
    """Evaluate the four pseudopotential validity ratios at one support point.

    Inputs are the unit-scaled dc field/Hessian already multiplied by the
    applied voltages (``E_dc`` in V/m, ``H_dc`` in V/m^2) and the rf unit
    field/Hessian (per volt). ``well_velocity`` is the transport speed [m/s]
    and ``omega_min`` the minimum secular frequency [rad/s]; both only enter
    the fourth ratio. Field magnitudes below ``field_floor`` [V/m] count as
    vanishing denominators (a micro-volt-per-meter default separates genuine
    rf-null points from rounding residue of the expansion).
    """
    e_dc = np.asarray(e_dc, dtype=float)
    r_mu = micromotion_amplitude(e_rf, trap)
    e_dc_norm = np.linalg.norm(e_dc)
    e_rf_norm = trap.v_rf * np.linalg.norm(e_rf)
    on_null = e_rf_norm < field_floor

    ratios = np.zeros(4)
    degenerate = np.zeros(4, dtype=bool)

    grad_dc = gradient_of_field_norm(e_dc, h_dc)
    if e_dc_norm < field_floor:
        degenerate[0] = True
    else:
        ratios[0] = r_mu * grad_dc / e_dc_norm

    grad_rf = gradient_of_field_norm(e_rf, h_rf)   # per volt; V_rf cancels in the ratio
    if on_null:
        degenerate[1] = True
    else:
        ratios[1] = r_mu * grad_rf / np.linalg.norm(e_rf)

    if on_null:
        # no micromotion to perturb; the dc-kick criterion is moot
        degenerate[2] = True
    else:
        ratios[2] = e_dc_norm / e_rf_norm

    if on_null or omega_min <= 0.0:
        degenerate[3] = True
    else:
        ratios[3] = abs(well_velocity) / (omega_min * r_mu)

    passed = degenerate | (ratios < threshold)
    return CriteriaResult(r_mu=float(r_mu), ratios=ratios, passed=passed,
                          degenerate=degenerate, threshold=threshold)


def heating_rate(grad_phi_rf_u: float, omega_u: float, noise_density: float,
                 trap) -> float:
    """Phonons per second from rf voltage noise at ``Omega + omega_u``.

    ``ndot_u = Q^2 / (4 m hbar w_u) (d_u Phi_rf)^2 S_V(Omega + w_u) / V_rf^2``
    with the pseudopotential slope ``d_u Phi_rf`` in V/m and the voltage noise
    spectral density in V^2/Hz.
    """
    if omega_u <= 0:
        raise ValueError("omega_u must be positive")
    if noise_density < 0:
        raise ValueError("noise density must be nonnegative")
    return (trap.charge ** 2 / (4.0 * trap.mass * hbar * omega_u)
            * grad_phi_rf_u ** 2 * noise_density / trap.v_rf ** 2)


@dataclass
class ValidityReport:
    """Per-step validity ratios and optional heating rates along a path."""

    r_mu: np.ndarray            # (W, T)
    ratios: np.ndarray          # (W, T, 4)
    passed: np.ndarray          # (W, T, 4) bool
    degenerate: np.ndarray      # (W, T, 4) bool
    threshold: float
    heating: np.ndarray | None = None   # (W, T, 3) [quanta/s]

    def all_passed(self) -> bool:
        return bool(self.passed.all())

    def to_dict(self) -> dict:
        out = {
            "criteria": list(CRITERIA),
            "threshold": self.threshold,
            "r_mu": self.r_mu.tolist(),
            "ratios": self.ratios.tolist(),
            "passed": self.passed.tolist(),
            "degenerate": self.degenerate.tolist(),
        }
        if self.heating is not None:
            out["heating_quanta_per_s"] = self.heating.tolist()
        return out


def validity_report(solution, expansions, path, trap, threshold: float = 0.1,
                    well_velocities=None, noise_density: float | None = None,
                    field_floor: float = 1e-6) -> ValidityReport:
    """Evaluate the criteria at every support point of a solved path.

    ``well_velocities`` is an optional ``(W, T)`` array of transport speeds
    [m/s]; without it the velocity criterion is reported as degenerate. With
    ``noise_density`` [V^2/Hz] given, rf-noise heating rates are included
    using the reference frequencies.
    """
    from .confinement import field_from_coeffs, hessian_from_coeffs, ponderomotive_field

    W, T = path.n_wells, path.n_steps
    V = solution.voltages
    r_mu = np.zeros((W, T))
    ratios = np.zeros((W, T, 4))
    passed = np.zeros((W, T, 4), dtype=bool)
    degen = np.zeros((W, T, 4), dtype=bool)
    heating = np.zeros((W, T, 3)) if noise_density is not None else None
    for w in range(W):
        for t in range(T):
            e_dc_unit = field_from_coeffs(expansions.dc_coeffs[w, t])
            h_dc_unit = hessian_from_coeffs(expansions.dc_coeffs[w, t])
            E_dc = np.einsum("n,ns->s", V[:, t], e_dc_unit)
            H_dc = np.einsum("n,nrs->rs", V[:, t], h_dc_unit)
            e_rf = field_from_coeffs(expansions.rf_coeffs[w, t])
            h_rf = hessian_from_coeffs(expansions.rf_coeffs[w, t])
            vel = 0.0 if well_velocities is None else float(well_velocities[w][t])
            res = check_criteria(E_dc, H_dc, e_rf, h_rf, trap,
                                 well_velocity=vel,
                                 omega_min=float(path.omega_ref[w, t].min()),
                                 threshold=threshold, field_floor=field_floor)
            r_mu[w, t] = res.r_mu
            ratios[w, t] = res.ratios
            passed[w, t] = res.passed
            degen[w, t] = res.degenerate
            if heating is not None:
                E_rf = ponderomotive_field(expansions.rf_coeffs[w, t], trap.alpha_rf)
                for u in range(3):
                    heating[w, t, u] = heating_rate(
                        -E_rf[u], path.omega_ref[w, t, u], noise_density, trap)
    return ValidityReport(r_mu=r_mu, ratios=ratios, passed=passed,
                          degenerate=degen, threshold=threshold, heating=heating)
