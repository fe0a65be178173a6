"""Classical point-mass simulation of ion motion under voltage waveforms.

Trajectories are integrated with velocity Verlet. The trap potential enters
through interpolants of the expansion-derived quantities along the shuttling
path: per-electrode unit fields and Hessians (dc content through l=2) and the
effective rf field and Hessian (rf content through l=3), all rotated to the
trap frame at the support points. The acceleration at a position ``r`` uses
the quantities at the nearest path point ``r_p`` and is first order in the
offset ``r_d = r - r_p``:

    (m/Q) a = E_rf - H_rf r_d + sum_n V_n(t) (e_n - h_n r_d)

An rf-resolved mode replaces the ponderomotive terms by the oscillating rf
force ``V_rf (e_rf - h_rf r_d) cos(Omega t + phase)`` for checking the
pseudopotential approximation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.constants import epsilon_0, hbar
from scipy.interpolate import CubicSpline

from .confinement import ponderomotive_field, ponderomotive_hessian, secular_modes
from .confinement import field_from_coeffs, hessian_from_coeffs

__all__ = [
    "OutOfDomainError",
    "SimulationState",
    "FieldInterpolant",
    "acceleration",
    "acceleration_rf_resolved",
    "verlet_run",
    "ExcitationReport",
    "trajectory_to_csv",
]


class OutOfDomainError(RuntimeError):
    """Ion position left the validity region of the path-local expansion."""


@dataclass
class SimulationState:
    """Positions and velocities of one or more ions."""

    positions: np.ndarray   # (n_ions, 3) [m]
    velocities: np.ndarray  # (n_ions, 3) [m/s]
    time: float = 0.0

    def __post_init__(self):
        self.positions = np.atleast_2d(np.asarray(self.positions, dtype=float))
        self.velocities = np.atleast_2d(np.asarray(self.velocities, dtype=float))
        if self.positions.shape != self.velocities.shape or self.positions.shape[0] < 1:
            raise ValueError("need matching (n_ions, 3) positions and velocities")

    @property
    def n_ions(self) -> int:
        return self.positions.shape[0]


class FieldInterpolant:
    """Splines of the trap-frame field quantities along a shuttling path.

    Built from an expansion set for one well. dc unit fields/Hessians and the
    rf quantities are rotated from the local frames to the trap frame at each
    support point, then interpolated over the path arc length. Voltage
    channels are interpolated over real time scaled to the total duration.
    """

    def __init__(self, expansions, trap, waveform, total_time: float, well: int = 0):
        pos = expansions.positions[well]       # (T, 3)
        rot = expansions.rotations[well]       # (T, 3, 3)
        c_dc = expansions.dc_coeffs[well]
        c_rf = expansions.rf_coeffs[well]
        alpha = trap.alpha_rf
        self.trap = trap
        self.total_time = float(total_time)

        e_loc = field_from_coeffs(c_dc)                     # (T, N, 3)
        h_loc = hessian_from_coeffs(c_dc)                   # (T, N, 3, 3)
        erf_loc = field_from_coeffs(c_rf)
        hrf_loc = hessian_from_coeffs(c_rf)
        Erf_loc = ponderomotive_field(c_rf, alpha)
        include_b = c_rf.shape[-1] >= 16
        Ha, Hb = ponderomotive_hessian(c_rf, alpha, include_b=include_b)
        Hrf_loc = Ha + Hb

        def vec(Rt, v):
            return np.einsum("trs,t...s->t...r", Rt, v)

        def mat(Rt, m):
            return np.einsum("tru,t...uv,tsv->t...rs", Rt, m, Rt)

        data = {
            "e_dc": vec(rot, e_loc),
            "h_dc": mat(rot, h_loc),
            "e_rf": vec(rot, erf_loc),
            "h_rf": mat(rot, hrf_loc),
            "field_rf": vec(rot, Erf_loc),
            "hessian_rf": mat(rot, Hrf_loc),
        }

        seg = np.linalg.norm(np.diff(pos, axis=0), axis=1)
        s = np.concatenate([[0.0], np.cumsum(seg)])
        self.path_length = float(s[-1])
        self.static = self.path_length < 1e-15 or pos.shape[0] < 2
        if self.static:
            self._const = {k: v[0] for k, v in data.items()}
            self._const["position"] = pos[0]
        else:
            # collapse coincident support points so the knot vector increases
            keep = np.concatenate([[True], seg > 0])
            s = s[keep]
            self._pos_spline = CubicSpline(s, pos[keep], axis=0, bc_type="natural")
            self._splines = {k: CubicSpline(s, v[keep], axis=0, bc_type="natural")
                             for k, v in data.items()}

        samples = waveform.samples if hasattr(waveform, "samples") else np.atleast_2d(waveform)
        M = samples.shape[1]
        times = (np.arange(M) + 0.5) / M * self.total_time
        self._v_spline = CubicSpline(times, samples, axis=1, bc_type="natural")
        self._t_lo, self._t_hi = times[0], times[-1]
        self._v_lo, self._v_hi = samples[:, 0], samples[:, -1]

    def voltages(self, t: float) -> np.ndarray:
        if t <= self._t_lo:
            return self._v_lo
        if t >= self._t_hi:
            return self._v_hi
        return self._v_spline(t)

    def path_point(self, s: float) -> np.ndarray:
        if self.static:
            return self._const["position"]
        return self._pos_spline(np.clip(s, 0.0, self.path_length))

    def project(self, r, s_guess: float) -> float:
        """Arc-length parameter of the nearest path point.

        Newton iteration on the stationarity of the squared distance, seeded
        with the previous step's parameter and clamped to the path range.
        """
        if self.static:
            return 0.0
        s = np.clip(s_guess, 0.0, self.path_length)
        for _ in range(20):
            p = self._pos_spline(s)
            dp = self._pos_spline(s, 1)
            ddp = self._pos_spline(s, 2)
            diff = np.asarray(r) - p
            g = -2.0 * diff @ dp
            gg = 2.0 * (dp @ dp - diff @ ddp)
            if gg <= 0:
                break
            step = -g / gg
            s_new = np.clip(s + step, 0.0, self.path_length)
            if abs(s_new - s) < 1e-15 * max(self.path_length, 1.0):
                s = s_new
                break
            s = s_new
        return float(s)

    def fields_at(self, s: float) -> dict:
        if self.static:
            return self._const
        sc = np.clip(s, 0.0, self.path_length)
        return {k: sp(sc) for k, sp in self._splines.items()}


def _dc_acceleration(fields, volts, r_d, charge, mass):
    e_eff = fields["e_dc"] - np.einsum("nrs,s->nr", fields["h_dc"], r_d)
    return (charge / mass) * np.einsum("n,nr->r", volts, e_eff)


def acceleration(r, t, interp: FieldInterpolant, s_guess: float = 0.0,
                 max_distance: float | None = None):
    """Pseudopotential-mode acceleration at position ``r`` and time ``t``.

    Returns ``(a, s)`` with the updated path parameter. ``max_distance``
    bounds the allowed offset from the path.
    """
    trap = interp.trap
    s = interp.project(r, s_guess)
    r_d = np.asarray(r, dtype=float) - interp.path_point(s)
    if max_distance is not None and np.linalg.norm(r_d) > max_distance:
        raise OutOfDomainError(
            f"position {r} is {np.linalg.norm(r_d):.3e} m from the path "
            f"(limit {max_distance:.3e} m) at t={t:.3e} s")
    f = interp.fields_at(s)
    a = (trap.charge / trap.mass) * (f["field_rf"] - f["hessian_rf"] @ r_d)
    a += _dc_acceleration(f, interp.voltages(t), r_d, trap.charge, trap.mass)
    return a, s


def acceleration_rf_resolved(r, t, interp: FieldInterpolant, rf_phase: float = 0.0,
                             s_guess: float = 0.0, max_distance: float | None = None):
    """Acceleration with the rf drive resolved in time instead of averaged."""
    trap = interp.trap
    s = interp.project(r, s_guess)
    r_d = np.asarray(r, dtype=float) - interp.path_point(s)
    if max_distance is not None and np.linalg.norm(r_d) > max_distance:
        raise OutOfDomainError(
            f"position {r} is {np.linalg.norm(r_d):.3e} m from the path "
            f"(limit {max_distance:.3e} m) at t={t:.3e} s")
    f = interp.fields_at(s)
    drive = trap.v_rf * (f["e_rf"] - f["h_rf"] @ r_d) * np.cos(trap.omega * t + rf_phase)
    a = (trap.charge / trap.mass) * drive
    a += _dc_acceleration(f, interp.voltages(t), r_d, trap.charge, trap.mass)
    return a, s


@dataclass
class ExcitationReport:
    """Residual motional excitation per mode after a run."""

    omegas: np.ndarray          # (3,) [rad/s]
    energies: np.ndarray        # (n_ions, 3) [J]
    quanta: np.ndarray          # (n_ions, 3)
    max_path_offset: float      # [m]

    def to_dict(self) -> dict:
        return {"omegas": self.omegas.tolist(),
                "energies": self.energies.tolist(),
                "quanta": self.quanta.tolist(),
                "max_path_offset": self.max_path_offset}


def _total_hessian_at(interp, s, volts):
    f = interp.fields_at(s)
    return f["hessian_rf"] + np.einsum("n,nrs->rs", volts, f["h_dc"])


def _total_field_at(interp, s, volts):
    f = interp.fields_at(s)
    return f["field_rf"] + np.einsum("n,nr->r", volts, f["e_dc"])


def verlet_run(initial: SimulationState, interp: FieldInterpolant,
               duration: float, dt: float, mode: str = "pseudo",
               rf_phase: float = 0.0, coulomb: bool = False,
               record_every: int = 1, max_distance: float | None = None):
    """Velocity Verlet integration over ``duration`` seconds.

    ``mode`` is ``"pseudo"`` (ponderomotive terms time averaged) or ``"rf"``
    (drive resolved). The time step must satisfy ``dt <= T_sec/20`` of the
    fastest initial secular period in pseudopotential mode, or
    ``dt <= T_drive/50`` in rf-resolved mode. Returns
    ``(trajectory, report)`` where the trajectory dict holds decimated
    ``times``, ``positions`` and ``velocities`` arrays.
    """
    trap = interp.trap
    state = SimulationState(initial.positions.copy(), initial.velocities.copy(),
                            initial.time)
    volts0 = interp.voltages(state.time)
    s0 = interp.project(state.positions[0], 0.0)
    modes0 = secular_modes(_total_hessian_at(interp, s0, volts0), trap.charge, trap.mass)
    omega_max = modes0.omegas.max()
    if mode == "pseudo":
        limit = (2.0 * np.pi / omega_max) / 20.0 if omega_max > 0 else np.inf
    elif mode == "rf":
        limit = (2.0 * np.pi / trap.omega) / 50.0
    else:
        raise ValueError(f"unknown simulation mode {mode!r}")
    if dt > limit:
        raise ValueError(f"time step {dt:.3e} s exceeds the stability "
                         f"precondition {limit:.3e} s for mode {mode!r}")

    accel = acceleration if mode == "pseudo" else (
        lambda r, t, itp, s_guess=0.0, max_distance=None:
        acceleration_rf_resolved(r, t, itp, rf_phase, s_guess, max_distance))

    n_steps = int(np.ceil(duration / dt))
    n_ions = state.n_ions
    s_par = np.full(n_ions, s0)
    acc = np.zeros((n_ions, 3))
    max_offset = 0.0

    def _coulomb(pos):
        if not coulomb or n_ions == 1:
            return 0.0
        d = pos[:, None, :] - pos[None, :, :]
        dist = np.linalg.norm(d, axis=-1)
        np.fill_diagonal(dist, np.inf)
        pref = trap.charge ** 2 / (4.0 * np.pi * epsilon_0 * trap.mass)
        return pref * np.sum(d / dist[..., None] ** 3, axis=1)

    for i in range(n_ions):
        acc[i], s_par[i] = accel(state.positions[i], state.time, interp,
                                 s_guess=s_par[i], max_distance=max_distance)
    acc += _coulomb(state.positions)

    times = [state.time]
    traj_pos = [state.positions.copy()]
    traj_vel = [state.velocities.copy()]
    for step in range(1, n_steps + 1):
        state.velocities += 0.5 * dt * acc
        state.positions += dt * state.velocities
        state.time += dt
        for i in range(n_ions):
            acc[i], s_par[i] = accel(state.positions[i], state.time, interp,
                                     s_guess=s_par[i], max_distance=max_distance)
            off = np.linalg.norm(state.positions[i] - interp.path_point(s_par[i]))
            max_offset = max(max_offset, off)
        acc += _coulomb(state.positions)
        state.velocities += 0.5 * dt * acc
        if step % record_every == 0 or step == n_steps:
            times.append(state.time)
            traj_pos.append(state.positions.copy())
            traj_vel.append(state.velocities.copy())

    trajectory = {"times": np.asarray(times),
                  "positions": np.asarray(traj_pos),
                  "velocities": np.asarray(traj_vel)}
    report = _excitation_report(state, interp, max_offset)
    return trajectory, report


def _excitation_report(state, interp, max_offset):
    """Mode energies relative to the final-step well."""
    trap = interp.trap
    volts = interp.voltages(state.time)
    s_end = interp.path_length if not interp.static else 0.0
    H = _total_hessian_at(interp, s_end, volts)
    E = _total_field_at(interp, s_end, volts)
    modes = secular_modes(H, trap.charge, trap.mass)
    # actual equilibrium: E(r) ~ E(r_p) - H (r - r_p) = 0
    r_eq = interp.path_point(s_end) + np.linalg.solve(H, E)
    energies = np.zeros((state.n_ions, 3))
    quanta = np.zeros((state.n_ions, 3))
    for i in range(state.n_ions):
        dx = modes.axes.T @ (state.positions[i] - r_eq)
        dv = modes.axes.T @ state.velocities[i]
        for u in range(3):
            if not modes.stable[u]:
                energies[i, u] = np.nan
                quanta[i, u] = np.nan
                continue
            w = modes.omegas[u]
            energies[i, u] = 0.5 * trap.mass * (dv[u] ** 2 + (w * dx[u]) ** 2)
            quanta[i, u] = energies[i, u] / (hbar * w)
    return ExcitationReport(omegas=modes.omegas, energies=energies,
                            quanta=quanta, max_path_offset=float(max_offset))


def trajectory_to_csv(trajectory: dict, path, decimate: int = 1) -> None:
    """Write ``t, x, y, z, vx, vy, vz`` per ion (columns repeated per ion)."""
    times = trajectory["times"][::decimate]
    pos = trajectory["positions"][::decimate]
    vel = trajectory["velocities"][::decimate]
    n_ions = pos.shape[1]
    cols = [times]
    header = ["t"]
    for i in range(n_ions):
        for label, arr in (("", pos), ("v", vel)):
            for a, ax in enumerate("xyz"):
                cols.append(arr[:, i, a])
                header.append(f"{label}{ax}{i}" if n_ions > 1 else f"{label}{ax}")
    np.savetxt(path, np.column_stack(cols), delimiter=",",
               header=",".join(header), comments="", fmt="%.17g")
