"""Assembly and solution of the shuttling linear system, plus quality metrics.

The total penalty functional (well position, confinement, voltage magnitude,
step-to-step voltage difference, fixed voltage sets) is quadratic in the
voltage samples, so its stationary point is the solution of ``A v = b`` with
``A v - b`` equal to half the functional's gradient. Voltage samples are
flattened as ``index(n, t) = t N + n``, which makes ``A`` symmetric band
diagonal with half-bandwidth ``2N - 1``: only adjacent sequence steps couple,
through the voltage difference penalty.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sparse
from scipy.linalg import solveh_banded

from .confinement import (confinement_point, field_from_coeffs, hessian_from_coeffs,
                          match_mode_order, ponderomotive_field, ponderomotive_hessian,
                          secular_modes, total_field_and_hessian)
from .path import PenaltyWeights, ShuttlingPath, target_hessians

__all__ = [
    "AssemblyError",
    "SolverError",
    "LinearSystem",
    "VoltageSolution",
    "SolutionMetrics",
    "assemble_system",
    "solve_system",
    "analyze_solution",
    "penalty_breakdown",
    "solution_to_csv",
    "solution_from_csv",
    "metrics_to_json",
]


class AssemblyError(ValueError):
    pass


class SolverError(RuntimeError):
    pass


@dataclass
class LinearSystem:
    """Symmetric banded system in block form.

    ``diag_blocks[t]`` is the dense ``N x N`` block coupling voltages within
    step ``t``; consecutive steps couple through ``-w4`` on the electrode
    diagonal. ``b`` is stored as ``(T, N)``.
    """

    n_electrodes: int
    n_steps: int
    diag_blocks: np.ndarray    # (T, N, N)
    w4: float
    b: np.ndarray              # (T, N)

    @property
    def size(self) -> int:
        return self.n_electrodes * self.n_steps

    @property
    def band_halfwidth(self) -> int:
        # adjacent steps couple only electrode-diagonally (difference
        # penalty), so the occupied band is narrower than the 2N-1 block bound
        if self.n_steps > 1 and self.w4 != 0.0:
            return self.n_electrodes
        return self.n_electrodes - 1

    def index(self, n: int, t: int) -> int:
        """Flat index of voltage sample (n, t), 0-based."""
        return t * self.n_electrodes + n

    def to_sparse(self) -> sparse.csr_matrix:
        A = sparse.block_diag(self.diag_blocks, format="csr")
        if self.n_steps > 1 and self.w4 != 0.0:
            N = self.n_electrodes
            off = np.full(self.size - N, -self.w4)
            A = A + sparse.diags([off, off], [N, -N], format="csr")
        return A

    def to_banded_lower(self) -> np.ndarray:
        """LAPACK lower banded storage, ``ab[d, k] = A[k + d, k]``."""
        N, T = self.n_electrodes, self.n_steps
        nbands = min(N + 1 if T > 1 and self.w4 != 0.0 else N, self.size)
        ab = np.zeros((nbands, self.size))
        for t in range(T):
            blk = self.diag_blocks[t]
            for d in range(N):
                cols = np.arange(N - d)
                ab[d, t * N + cols] = blk[cols + d, cols]
            if t + 1 < T and self.w4 != 0.0:
                ab[N, t * N + np.arange(N)] = -self.w4
        return ab


def assemble_system(expansions, path: ShuttlingPath, weights: PenaltyWeights,
                    trap) -> LinearSystem:
    """Populate ``A`` and ``b`` from the expansion set and penalty weights.

    Penalty 1 couples electrodes within a step through the unit fields,
    penalty 2 through the unit Hessians (full double sum over matrix
    entries), penalties 3 and 5 add to the diagonal, and penalty 4 adds the
    discrete-Laplacian stencil along the step index with free boundaries.
    The right-hand side collects the rf field, the rf-vs-target Hessian
    mismatch, and the fixed voltage set terms.
    """
    W, T, N = path.n_wells, path.n_steps, trap.n_dc
    if expansions.dc_coeffs.shape[:3] != (W, T, N):
        raise AssemblyError(
            f"expansion set shape {expansions.dc_coeffs.shape[:3]} does not "
            f"match (W, T, N) = {(W, T, N)}")
    if weights.w3.shape != (N, T) or weights.w5.shape != (N, T):
        raise AssemblyError("penalty weight tables have inconsistent shapes")

    alpha = trap.alpha_rf
    e = field_from_coeffs(expansions.dc_coeffs)            # (W, T, N, 3)
    h = hessian_from_coeffs(expansions.dc_coeffs)          # (W, T, N, 3, 3)
    E_rf = ponderomotive_field(expansions.rf_coeffs, alpha)
    include_b = expansions.rf_coeffs.shape[-1] >= 16
    Ha, Hb = ponderomotive_hessian(expansions.rf_coeffs, alpha, include_b=include_b)
    dH = (Ha + Hb) - target_hessians(path.omega_ref, trap.charge, trap.mass)

    diag = np.einsum("wtu,wtnu,wtmu->tnm", weights.w1, e, e)
    diag += np.einsum("wtuv,wtnuv,wtmuv->tnm", weights.w2, h, h)
    onsite = weights.w3.T + weights.w5.T                   # (T, N)
    if T > 1:
        lap = np.full(T, 2.0)
        lap[0] = lap[-1] = 1.0
        onsite = onsite + weights.w4 * lap[:, None]
    idx = np.arange(N)
    diag[:, idx, idx] += onsite

    b = -np.einsum("wtu,wtnu,wtu->tn", weights.w1, e, E_rf)
    b -= np.einsum("wtuv,wtnuv,wtuv->tn", weights.w2, h, dH)
    b += (weights.w5 * weights.v_hat_table(T)).T

    return LinearSystem(n_electrodes=N, n_steps=T, diag_blocks=diag,
                        w4=float(weights.w4) if T > 1 else 0.0, b=b)


@dataclass
class VoltageSolution:
    """Electrode voltages per sequence step plus solve diagnostics."""

    voltages: np.ndarray       # (N, T)
    residual: float
    method: str
    iterations: int = 0
    penalties: dict = field(default_factory=dict)

    @property
    def n_electrodes(self) -> int:
        return self.voltages.shape[0]

    @property
    def n_steps(self) -> int:
        return self.voltages.shape[1]


def _block_jacobi_apply(chol_blocks, r, N):
    z = r.reshape(-1, N)
    out = np.empty_like(z)
    for t, cf in enumerate(chol_blocks):
        y = np.linalg.solve(cf, z[t])
        out[t] = np.linalg.solve(cf.T, y)
    return out.reshape(-1)


def _pcg(A, b, tol, max_iter, system=None, preconditioner="block"):
    """Preconditioned conjugate gradient on a CSR matrix.

    The default preconditioner inverts the per-step diagonal blocks (block
    Jacobi), which captures the stiff within-step penalty structure; plain
    diagonal Jacobi is available but converges far slower on junction-scale
    systems.
    """
    d = A.diagonal()
    if np.any(d <= 0):
        raise SolverError("system diagonal is not positive; "
                          "enable a nonzero voltage penalty")
    if preconditioner == "block" and system is not None:
        N = system.n_electrodes
        try:
            chols = [np.linalg.cholesky(blk) for blk in system.diag_blocks]
        except np.linalg.LinAlgError:
            chols = None
        if chols is not None:
            apply_m = lambda r: _block_jacobi_apply(chols, r, N)
        else:
            apply_m = lambda r: r / d
    else:
        apply_m = lambda r: r / d
    x = np.zeros_like(b)
    r = b.copy()
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return x, 0, 0.0
    z = apply_m(r)
    p = z.copy()
    rz = r @ z
    for k in range(1, max_iter + 1):
        Ap = A @ p
        alpha = rz / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        res = np.linalg.norm(r) / bnorm
        if res <= tol:
            return x, k, res
        z = apply_m(r)
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverError(
        f"conjugate gradient did not reach tol={tol:g} within {max_iter} "
        f"iterations (final relative residual {res:.3e}, diagonal spread "
        f"{d.max() / d.min():.3e})")


def solve_system(system: LinearSystem, tol: float = 1e-10,
                 max_iter: int | None = None, method: str = "auto",
                 preconditioner: str = "block") -> VoltageSolution:
    """Solve ``A v = b``.

    ``method`` is ``"cg"`` (preconditioned conjugate gradient),
    ``"cholesky"`` (direct banded factorization) or ``"auto"``, which uses the
    direct path for systems up to 5000 unknowns and CG beyond.
    ``preconditioner`` selects ``"block"`` (per-step blocks) or ``"jacobi"``.
    """
    if method == "auto":
        method = "cholesky" if system.size <= 5000 else "cg"
    bflat = system.b.reshape(-1)
    if method == "cg":
        A = system.to_sparse()
        if max_iter is None:
            max_iter = max(1000, 10 * system.size)
        x, iters, res = _pcg(A, bflat, tol, max_iter, system=system,
                             preconditioner=preconditioner)
    elif method == "cholesky":
        ab = system.to_banded_lower()
        try:
            x = solveh_banded(ab, bflat, lower=True)
        except np.linalg.LinAlgError as exc:
            raise SolverError(f"banded Cholesky failed: {exc}") from exc
        iters = 1
        A = system.to_sparse()
        bnorm = np.linalg.norm(bflat)
        res = np.linalg.norm(A @ x - bflat) / bnorm if bnorm else 0.0
    else:
        raise ValueError(f"unknown method {method!r}")
    V = x.reshape(system.n_steps, system.n_electrodes).T
    return VoltageSolution(voltages=V, residual=float(res), method=method,
                           iterations=iters)


def penalty_breakdown(solution: VoltageSolution, expansions, path: ShuttlingPath,
                      weights: PenaltyWeights, trap) -> dict:
    """Evaluate the five penalty terms at the solution voltages."""
    V = solution.voltages
    alpha = trap.alpha_rf
    e = field_from_coeffs(expansions.dc_coeffs)
    h = hessian_from_coeffs(expansions.dc_coeffs)
    E_rf = ponderomotive_field(expansions.rf_coeffs, alpha)
    include_b = expansions.rf_coeffs.shape[-1] >= 16
    Ha, Hb = ponderomotive_hessian(expansions.rf_coeffs, alpha, include_b=include_b)
    H_set = target_hessians(path.omega_ref, trap.charge, trap.mass)
    E = E_rf + np.einsum("nt,wtnu->wtu", V, e)
    H = (Ha + Hb) + np.einsum("nt,wtnuv->wtuv", V, h)
    f1 = float(np.einsum("wtu,wtu->", weights.w1, (E) ** 2))
    f2 = float(np.einsum("wtuv,wtuv->", weights.w2, (H - H_set) ** 2))
    f3 = float(np.sum(weights.w3 * V ** 2))
    f4 = float(weights.w4 * np.sum((V[:, 1:] - V[:, :-1]) ** 2)) if V.shape[1] > 1 else 0.0
    f5 = float(np.sum(weights.w5 * (V - weights.v_hat_table(V.shape[1])) ** 2))
    return {"position": f1, "confinement": f2, "voltage": f3,
            "difference": f4, "fixed_set": f5}


@dataclass
class SolutionMetrics:
    """Per-step quality metrics of a shuttling solution.

    Arrays are shaped ``(W, T, 3)`` in local-frame mode order; ``delta_r`` is
    the residual well displacement [m], ``delta_omega_rel`` the relative
    secular frequency deviation, ``axis_angles`` the principal-axis deviation
    from the frame axes [rad]. Unstable modes are flagged and their
    displacement reported as NaN.
    """

    delta_r: np.ndarray
    delta_omega_rel: np.ndarray
    axis_angles: np.ndarray
    omegas: np.ndarray
    stable: np.ndarray
    max_abs_voltage: float
    max_step_voltage_diff: float

    def to_dict(self) -> dict:
        return {
            "delta_r": self.delta_r.tolist(),
            "delta_omega_rel": self.delta_omega_rel.tolist(),
            "axis_angles": self.axis_angles.tolist(),
            "omegas": self.omegas.tolist(),
            "stable": self.stable.tolist(),
            "max_abs_voltage": self.max_abs_voltage,
            "max_step_voltage_diff": self.max_step_voltage_diff,
        }


def analyze_solution(solution: VoltageSolution, expansions, path: ShuttlingPath,
                     trap) -> SolutionMetrics:
    """Residual forces, frequency deviations and axis tilts along the path.

    The well displacement is ``delta_r_u = Q E_u / (m w_ref,u^2)`` with the
    preset frequencies; modes are matched step to step by maximal axis
    overlap to avoid order swaps in the reported tracks.
    """
    W, T = path.n_wells, path.n_steps
    V = solution.voltages
    delta_r = np.full((W, T, 3), np.nan)
    domega = np.zeros((W, T, 3))
    angles = np.zeros((W, T, 3))
    omegas = np.zeros((W, T, 3))
    stable = np.zeros((W, T, 3), dtype=bool)
    for w in range(W):
        prev_axes = np.eye(3)
        for t in range(T):
            point = confinement_point(expansions, trap, w, t)
            E, H = total_field_and_hessian(point, V[:, t])
            modes = match_mode_order(prev_axes, secular_modes(H, trap.charge, trap.mass))
            prev_axes = modes.axes
            w_ref = path.omega_ref[w, t]
            dr = trap.charge * E / (trap.mass * w_ref ** 2)
            delta_r[w, t] = np.where(modes.stable, dr, np.nan)
            omegas[w, t] = modes.omegas
            stable[w, t] = modes.stable
            domega[w, t] = (modes.omegas - w_ref) / w_ref
            cosang = np.clip(np.abs(np.diag(modes.axes)), -1.0, 1.0)
            angles[w, t] = np.arccos(cosang)
    dV = np.abs(np.diff(V, axis=1)).max() if T > 1 else 0.0
    return SolutionMetrics(delta_r=delta_r, delta_omega_rel=domega,
                           axis_angles=angles, omegas=omegas, stable=stable,
                           max_abs_voltage=float(np.abs(V).max()),
                           max_step_voltage_diff=float(dV))


def solution_to_csv(solution: VoltageSolution, path) -> None:
    """Write the voltage samples as CSV rows ``t, n, V`` (1-based indices)."""
    N, T = solution.n_electrodes, solution.n_steps
    with open(path, "w") as fh:
        fh.write("t, n, V\n")
        for t in range(T):
            for n in range(N):
                fh.write(f"{t + 1}, {n + 1}, {float(solution.voltages[n, t])!r}\n")


def solution_from_csv(path) -> VoltageSolution:
    data = np.genfromtxt(path, delimiter=",", skip_header=1)
    t = data[:, 0].astype(int) - 1
    n = data[:, 1].astype(int) - 1
    V = np.zeros((n.max() + 1, t.max() + 1))
    V[n, t] = data[:, 2]
    return VoltageSolution(voltages=V, residual=float("nan"), method="file")


def metrics_to_json(metrics: SolutionMetrics, path, extra: dict | None = None) -> None:
    payload = metrics.to_dict()
    if extra:
        payload.update(extra)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
