"""Postprocessing of shuttling solutions into time-domain voltage waveforms.

Discrete solutions are interpolated with natural cubic splines, mapped through
a monotone transfer function (a sin^2 sigmoid by default, giving gradual
acceleration and deceleration), resampled, and finally pre-compensated for the
low-pass behavior of the waveform generator and its output filters. The filter
is modeled as a finite impulse response kernel, and the pre-compensation
solves a smoothness-regularized least-squares problem:

    minimize ||v - K vt||^2 + w * sum_i (vt_i - vt_{i-1})^2

whose normal equations ``(K^T K + w W) vt = K^T v`` use the positive
semidefinite second-difference matrix ``W``. The system is positive definite
for any ``w > 0``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import cho_factor, cho_solve

__all__ = [
    "Waveform",
    "FirKernel",
    "interpolate_solution",
    "sigmoid_map",
    "map_and_resample",
    "kernel_from_step_response",
    "build_kernel_matrix",
    "invert_filter",
    "apply_kernel",
    "waveform_to_csv",
    "waveform_from_csv",
    "load_kernel_csv",
]


@dataclass
class Waveform:
    """Time-sampled voltage channels.

    ``samples`` has shape ``(n_channels, n_samples)``; ``sample_period`` is in
    seconds (or 1 for a dimensionless grid).
    """

    samples: np.ndarray
    sample_period: float = 1.0
    channel_ids: list = field(default_factory=list)

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=float))
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("waveform samples must be finite")
        if not self.channel_ids:
            self.channel_ids = list(range(self.samples.shape[0]))

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]


def interpolate_solution(voltages) -> CubicSpline:
    """Continuous channels ``V_n(tau)`` on tau in [0, 1] from discrete samples.

    Natural cubic splines through the ``(N, T)`` voltage matrix, with
    ``V_n(0)`` and ``V_n(1)`` equal to the first and last sample.
    """
    V = np.atleast_2d(np.asarray(voltages, dtype=float))
    if V.shape[1] < 2:
        raise ValueError("need at least two sequence steps to interpolate")
    tau = np.linspace(0.0, 1.0, V.shape[1])
    return CubicSpline(tau, V, axis=1, bc_type="natural")


def sigmoid_map(tau):
    """Smooth transfer function ``f(tau) = sin^2(pi tau / 2)``.

    Satisfies ``f(0)=0, f(1)=1`` with vanishing slope at both ends.
    """
    return np.sin(0.5 * np.pi * np.asarray(tau, dtype=float)) ** 2


def _check_transfer(f):
    grid = np.linspace(0.0, 1.0, 257)
    vals = np.asarray(f(grid), dtype=float)
    if abs(vals[0]) > 1e-12 or abs(vals[-1] - 1.0) > 1e-12:
        raise ValueError("transfer function must satisfy f(0)=0 and f(1)=1")
    if np.any(np.diff(vals) < -1e-12):
        raise ValueError("transfer function must be monotone")


def map_and_resample(channels, transfer, n_out: int,
                     sample_period: float = 1.0) -> Waveform:
    """Apply a transfer function and resample on a centered grid.

    ``channels`` is a callable ``tau -> (N, len(tau))`` (e.g. the spline from
    :func:`interpolate_solution`). Output sample ``t`` (1-based) is taken at
    ``tau_t = (t - 1/2) / n_out``.
    """
    _check_transfer(transfer)
    tau = (np.arange(n_out) + 0.5) / n_out
    samples = np.atleast_2d(channels(transfer(tau)))
    return Waveform(samples=samples, sample_period=sample_period)


@dataclass
class FirKernel:
    """Finite impulse response taps ``k_1..k_K`` with unit sum."""

    taps: np.ndarray
    spacing: float = 1.0

    def __post_init__(self):
        self.taps = np.asarray(self.taps, dtype=float).reshape(-1)
        s = self.taps.sum()
        if abs(s - 1.0) > 1e-9:
            raise ValueError(f"kernel taps must sum to 1 (got {s!r}); "
                             "use FirKernel.normalized or kernel_from_step_response")
        # remove the rounding-level remainder so the invariant holds exactly
        self.taps = self.taps / s

    @classmethod
    def normalized(cls, taps, spacing: float = 1.0) -> "FirKernel":
        taps = np.asarray(taps, dtype=float).reshape(-1)
        return cls(taps / taps.sum(), spacing)

    @property
    def size(self) -> int:
        return self.taps.shape[0]


def kernel_from_step_response(step_samples, spacing: float = 1.0,
                              settle_tol: float = 1e-3):
    """FIR taps from a recorded unit-step response.

    ``k_j = s_j - s_{j-1}`` with ``s_0 = 0``; the taps are renormalized to sum
    exactly to one. Returns ``(kernel, renormalization_factor)``. A response
    that has not settled (residual slope above ``settle_tol`` of the final
    level per sample) triggers a warning; a negative settling value is an
    error.
    """
    s = np.asarray(step_samples, dtype=float).reshape(-1)
    if s.shape[0] < 2:
        raise ValueError("step response needs at least two samples")
    final = s[-1]
    if final <= 0:
        raise ValueError(f"step response settles to a non-positive value ({final!r})")
    tail = s[-max(3, s.shape[0] // 10):]
    slope = np.polyfit(np.arange(tail.shape[0]), tail, 1)[0]
    if abs(slope) > settle_tol * abs(final):
        warnings.warn(f"step response not settled: residual slope "
                      f"{slope:.3e} per sample", stacklevel=2)
    taps = np.diff(np.concatenate([[0.0], s]))
    total = taps.sum()
    return FirKernel(taps / total, spacing), 1.0 / total


def build_kernel_matrix(kernel: FirKernel, n_samples: int, padding: int) -> np.ndarray:
    """Dense ``M x M`` kernel matrix, ``M = n_samples + 2 * padding``.

    Row ``i < K`` starts with the cumulated leading tap sum followed by the
    reversed taps (the padded waveform is constant before its first sample);
    the remaining rows are shifted copies of the full reversed kernel. Every
    row sums to one.
    """
    k = kernel.taps
    K = k.shape[0]
    M = n_samples + 2 * padding
    if M <= K:
        raise ValueError(f"waveform length M={M} must exceed kernel length K={K}")
    mat = np.zeros((M, M))
    rev = k[::-1]
    for i in range(M):
        if i < K:
            # first element cumulates taps k_{i+1}..k_K, then k_i, .., k_1
            mat[i, 0] = k[i:].sum()
            mat[i, 1:i + 1] = rev[K - i:]
        else:
            mat[i, i - K + 1:i + 1] = rev
    return mat


def apply_kernel(kernel: FirKernel, waveform: Waveform, padding: int) -> Waveform:
    """Filter a waveform through the kernel matrix (with padding)."""
    padded = _pad(waveform.samples, padding)
    mat = build_kernel_matrix(kernel, waveform.n_samples, padding)
    return Waveform(samples=padded @ mat.T, sample_period=waveform.sample_period,
                    channel_ids=list(waveform.channel_ids))


def _pad(samples, padding):
    if padding == 0:
        return samples
    lead = np.repeat(samples[:, :1], padding, axis=1)
    trail = np.repeat(samples[:, -1:], padding, axis=1)
    return np.concatenate([lead, samples, trail], axis=1)


def _second_difference(M: int) -> np.ndarray:
    W = np.zeros((M, M))
    i = np.arange(M)
    W[i, i] = 2.0
    W[0, 0] = W[-1, -1] = 1.0
    W[i[:-1], i[:-1] + 1] = -1.0
    W[i[:-1] + 1, i[:-1]] = -1.0
    return W


def invert_filter(desired: Waveform, kernel: FirKernel, padding: int,
                  regularization: float, slew_limit: float | None = None):
    """Pre-ramp whose filtered output approximates the desired waveform.

    The desired waveform is padded with ``padding`` copies of its first and
    last samples; the regularized normal equations are solved per channel with
    a dense Cholesky factorization. Returns ``(pre_ramp, report)`` where the
    pre-ramp is the full padded waveform and the report contains the maximum
    deviation ``|K vt - v|`` over the unpadded region and the maximum
    consecutive-sample step of the pre-ramp.
    """
    if regularization <= 0:
        raise ValueError("regularization weight must be positive; the plain "
                         "inversion of a low-pass kernel is ill conditioned")
    v = _pad(desired.samples, padding)
    M = v.shape[1]
    mat = build_kernel_matrix(kernel, desired.n_samples, padding)
    A = mat.T @ mat + regularization * _second_difference(M)
    try:
        cf = cho_factor(A)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"inversion system is singular ({exc}); "
                         "increase the regularization weight") from exc
    pre = cho_solve(cf, (v @ mat).T).T
    filtered = pre @ mat.T
    core = slice(padding, padding + desired.n_samples) if padding else slice(None)
    report = {
        "max_deviation": float(np.abs(filtered[:, core] - v[:, core]).max()),
        "max_sample_step": float(np.abs(np.diff(pre, axis=1)).max()),
    }
    if slew_limit is not None and report["max_sample_step"] > slew_limit:
        warnings.warn(f"pre-ramp exceeds the slew limit: max step "
                      f"{report['max_sample_step']:.3e} > {slew_limit:.3e}",
                      stacklevel=2)
    return Waveform(samples=pre, sample_period=desired.sample_period,
                    channel_ids=list(desired.channel_ids)), report


def waveform_to_csv(waveform: Waveform, path) -> None:
    """One time column plus one column per channel."""
    t = np.arange(waveform.n_samples) * waveform.sample_period
    header = "time," + ",".join(f"ch{c}" for c in waveform.channel_ids)
    np.savetxt(path, np.column_stack([t, waveform.samples.T]),
               delimiter=",", header=header, comments="", fmt="%.17g")


def waveform_from_csv(path) -> Waveform:
    data = np.atleast_2d(np.loadtxt(path, delimiter=",", skiprows=1))
    period = data[1, 0] - data[0, 0] if data.shape[0] > 1 else 1.0
    return Waveform(samples=data[:, 1:].T, sample_period=float(period))


def load_kernel_csv(path, kind: str = "taps", spacing: float = 1.0):
    """Read a kernel from a single-column CSV of taps or of step-response samples."""
    vals = np.loadtxt(path, delimiter=",").reshape(-1)
    if kind == "taps":
        return FirKernel.normalized(vals, spacing)
    if kind == "step":
        kernel, _ = kernel_from_step_response(vals, spacing)
        return kernel
    raise ValueError(f"unknown kernel input kind {kind!r}")
