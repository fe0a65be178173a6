"""Shuttling paths, local frames, target Hessians and penalty weights.

A path is an ordered set of support points per potential well. Each support
point carries a local frame whose first axis is tangential to the path, so
that target Hessians can be specified as diagonal matrices and all penalty
terms are evaluated in local-frame components.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

__all__ = [
    "FrameDegeneracyError",
    "ShuttlingPath",
    "PenaltyWeights",
    "build_frames",
    "target_hessians",
    "activation_weights",
    "penalty_scale_factors",
    "load_path_spec",
    "save_path_spec",
]


class FrameDegeneracyError(ValueError):
    """No continuous local frame exists for the requested path."""


def _normalize(v, eps=0.0):
    n = np.linalg.norm(v)
    if n <= eps:
        return None
    return v / n


def build_frames(positions, up_hint=(0.0, 0.0, 1.0)) -> np.ndarray:
    """Rotation matrices with the first axis tangent to the path.

    Tangents come from the derivative of a cubic-spline fit through the
    support points (one sided at the ends). The second axis is the component
    of ``up_hint`` orthogonal to the tangent; where that degenerates mid-path
    the previous normal is parallel transported instead. Returns an array of
    shape ``(T, 3, 3)`` whose columns are the local axes in the trap frame.
    """
    pos = np.asarray(positions, dtype=float).reshape(-1, 3)
    T = pos.shape[0]
    if T < 2:
        raise ValueError("build_frames needs at least 2 positions; "
                         "pass an explicit frame for single-point paths")
    up = np.asarray(up_hint, dtype=float)
    if _normalize(up) is None:
        raise ValueError("up_hint must be a nonzero vector")
    up = up / np.linalg.norm(up)

    spline = CubicSpline(np.arange(T), pos, axis=0, bc_type="natural")
    tangents = spline(np.arange(T), 1)

    rotations = np.empty((T, 3, 3))
    prev_y = None
    for t in range(T):
        x_ax = _normalize(tangents[t])
        if x_ax is None:
            raise FrameDegeneracyError(f"vanishing path tangent at step {t}")
        y_ax = _normalize(up - np.dot(up, x_ax) * x_ax, eps=1e-6)
        if y_ax is None:
            if prev_y is None:
                raise FrameDegeneracyError(
                    f"up_hint is parallel to the path tangent at step {t} "
                    "and no previous frame exists to transport")
            y_ax = _normalize(prev_y - np.dot(prev_y, x_ax) * x_ax, eps=1e-12)
            if y_ax is None:
                raise FrameDegeneracyError(
                    f"no continuous frame exists at step {t}")
        if prev_y is not None and np.dot(y_ax, prev_y) < 0:
            y_ax = -y_ax
        z_ax = np.cross(x_ax, y_ax)
        rotations[t] = np.column_stack([x_ax, y_ax, z_ax])
        prev_y = y_ax
    return rotations


@dataclass
class ShuttlingPath:
    """Support points, local frames and reference frequencies per well.

    ``positions`` has shape ``(W, T, 3)`` [m], ``rotations`` ``(W, T, 3, 3)``
    and ``omega_ref`` ``(W, T, 3)`` [rad/s] in local-frame order (tangential
    first).
    """

    positions: np.ndarray
    rotations: np.ndarray
    omega_ref: np.ndarray

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        if self.positions.ndim == 2:
            self.positions = self.positions[None]
        self.rotations = np.asarray(self.rotations, dtype=float)
        if self.rotations.ndim == 3:
            self.rotations = self.rotations[None]
        self.omega_ref = np.asarray(self.omega_ref, dtype=float)
        if self.omega_ref.ndim == 1:
            self.omega_ref = np.broadcast_to(
                self.omega_ref, self.positions.shape).copy()
        elif self.omega_ref.ndim == 2:
            self.omega_ref = self.omega_ref[None]

    @property
    def n_wells(self) -> int:
        return self.positions.shape[0]

    @property
    def n_steps(self) -> int:
        return self.positions.shape[1]

    @classmethod
    def from_points(cls, points, omega_ref, up_hint=(0.0, 0.0, 1.0)) -> "ShuttlingPath":
        """Single-well path through the given points with auto-built frames."""
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        rot = build_frames(pts, up_hint)
        return cls(positions=pts[None], rotations=rot[None], omega_ref=np.asarray(omega_ref))

    @classmethod
    def single_point(cls, position, rotation, omega_ref) -> "ShuttlingPath":
        """One-step path with an explicitly supplied frame."""
        return cls(positions=np.asarray(position, dtype=float).reshape(1, 1, 3),
                   rotations=np.asarray(rotation, dtype=float).reshape(1, 1, 3, 3),
                   omega_ref=np.asarray(omega_ref, dtype=float).reshape(1, 1, 3))


def target_hessians(omega_ref, charge: float, mass: float) -> np.ndarray:
    """Diagonal local-frame target Hessians ``(m/Q) diag(w_u^2)`` [V/m^2]."""
    w = np.asarray(omega_ref, dtype=float)
    diag = (mass / charge) * w ** 2
    out = np.zeros(w.shape + (3,))
    for u in range(3):
        out[..., u, u] = diag[..., u]
    return out


def activation_weights(path: ShuttlingPath, electrode_locations,
                       d_inner: float, d_outer: float, l_big: float = 1e6) -> np.ndarray:
    """Bathtub voltage-penalty factors per electrode and step, shape ``(N, T)``.

    An electrode at distance ``D`` from the nearest well gets factor 1 inside
    ``d_inner``, ``l_big`` beyond ``d_outer`` and the linear ramp
    ``l_big (D - d_inner)/(d_outer - d_inner)`` in between (clamped below at 1
    to keep the profile monotone); the per-step factor is the minimum over
    wells.
    """
    if not d_inner < d_outer:
        raise ValueError("need d_inner < d_outer")
    locs = np.asarray(electrode_locations, dtype=float).reshape(-1, 3)
    # D[n, w, t]
    d = np.linalg.norm(path.positions[None, :, :, :] - locs[:, None, None, :], axis=-1)
    ramp = np.maximum(1.0, l_big * (d - d_inner) / (d_outer - d_inner))
    factor = np.where(d < d_inner, 1.0, np.where(d >= d_outer, l_big, ramp))
    return factor.min(axis=1)


def penalty_scale_factors(charge: float, mass: float, omega_ref: float,
                          delta_u: float, delta_omega: float):
    """Scaling factors that normalize penalties 1 and 2 to one unit each.

    A well displaced by ``delta_u`` at reference frequency ``omega_ref``
    contributes one unit of the position penalty; a secular frequency off by
    ``delta_omega`` contributes one unit of the confinement penalty (to first
    order).
    """
    if min(charge, mass, omega_ref, delta_u, delta_omega) <= 0:
        raise ValueError("all scale inputs must be positive")
    w1 = charge ** 2 / (mass ** 2 * omega_ref ** 4 * delta_u ** 2)
    w2 = charge ** 2 / (4.0 * mass ** 2 * omega_ref ** 2 * delta_omega ** 2)
    return w1, w2


@dataclass
class PenaltyWeights:
    """Fully scaled penalty weight tables for the linear-system assembly.

    ``w1`` has shape ``(W, T, 3)``, ``w2`` ``(W, T, 3, 3)``, ``w3`` and ``w5``
    ``(N, T)``, ``w4`` is a scalar, and ``v_hat`` (length N) is the fixed
    voltage set enforced by penalty 5.
    """

    w1: np.ndarray
    w2: np.ndarray
    w3: np.ndarray
    w4: float
    w5: np.ndarray
    v_hat: np.ndarray

    def v_hat_table(self, n_steps: int) -> np.ndarray:
        """Fixed voltage sets as an ``(N, T)`` table.

        ``v_hat`` may be a single set (length N) or one set per step.
        """
        v = np.asarray(self.v_hat, dtype=float)
        if v.ndim == 1:
            return np.broadcast_to(v[:, None], (v.shape[0], n_steps))
        return v

    @classmethod
    def build(cls, path: ShuttlingPath, trap, *,
              delta_u: float = 1e-9,
              delta_omega=2.0 * np.pi * 1e3,
              w3_scale: float = 1e-6,
              w4: float = 1e-2,
              d_inner: float | None = None,
              d_outer: float | None = None,
              l_big: float = 1e6,
              always_active=(),
              v_hat=None,
              w5_scale: float = 0.0,
              w5_steps=()) -> "PenaltyWeights":
        """Standard weight tables from reference deviations and activation.

        ``delta_omega`` may be a scalar or a per-axis triple; a loose radial
        tolerance lets solutions trade radial confinement instead of axial
        where the rf confinement weakens (junctions). The off-diagonal
        Hessian weights use the geometric mean of the axis weights.
        ``d_inner``/``d_outer`` default to one and three characteristic
        lengths of the trap; electrodes listed in ``always_active`` (global
        compensation electrodes) bypass the distance activation. Penalty 5 is
        enabled by listing enforcement steps in ``w5_steps`` together with a
        nonzero ``w5_scale``.
        """
        W, T, N = path.n_wells, path.n_steps, trap.n_dc
        omega_scale = float(np.max(path.omega_ref))
        dw = np.broadcast_to(np.asarray(delta_omega, dtype=float), (3,))
        s1, _ = penalty_scale_factors(trap.charge, trap.mass, omega_scale,
                                      delta_u, float(dw.min()))
        s2_axis = np.array([penalty_scale_factors(trap.charge, trap.mass,
                                                  omega_scale, delta_u, d)[1]
                            for d in dw])
        w2 = np.sqrt(np.outer(s2_axis, s2_axis))
        if d_inner is None:
            d_inner = trap.characteristic_length
        if d_outer is None:
            d_outer = 3.0 * trap.characteristic_length
        act = activation_weights(path, trap.electrode_locations, d_inner, d_outer, l_big)
        for n in always_active:
            act[n, :] = 1.0
        w5 = np.zeros((N, T))
        for t in w5_steps:
            w5[:, t] = w5_scale
        return cls(
            w1=np.full((W, T, 3), s1),
            w2=np.broadcast_to(w2, (W, T, 3, 3)).copy(),
            w3=w3_scale * act,
            w4=float(w4),
            w5=w5,
            v_hat=np.zeros(N) if v_hat is None else np.asarray(v_hat, dtype=float),
        )


def _segment_points(seg: dict) -> np.ndarray:
    kind = seg.get("type", "line")
    steps = int(seg["steps"])
    if kind == "line":
        a = np.asarray(seg["start"], dtype=float)
        b = np.asarray(seg["stop"], dtype=float)
        s = np.linspace(0.0, 1.0, steps)
        return a[None] + s[:, None] * (b - a)[None]
    if kind == "arc":
        center = np.asarray(seg["center"], dtype=float)
        start = np.asarray(seg["start"], dtype=float)
        normal = np.asarray(seg["normal"], dtype=float)
        normal = normal / np.linalg.norm(normal)
        angle = np.deg2rad(float(seg["angle_deg"]))
        radial = start - center
        thetas = np.linspace(0.0, angle, steps)
        pts = np.empty((steps, 3))
        for i, th in enumerate(thetas):
            # Rodrigues rotation of the radial vector about the arc normal
            pts[i] = (center + radial * np.cos(th)
                      + np.cross(normal, radial) * np.sin(th)
                      + normal * np.dot(normal, radial) * (1.0 - np.cos(th)))
        return pts
    raise ValueError(f"unknown path segment type {kind!r}")


def load_path_spec(path) -> tuple[ShuttlingPath, dict]:
    """Read a path specification file (JSON).

    The file holds per-well geometry (an explicit point list or a chain of
    ``line``/``arc`` segments), an ``up_hint``, the reference secular
    frequencies (one triple, or one per step) and optional penalty
    parameters. Returns the path and the penalty parameter dict.
    """
    with open(path) as fh:
        spec = json.load(fh)
    up_hint = spec.get("up_hint", (0.0, 0.0, 1.0))
    wells = []
    for well in spec["wells"]:
        if "points" in well:
            pts = np.asarray(well["points"], dtype=float)
        else:
            chunks = [_segment_points(s) for s in well["segments"]]
            pts = chunks[0]
            for chunk in chunks[1:]:
                if np.allclose(chunk[0], pts[-1]):
                    chunk = chunk[1:]
                pts = np.vstack([pts, chunk])
        wells.append(pts)
    T = {w.shape[0] for w in wells}
    if len(T) != 1:
        raise ValueError("all wells must have the same number of steps")
    positions = np.stack(wells)
    rotations = np.stack([build_frames(w, up_hint) for w in wells])
    omega = np.asarray(spec["omega_ref"], dtype=float)
    if omega.ndim == 1:
        omega = np.broadcast_to(omega, positions.shape).copy()
    else:
        omega = np.broadcast_to(omega[None], positions.shape).copy()
    sp = ShuttlingPath(positions=positions, rotations=rotations, omega_ref=omega)
    return sp, spec.get("penalties", {})


def save_path_spec(spec: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(spec, fh, indent=2)
