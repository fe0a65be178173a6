"""Analytic electrode potential backends and the trap model container.

Every backend provides the dimensionless unit potential of one electrode
(potential per applied volt, all other electrodes grounded). Three kinds are
available:

* ``multipole-sum``: a harmonic polynomial specified by solid-harmonic
  coefficients; exact everywhere, exact derivatives.
* ``point-charge-set``: Coulomb superposition of weighted point charges,
  ``phi = sum_k w_k / (4 pi |r - r_k|)``; exact derivatives away from the
  charges.
* ``planar-rectangle-set``: rectangular patches at unit voltage in an
  infinite grounded plane (gapless plane approximation, arctangent form).

Backends are immutable after construction and evaluation is pure, so they are
safe to share between threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import harmonics

__all__ = [
    "EvaluationError",
    "CapabilityError",
    "ElectrodeModel",
    "MultipoleSumElectrode",
    "PointChargeSetElectrode",
    "PlanarRectangleSetElectrode",
    "CompositeElectrode",
    "TrapModel",
    "electrode_from_dict",
    "load_trap_model",
    "save_trap_model",
]


class EvaluationError(ValueError):
    """An evaluation point violates a backend precondition."""


class CapabilityError(NotImplementedError):
    """The requested operation is not available for this backend kind."""


class ElectrodeModel:
    """Common interface of all unit-potential backends."""

    kind = "abstract"

    def potential(self, points) -> np.ndarray:
        """Unit potential at one point or an ``(n, 3)`` array [dimensionless]."""
        raise NotImplementedError

    def gradient(self, point) -> np.ndarray:
        """Exact gradient of the unit potential at a single point [1/m]."""
        raise CapabilityError(
            f"backend kind {self.kind!r} has no closed-form derivatives")

    def hessian(self, point) -> np.ndarray:
        """Exact Hessian of the unit potential at a single point [1/m^2]."""
        raise CapabilityError(
            f"backend kind {self.kind!r} has no closed-form derivatives")

    def to_dict(self) -> dict:
        raise NotImplementedError


def _as_points(points):
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if pts.shape[-1] != 3:
        raise ValueError(f"points must have shape (n, 3), got {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise EvaluationError("evaluation points must be finite")
    return pts, single


@dataclass(frozen=True)
class MultipoleSumElectrode(ElectrodeModel):
    """Harmonic polynomial potential given by solid-harmonic coefficients.

    Parameters
    ----------
    coefficients : dict
        Mapping ``(l, m) -> value``; the potential is
        ``sum c_lm R_lm(r - center)``. Units of ``c_lm`` are 1/m^l.
    center : array_like, optional
        Expansion origin in the trap frame [m].
    """

    coefficients: dict
    center: tuple = (0.0, 0.0, 0.0)

    kind = "multipole-sum"

    def __post_init__(self):
        for (l, m) in self.coefficients:
            if not (0 <= l <= harmonics.MAX_ORDER) or abs(m) > l:
                raise ValueError(f"invalid multipole label (l={l}, m={m})")

    def potential(self, points):
        pts, single = _as_points(points)
        rel = pts - np.asarray(self.center, dtype=float)
        vals = np.zeros(pts.shape[0])
        for (l, m), c in self.coefficients.items():
            vals += c * harmonics.solid_harmonic(l, m, rel)
        return vals[0] if single else vals

    def gradient(self, point):
        rel = np.asarray(point, dtype=float) - np.asarray(self.center, dtype=float)
        g = np.zeros(3)
        for (l, m), c in self.coefficients.items():
            g += c * harmonics.solid_harmonic_gradient(l, m, rel)
        return g

    def hessian(self, point):
        rel = np.asarray(point, dtype=float) - np.asarray(self.center, dtype=float)
        h = np.zeros((3, 3))
        for (l, m), c in self.coefficients.items():
            h += c * harmonics.solid_harmonic_hessian(l, m, rel)
        return h

    def to_dict(self):
        return {
            "kind": self.kind,
            "coefficients": [[l, m, float(c)] for (l, m), c in sorted(self.coefficients.items())],
            "center": [float(v) for v in self.center],
        }


class PointChargeSetElectrode(ElectrodeModel):
    """Coulomb superposition of weighted point charges.

    ``phi(r) = sum_k w_k / (4 pi |r - r_k|)`` with dimensionless weights; the
    absolute normalization is irrelevant downstream because everything is
    linear in the applied voltages.

    Evaluation points must stay at least ``exclusion_radius`` away from every
    charge. If no radius is given it defaults to ``1e-3 * clearance``, where
    ``clearance`` is the model-declared distance between the charges and the
    intended evaluation region.
    """

    kind = "point-charge-set"

    def __init__(self, positions, weights, exclusion_radius=None, clearance=None):
        self.positions = np.asarray(positions, dtype=float).reshape(-1, 3)
        self.weights = np.asarray(weights, dtype=float).reshape(-1)
        if self.positions.shape[0] != self.weights.shape[0]:
            raise ValueError("positions and weights must have equal length")
        self.clearance = clearance
        if exclusion_radius is None:
            exclusion_radius = 1e-3 * clearance if clearance else 0.0
        self.exclusion_radius = float(exclusion_radius)

    def _displacements(self, pts):
        d = pts[:, None, :] - self.positions[None, :, :]   # (n, K, 3)
        dist = np.sqrt(np.sum(d * d, axis=-1))
        if self.exclusion_radius > 0.0:
            bad = dist < self.exclusion_radius
            if np.any(bad):
                i, k = np.argwhere(bad)[0]
                raise EvaluationError(
                    f"evaluation point {pts[i]} is within the exclusion radius "
                    f"{self.exclusion_radius:g} m of charge {k} at {self.positions[k]}")
        return d, dist

    def potential(self, points):
        pts, single = _as_points(points)
        _, dist = self._displacements(pts)
        vals = np.sum(self.weights / (4.0 * np.pi * dist), axis=1)
        return vals[0] if single else vals

    def gradient(self, point):
        pts, _ = _as_points(point)
        d, dist = self._displacements(pts)
        g = -np.sum(self.weights[None, :, None] * d / (4.0 * np.pi * dist[..., None] ** 3), axis=1)
        return g[0]

    def hessian(self, point):
        pts, _ = _as_points(point)
        d, dist = self._displacements(pts)
        unit = d / dist[..., None]
        outer = unit[..., :, None] * unit[..., None, :]
        h = np.sum(self.weights[None, :, None, None]
                   * (3.0 * outer - np.eye(3)) / (4.0 * np.pi * dist[..., None, None] ** 3),
                   axis=1)
        return h[0]

    def to_dict(self):
        return {
            "kind": self.kind,
            "positions": self.positions.tolist(),
            "weights": self.weights.tolist(),
            "exclusion_radius": self.exclusion_radius,
            "clearance": self.clearance,
        }


class PlanarRectangleSetElectrode(ElectrodeModel):
    """Rectangular patches at 1 V in an infinite grounded plane at z = 0.

    The potential above the plane is the solid angle subtended by the patches
    divided by 2 pi, which for a rectangle ``[x1, x2] x [y1, y2]`` has the
    closed arctangent form used here. The field region is mirror symmetric in
    z. On the plane itself the value is 1 inside a patch and 0 outside.

    Rectangles are given as ``(x1, x2, y1, y2)`` with ``x1 < x2, y1 < y2``.
    """

    kind = "planar-rectangle-set"

    def __init__(self, rectangles):
        rects = np.asarray(rectangles, dtype=float).reshape(-1, 4)
        if np.any(rects[:, 0] >= rects[:, 1]) or np.any(rects[:, 2] >= rects[:, 3]):
            raise ValueError("rectangles must satisfy x1 < x2 and y1 < y2")
        self.rectangles = rects

    def potential(self, points):
        pts, single = _as_points(points)
        x, y, z = pts[:, 0], pts[:, 1], np.abs(pts[:, 2])
        vals = np.zeros(pts.shape[0])
        on_plane = z == 0.0
        for x1, x2, y1, y2 in self.rectangles:
            acc = np.zeros_like(vals)
            with np.errstate(divide="ignore", invalid="ignore"):
                for xi, sx in ((x2, 1.0), (x1, -1.0)):
                    for yj, sy in ((y2, 1.0), (y1, -1.0)):
                        dx, dy = xi - x, yj - y
                        rr = np.sqrt(dx * dx + dy * dy + z * z)
                        acc += sx * sy * np.arctan2(dx * dy, z * rr)
            inside = (x1 < x) & (x < x2) & (y1 < y) & (y < y2)
            acc = np.where(on_plane, np.where(inside, 2.0 * np.pi, 0.0), acc)
            vals += acc / (2.0 * np.pi)
        return vals[0] if single else vals

    def to_dict(self):
        return {"kind": self.kind, "rectangles": self.rectangles.tolist()}


class CompositeElectrode(ElectrodeModel):
    """Weighted sum of backends, used for electrode sets (grouping)."""

    kind = "composite"

    def __init__(self, parts):
        # parts: sequence of (weight, ElectrodeModel)
        self.parts = tuple((float(w), m) for w, m in parts)

    def potential(self, points):
        pts, single = _as_points(points)
        vals = np.zeros(pts.shape[0])
        for w, m in self.parts:
            vals += w * m.potential(pts)
        return vals[0] if single else vals

    def gradient(self, point):
        return np.sum([w * m.gradient(point) for w, m in self.parts], axis=0)

    def hessian(self, point):
        return np.sum([w * m.hessian(point) for w, m in self.parts], axis=0)

    def to_dict(self):
        return {"kind": self.kind,
                "parts": [[w, m.to_dict()] for w, m in self.parts]}


_KINDS = {}


def _register(cls):
    _KINDS[cls.kind] = cls
    return cls


def electrode_from_dict(d: dict) -> ElectrodeModel:
    kind = d.get("kind")
    if kind == "multipole-sum":
        coeffs = {(int(l), int(m)): float(c) for l, m, c in d["coefficients"]}
        return MultipoleSumElectrode(coeffs, tuple(d.get("center", (0.0, 0.0, 0.0))))
    if kind == "point-charge-set":
        return PointChargeSetElectrode(
            d["positions"], d["weights"],
            exclusion_radius=d.get("exclusion_radius"),
            clearance=d.get("clearance"))
    if kind == "planar-rectangle-set":
        return PlanarRectangleSetElectrode(d["rectangles"])
    if kind == "composite":
        return CompositeElectrode([(w, electrode_from_dict(sub)) for w, sub in d["parts"]])
    raise ValueError(f"unknown electrode kind {kind!r}")


@dataclass
class TrapModel:
    """Electrode collection plus rf drive parameters and ion constants.

    All quantities are SI: positions in meters, ``v_rf`` in volts, ``omega``
    in rad/s, ``charge`` in coulombs, ``mass`` in kilograms.
    ``characteristic_length`` is the reference scale (typically the minimum
    ion-electrode distance) used for default expansion sphere radii.
    """

    dc_electrodes: list
    rf_electrode: ElectrodeModel
    electrode_locations: np.ndarray
    v_rf: float
    omega: float
    charge: float
    mass: float
    characteristic_length: float
    name: str = "trap"

    def __post_init__(self):
        self.electrode_locations = np.asarray(self.electrode_locations, dtype=float).reshape(-1, 3)
        if self.electrode_locations.shape[0] != len(self.dc_electrodes):
            raise ValueError("need one location per dc electrode")
        if self.omega <= 0:
            raise ValueError("omega must be positive")
        if self.mass <= 0:
            raise ValueError("mass must be positive")
        if self.v_rf < 0:
            raise ValueError("v_rf must be nonnegative")
        if not np.isfinite(self.alpha_rf):
            raise ValueError("alpha_rf is not finite")

    @property
    def n_dc(self) -> int:
        return len(self.dc_electrodes)

    @property
    def alpha_rf(self) -> float:
        """Ponderomotive prefactor Q V_rf^2 / (2 m Omega^2) [V m^2]."""
        return self.charge * self.v_rf ** 2 / (2.0 * self.mass * self.omega ** 2)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "dc_electrodes": [e.to_dict() for e in self.dc_electrodes],
            "rf_electrode": self.rf_electrode.to_dict(),
            "electrode_locations": self.electrode_locations.tolist(),
            "v_rf": self.v_rf,
            "omega": self.omega,
            "charge": self.charge,
            "mass": self.mass,
            "characteristic_length": self.characteristic_length,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrapModel":
        return cls(
            dc_electrodes=[electrode_from_dict(e) for e in d["dc_electrodes"]],
            rf_electrode=electrode_from_dict(d["rf_electrode"]),
            electrode_locations=np.asarray(d["electrode_locations"], dtype=float),
            v_rf=float(d["v_rf"]),
            omega=float(d["omega"]),
            charge=float(d["charge"]),
            mass=float(d["mass"]),
            characteristic_length=float(d["characteristic_length"]),
            name=d.get("name", "trap"),
        )


def load_trap_model(path) -> TrapModel:
    with open(path) as fh:
        return TrapModel.from_dict(json.load(fh))


def save_trap_model(model: TrapModel, path) -> None:
    with open(path, "w") as fh:
        json.dump(model.to_dict(), fh, indent=2)
