"""Analytic demonstration traps.

These stand in for meshed trap geometries: a linear segmented trap with an
ideal rf quadrupole (exact rf null along the transport axis) and segmented
point-charge dc electrodes, and an X-junction built from crossed point-charge
rf rods with a gap at the crossing, which reproduces the characteristic rf
barrier and loss of transverse confinement at the junction center.

Scales follow typical segmented-trap hardware: 200 um segment width, about
224 um ion-electrode distance, a 2 pi x 29.5 MHz drive at around 205 V, and
-6 V trapping voltages for a calcium-40 ion.
"""

from __future__ import annotations

import numpy as np

from .confinement import secular_modes
from .potentials import (MultipoleSumElectrode, PointChargeSetElectrode, TrapModel)

__all__ = [
    "CA40_MASS",
    "ELEMENTARY_CHARGE",
    "ideal_quadrupole_rf",
    "linear_trap",
    "xjunction_trap",
]

ELEMENTARY_CHARGE = 1.602176634e-19          # C
CA40_MASS = 39.9625909 * 1.66053906660e-27   # kg


def ideal_quadrupole_rf(gamma: float) -> MultipoleSumElectrode:
    """Ideal 2d rf quadrupole ``phi = gamma (y^2 - z^2)`` [gamma in 1/m^2].

    The unit field vanishes on the entire x axis, so paths along the axis are
    exactly micromotion free.
    """
    c20 = -2.0 * gamma * np.sqrt(np.pi / 5.0)
    c22 = -2.0 * gamma * np.sqrt(np.pi / 15.0)
    return MultipoleSumElectrode({(2, 0): c20, (2, 2): c22})


def _segment_electrode(x_center, weight, half_span, offsets):
    """Point-charge stand-in for one dc segment of finite axial width."""
    xs = x_center + np.linspace(-half_span, half_span, 3)
    pos = []
    for x in xs:
        for oy, oz in offsets:
            pos.append((x, oy, oz))
    pos = np.asarray(pos)
    clearance = float(np.min(np.linalg.norm(pos[:, 1:], axis=1)))
    return PointChargeSetElectrode(pos, np.full(len(pos), weight),
                                   clearance=clearance)


def linear_trap(n_segments: int = 9, segment_width: float = 200e-6,
                v_rf: float = 205.0, omega: float = 2 * np.pi * 29.5e6,
                v_trap: float = -6.0, axial_freq: float = 2 * np.pi * 1.57e6,
                radial_freq: float = 2 * np.pi * 4.2e6,
                charge: float = ELEMENTARY_CHARGE, mass: float = CA40_MASS):
    """Uniform linear segmented trap with an exact rf null on the x axis.

    dc segment electrodes are arranged symmetrically around the axis at
    distances of about 224 um, with charge weights calibrated so that
    ``v_trap`` on a single segment yields the requested axial frequency. The
    rf quadrupole strength is set from the requested rf-only radial
    frequency. Returns ``(trap, omega_ref)`` with the reference secular
    frequencies of a single-segment well at the trap center.
    """
    if n_segments % 2 == 0:
        raise ValueError("use an odd segment count so a segment sits at x=0")
    # square charge arrangement: segment potentials are symmetric under a y/z
    # swap on the trap axis, so they never split the radial modes, and their
    # radial curvature equals -1/2 of the axial curvature at the segment
    # center. The radial split is supplied by a dedicated static-quadrupole
    # compensation electrode (last dc index) that is translation invariant.
    a = 224e-6 / np.sqrt(2.0)
    offsets = [(sy * a, sz * a) for sy in (1, -1) for sz in (1, -1)]
    centers = (np.arange(n_segments) - n_segments // 2) * segment_width

    probe = _segment_electrode(0.0, 1.0, segment_width / 3.0, offsets)
    hxx_unit = probe.hessian(np.zeros(3))[0, 0]
    # v_trap * weight * hxx_unit == (m/Q) axial_freq^2
    weight = (mass / charge) * axial_freq ** 2 / (v_trap * hxx_unit)
    dc = [_segment_electrode(x, weight, segment_width / 3.0, offsets) for x in centers]
    # split compensation: phi = beta (y^2 - z^2), about 0.7% radial split per volt
    beta = 0.01 * (mass / charge) * radial_freq ** 2 / 4.0
    dc.append(MultipoleSumElectrode({(2, 0): -2.0 * beta * np.sqrt(np.pi / 5.0),
                                     (2, 2): -2.0 * beta * np.sqrt(np.pi / 15.0)}))
    locations = np.vstack([np.column_stack([centers, np.zeros(n_segments), np.zeros(n_segments)]),
                           np.zeros(3)])

    # radial_freq = sqrt(2) Q V_rf gamma / (m Omega) for the bare quadrupole
    gamma = radial_freq * mass * omega / (np.sqrt(2.0) * charge * v_rf)
    rf = ideal_quadrupole_rf(gamma)

    trap = TrapModel(dc_electrodes=dc, rf_electrode=rf,
                     electrode_locations=locations, v_rf=v_rf, omega=omega,
                     charge=charge, mass=mass,
                     characteristic_length=float(np.hypot(200e-6, 100e-6)),
                     name="linear-demo")
    omega_ref = reference_frequencies(trap, np.zeros(3),
                                      {n_segments // 2: v_trap, n_segments: 2.0},
                                      rotation=np.eye(3))
    return trap, omega_ref


def reference_frequencies(trap: TrapModel, position, voltage_map: dict,
                          rotation=None) -> np.ndarray:
    """Secular frequencies of a static voltage configuration at a point.

    ``voltage_map`` assigns voltages to dc electrode indices; all others are
    grounded. Uses exact backend derivatives, so it is independent of the
    multipole expansion pipeline. With ``rotation`` given (columns are local
    frame axes), the frequencies are returned in local-axis order, matching
    each mode to the axis it overlaps most; otherwise they come sorted
    ascending.
    """
    H = trap.alpha_rf * np.linalg.matrix_power(trap.rf_electrode.hessian(position), 2)
    # part b of the rf Hessian from exact third derivatives is omitted; the
    # reference points of the demo traps sit on the rf null where it vanishes
    for n, v in voltage_map.items():
        H = H + v * trap.dc_electrodes[n].hessian(position)
    modes = secular_modes(H, trap.charge, trap.mass)
    if not modes.stable.all():
        raise ValueError("reference configuration is not confining")
    if rotation is None:
        return modes.omegas
    from .confinement import match_mode_order
    return match_mode_order(np.asarray(rotation, dtype=float), modes).omegas


def _rod(axis: int, height: float, inner: float, outer: float, spacing: float):
    """Charge positions for a pair of straight rods at z = +-height."""
    n = max(2, int(round((outer - inner) / spacing)) + 1)
    line = np.linspace(inner, outer, n)
    ticks = np.concatenate([-line[::-1], line])
    pos = np.zeros((ticks.size * 2, 3))
    pos[:ticks.size, axis] = ticks
    pos[:ticks.size, 2] = height
    pos[ticks.size:, axis] = ticks
    pos[ticks.size:, 2] = -height
    return pos


def xjunction_trap(n_per_arm: int = 10, segment_pitch: float = 100e-6,
                   first_center: float = 75e-6,
                   rod_height: float = 224e-6, rod_gap: float = 100e-6,
                   rod_length: float = 1.4e-3, rod_spacing: float = 25e-6,
                   v_rf: float = 205.0, omega: float = 2 * np.pi * 29.5e6,
                   v_trap: float = -6.0, axial_freq: float = 2 * np.pi * 1.3e6,
                   charge: float = ELEMENTARY_CHARGE, mass: float = CA40_MASS):
    """X-type junction stand-in with ``4 * n_per_arm`` dc electrodes.

    The rf electrode is four point-charge rods (two along x, two along y, at
    z = +-rod_height) interrupted by a gap of ``rod_gap`` around the crossing.
    The interruption weakens the transverse rf confinement near the junction
    center and creates the typical ponderomotive barrier on the arms.

    Returns ``(trap, omega_ref)`` like :func:`linear_trap`; the reference well
    sits on the x arm at the second segment center.
    """
    rf_pos = np.vstack([
        _rod(0, rod_height, rod_gap, rod_length, rod_spacing),
        _rod(1, rod_height, rod_gap, rod_length, rod_spacing),
    ])
    # weight chosen so the transverse rf curvature deep in an arm matches an
    # ideal quadrupole of paper-like strength; calibrated below via the
    # secular frequency of the reference configuration
    rf = PointChargeSetElectrode(rf_pos, np.ones(len(rf_pos)), clearance=rod_height)

    offsets = [(0.0, 224e-6), (0.0, -224e-6)]
    dc = []
    locations = []
    centers = first_center + segment_pitch * np.arange(n_per_arm)
    for arm_axis, sign in ((0, 1), (0, -1), (1, 1), (1, -1)):
        for c in centers:
            center = np.zeros(3)
            center[arm_axis] = sign * c
            xs = center[arm_axis] + np.linspace(-segment_pitch / 3, segment_pitch / 3, 3)
            pos = []
            for x in xs:
                for oy, oz in offsets:
                    p = np.zeros(3)
                    p[arm_axis] = x
                    p[1 - arm_axis] = oy
                    p[2] = oz
                    pos.append(p)
            pos = np.asarray(pos)
            dc.append(PointChargeSetElectrode(pos, np.ones(len(pos)),
                                              clearance=224e-6))
            locations.append(center)
    locations = np.asarray(locations)

    trap = TrapModel(dc_electrodes=dc, rf_electrode=rf,
                     electrode_locations=locations, v_rf=v_rf, omega=omega,
                     charge=charge, mass=mass, characteristic_length=rod_height,
                     name="xjunction-demo")

    # calibrate deep in an arm, where the path starts: dc weights from the
    # axial curvature of the nearest segment, rf weights from the requested
    # deep-arm transverse frequency
    ref_point = np.zeros(3)
    ref_point[0] = -(first_center + (n_per_arm - 2) * segment_pitch)
    ref_electrode = int(np.argmin(np.linalg.norm(locations - ref_point, axis=1)))
    probe = dc[ref_electrode]
    hxx = probe.hessian(ref_point)[0, 0]
    w_dc = (mass / charge) * axial_freq ** 2 / (v_trap * hxx)
    dc = [PointChargeSetElectrode(e.positions, np.full(len(e.weights), w_dc),
                                  clearance=224e-6) for e in dc]
    h_rf = rf.hessian(ref_point)
    curv = np.abs(np.linalg.eigvalsh(h_rf)).max()
    target = 2 * np.pi * 4.0e6
    alpha = trap.alpha_rf
    # omega_rad^2 = (Q/m) alpha (w_rf * curv)^2
    w_rf = target / np.sqrt(charge / mass * alpha) / curv
    rf = PointChargeSetElectrode(rf_pos, np.full(len(rf_pos), w_rf),
                                 clearance=rod_height)

    trap = TrapModel(dc_electrodes=dc, rf_electrode=rf,
                     electrode_locations=locations, v_rf=v_rf, omega=omega,
                     charge=charge, mass=mass, characteristic_length=rod_height,
                     name="xjunction-demo")
    # local frame on the arm with vertical up-hint: tangent, vertical, normal
    arm_frame = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]])
    omega_ref = reference_frequencies(trap, ref_point, {ref_electrode: v_trap},
                                      rotation=arm_frame)
    return trap, omega_ref
