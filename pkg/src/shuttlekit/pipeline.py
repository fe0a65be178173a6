"""Config-driven pipeline: expand, solve, analyze, postprocess, simulate, validate.

Each stage writes its artifact into the output directory and can reuse a
cached expansion set keyed by the trap model, path and expansion parameters.
The cache directory defaults to ``<outdir>/cache`` and can be overridden with
the ``SHUTTLEKIT_CACHE`` environment variable.
"""

from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dynamics as dyn
from . import multipole, solver, traps, validity, waveform
from .path import PenaltyWeights, ShuttlingPath, load_path_spec
from .potentials import TrapModel, load_trap_model, save_trap_model

logger = logging.getLogger(__name__)

__all__ = ["PipelineConfig", "PipelineError", "run_pipeline", "emit_plot_data",
           "write_demo_inputs"]


class PipelineError(RuntimeError):
    """A pipeline stage failed; carries the stage name."""

    def __init__(self, stage, message):
        super().__init__(f"stage {stage!r}: {message}")
        self.stage = stage


@dataclass
class PipelineConfig:
    """All parameters of one toolchain run.

    File paths are resolved relative to the config file location. Stages
    beyond the solve can be switched off individually.
    """

    trap_file: str
    path_file: str
    outdir: str = "out"
    # expansion
    order: int = 3
    grid_points: int = 25
    kappa: float | None = None
    use_cache: bool = True
    # penalties (defaults match PenaltyWeights.build)
    penalties: dict = field(default_factory=dict)
    # solver
    solver_tol: float = 1e-10
    solver_max_iter: int | None = None
    solver_method: str = "auto"
    # postprocessing
    run_waveform: bool = True
    resample_points: int = 500
    kernel_file: str | None = None
    kernel_kind: str = "taps"
    padding: int = 25
    regularization: float = 0.1
    slew_limit: float | None = None
    # simulation
    run_simulation: bool = False
    total_time: float = 1e-4
    time_step: float | None = None
    simulation_mode: str = "pseudo"
    # validity
    run_validity: bool = True
    validity_threshold: float = 0.1
    noise_density: float | None = None

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        base = Path(path).parent
        with open(path) as fh:
            raw = json.load(fh)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**raw)
        for attr in ("trap_file", "path_file", "kernel_file", "outdir"):
            val = getattr(cfg, attr)
            if val is not None and not Path(val).is_absolute():
                setattr(cfg, attr, str(base / val))
        return cfg


def _cache_dir(cfg: PipelineConfig) -> Path:
    env = os.environ.get("SHUTTLEKIT_CACHE")
    return Path(env) if env else Path(cfg.outdir) / "cache"


def _stage(name, timings):
    class _Timer:
        def __enter__(self):
            self.t0 = time.perf_counter()
            return self

        def __exit__(self, exc_type, exc, tb):
            timings[name] = time.perf_counter() - self.t0
            if exc is not None:
                logger.error("stage %s failed after %.2f s", name, timings[name])
                if not isinstance(exc, PipelineError):
                    raise PipelineError(name, str(exc)) from exc
            else:
                logger.info("stage %s: %.2f s", name, timings[name])
    return _Timer()


def run_pipeline(cfg: PipelineConfig) -> dict:
    """Run the toolchain end to end; returns the artifact path bundle."""
    out = Path(cfg.outdir)
    out.mkdir(parents=True, exist_ok=True)
    timings: dict = {}
    bundle: dict = {"outdir": str(out)}

    with _stage("load", timings):
        if not Path(cfg.trap_file).exists():
            raise PipelineError("load", f"trap model file not found: {cfg.trap_file}")
        if not Path(cfg.path_file).exists():
            raise PipelineError("load", f"path file not found: {cfg.path_file}")
        trap = load_trap_model(cfg.trap_file)
        path, penalty_params = load_path_spec(cfg.path_file)
        penalty_params.update(cfg.penalties)

    with _stage("expand", timings):
        kappa = cfg.kappa if cfg.kappa else 1e-2 * trap.characteristic_length
        key = multipole.expansion_cache_key(trap, path, cfg.order, cfg.grid_points, kappa)
        cache_file = _cache_dir(cfg) / f"expansion-{key}.npz"
        if cfg.use_cache and cache_file.exists():
            es = multipole.load_expansion_set(cache_file)
            logger.info("expansion cache hit: %s", cache_file)
        else:
            es = multipole.expand_along_path(trap, path, cfg.order, cfg.grid_points, kappa)
            if cfg.use_cache:
                cache_file.parent.mkdir(parents=True, exist_ok=True)
                multipole.save_expansion_set(es, cache_file)
        bundle["expansion_cache"] = str(cache_file)

    with _stage("solve", timings):
        weights = PenaltyWeights.build(path, trap, **_weight_kwargs(penalty_params))
        system = solver.assemble_system(es, path, weights, trap)
        sol = solver.solve_system(system, tol=cfg.solver_tol,
                                  max_iter=cfg.solver_max_iter,
                                  method=cfg.solver_method)
        sol.penalties = solver.penalty_breakdown(sol, es, path, weights, trap)
        solution_csv = out / "solution.csv"
        solver.solution_to_csv(sol, solution_csv)
        bundle["solution"] = str(solution_csv)

    with _stage("analyze", timings):
        metrics = solver.analyze_solution(sol, es, path, trap)
        metrics_json = out / "metrics.json"
        solver.metrics_to_json(metrics, metrics_json,
                               extra={"residual": sol.residual,
                                      "penalties": sol.penalties,
                                      "timings": timings})
        bundle["metrics"] = str(metrics_json)

    wf = None
    if cfg.run_waveform:
        with _stage("waveform", timings):
            splines = waveform.interpolate_solution(sol.voltages)
            wf = waveform.map_and_resample(splines, waveform.sigmoid_map,
                                           cfg.resample_points,
                                           sample_period=cfg.total_time / cfg.resample_points)
            waveform.waveform_to_csv(wf, out / "waveform.csv")
            bundle["waveform"] = str(out / "waveform.csv")
            if cfg.kernel_file:
                kernel = waveform.load_kernel_csv(cfg.kernel_file, cfg.kernel_kind)
                pre, report = waveform.invert_filter(wf, kernel, cfg.padding,
                                                     cfg.regularization,
                                                     slew_limit=cfg.slew_limit)
                waveform.waveform_to_csv(pre, out / "preramp.csv")
                filtered = waveform.apply_kernel(kernel, pre, 0)
                waveform.waveform_to_csv(filtered, out / "preramp_filtered.csv")
                bundle["preramp"] = str(out / "preramp.csv")
                bundle["preramp_filtered"] = str(out / "preramp_filtered.csv")
                bundle["preramp_report"] = report

    if cfg.run_simulation:
        with _stage("simulate", timings):
            drive = wf if wf is not None else waveform.Waveform(sol.voltages)
            interp = dyn.FieldInterpolant(es, trap, drive, cfg.total_time)
            start = path.positions[0, 0]
            state = dyn.SimulationState(positions=[start], velocities=[np.zeros(3)])
            omega_max = float(path.omega_ref.max())
            if cfg.time_step is None:
                base = 2 * np.pi / (omega_max if cfg.simulation_mode == "pseudo" else trap.omega)
                dt = base / (22.0 if cfg.simulation_mode == "pseudo" else 55.0)
            else:
                dt = cfg.time_step
            traj, report = dyn.verlet_run(state, interp, cfg.total_time, dt,
                                          mode=cfg.simulation_mode,
                                          record_every=max(1, int(cfg.total_time / dt) // 2000))
            dyn.trajectory_to_csv(traj, out / "trajectory.csv")
            with open(out / "excitation.json", "w") as fh:
                json.dump(report.to_dict(), fh, indent=1)
            bundle["trajectory"] = str(out / "trajectory.csv")
            bundle["excitation"] = str(out / "excitation.json")

    if cfg.run_validity:
        with _stage("validate", timings):
            vel = None
            if cfg.run_waveform:
                # transport speed from the mapped positions over the total time
                seg = np.linalg.norm(np.diff(path.positions, axis=1), axis=-1)
                s = np.concatenate([np.zeros((path.n_wells, 1)), np.cumsum(seg, axis=1)], axis=1)
                tau = np.linspace(0.0, 1.0, path.n_steps)
                f = waveform.sigmoid_map(tau)
                df = np.gradient(f, tau)
                vel = np.abs(np.gradient(s, axis=1) / np.gradient(tau) * df) / cfg.total_time
            rep = validity.validity_report(sol, es, path, trap,
                                           threshold=cfg.validity_threshold,
                                           well_velocities=vel,
                                           noise_density=cfg.noise_density)
            with open(out / "validity.json", "w") as fh:
                json.dump(rep.to_dict(), fh, indent=1)
            bundle["validity"] = str(out / "validity.json")

    with _stage("plot-data", timings):
        emit_plot_data(bundle, sol, metrics, path, out)

    with open(out / "timings.json", "w") as fh:
        json.dump(timings, fh, indent=1)
    bundle["timings"] = timings
    return bundle


def _weight_kwargs(params: dict) -> dict:
    known = {"delta_u", "delta_omega", "w3_scale", "w4", "d_inner", "d_outer",
             "l_big", "always_active", "v_hat", "w5_scale", "w5_steps"}
    unknown = set(params) - known
    if unknown:
        raise ValueError(f"unknown penalty parameters: {sorted(unknown)}")
    return params


def emit_plot_data(bundle: dict, sol, metrics, path: ShuttlingPath, out: Path) -> None:
    """Columnar per-figure files for external plotting tools."""
    s = np.concatenate([[0.0], np.cumsum(
        np.linalg.norm(np.diff(path.positions[0], axis=0), axis=1))])
    V = sol.voltages
    np.savetxt(out / "plot_voltages.csv",
               np.column_stack([s, V.T]), delimiter=",",
               header="position," + ",".join(f"V{n}" for n in range(V.shape[0])),
               comments="", fmt="%.17g")
    np.savetxt(out / "plot_position_deviation.csv",
               np.column_stack([s, metrics.delta_r[0]]), delimiter=",",
               header="position,dx,dy,dz", comments="", fmt="%.17g")
    np.savetxt(out / "plot_frequencies.csv",
               np.column_stack([s, metrics.omegas[0]]), delimiter=",",
               header="position,w1,w2,w3", comments="", fmt="%.17g")
    if "preramp" in bundle:
        desired = waveform.waveform_from_csv(bundle["waveform"])
        pre = waveform.waveform_from_csv(bundle["preramp"])
        filt = waveform.waveform_from_csv(bundle["preramp_filtered"])
        pad = (pre.n_samples - desired.n_samples) // 2
        core = slice(pad, pad + desired.n_samples)
        np.savetxt(out / "plot_preramp.csv",
                   np.column_stack([desired.samples[0],
                                    pre.samples[0, core],
                                    filt.samples[0, core]]),
                   delimiter=",", header="desired,preramp,filtered_preramp",
                   comments="", fmt="%.17g")
    bundle["plot_data"] = [str(out / n) for n in
                           ("plot_voltages.csv", "plot_position_deviation.csv",
                            "plot_frequencies.csv")]


def write_demo_inputs(name: str, directory) -> tuple[str, str, dict]:
    """Create trap model, path spec and config files for a named demo.

    Demos: ``linear`` (multi-segment transport in a uniform linear trap) and
    ``junction`` (90 degree corner shuttling in an X junction).
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if name == "linear":
        trap, omega_ref = traps.linear_trap()
        path_spec = {
            "wells": [{"segments": [
                {"type": "line", "start": [-400e-6, 0.0, 0.0],
                 "stop": [400e-6, 0.0, 0.0], "steps": 400}]}],
            "up_hint": [0.0, 1.0, 0.0],
            "omega_ref": omega_ref.tolist(),
            "penalties": {"delta_u": 1e-9, "delta_omega": 2 * np.pi * 1e3,
                          "w3_scale": 1e-2, "w4": 1e-2,
                          "always_active": [trap.n_dc - 1]},
        }
        config = {"trap_file": "trap.json", "path_file": "path.json",
                  "outdir": "out-linear", "order": 3, "grid_points": 25,
                  "run_simulation": False, "total_time": 2e-4}
    elif name == "junction":
        trap, omega_ref = traps.xjunction_trap()
        path_spec = {
            "wells": [{"segments": [
                {"type": "line", "start": [-450e-6, 0.0, 0.0],
                 "stop": [-50e-6, 0.0, 0.0], "steps": 100},
                {"type": "arc", "center": [-50e-6, 50e-6, 0.0],
                 "start": [-50e-6, 0.0, 0.0], "normal": [0.0, 0.0, 1.0],
                 "angle_deg": 90.0, "steps": 101},
                {"type": "line", "start": [0.0, 50e-6, 0.0],
                 "stop": [0.0, 450e-6, 0.0], "steps": 101}]}],
            "up_hint": [0.0, 0.0, 1.0],
            "omega_ref": omega_ref.tolist(),
            "penalties": {"delta_u": 1e-9,
                          "delta_omega": (2 * np.pi * np.array([5e4, 1.5e6, 1.5e6])).tolist(),
                          "w3_scale": 1e-3, "w4": 1e-2,
                          "d_inner": 150e-6, "d_outer": 450e-6},
        }
        config = {"trap_file": "trap.json", "path_file": "path.json",
                  "outdir": "out-junction", "order": 3, "grid_points": 25,
                  "solver_method": "cg", "run_simulation": False}
    else:
        raise ValueError(f"unknown demo {name!r} (available: linear, junction)")
    save_trap_model(trap, directory / "trap.json")
    with open(directory / "path.json", "w") as fh:
        json.dump(path_spec, fh, indent=1)
    with open(directory / "config.json", "w") as fh:
        json.dump(config, fh, indent=1)
    return str(directory / "config.json"), str(directory / "trap.json"), config
