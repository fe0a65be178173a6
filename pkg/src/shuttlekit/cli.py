"""Command line entry points for the shuttling toolchain.

Subcommands mirror the pipeline stages: ``expand``, ``solve``, ``waveform``,
``simulate``, ``validate``, plus ``run`` for the whole pipeline and
``demo <name>`` to generate and execute a bundled example. Exit codes:
0 success, 1 configuration error, 2 stage failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .pipeline import PipelineConfig, PipelineError, run_pipeline, write_demo_inputs


def _add_common(p):
    p.add_argument("config", help="pipeline config file (JSON)")
    p.add_argument("--outdir", help="override the output directory")


def _load_config(args) -> PipelineConfig:
    cfg = PipelineConfig.from_file(args.config)
    if getattr(args, "outdir", None):
        cfg.outdir = args.outdir
    return cfg


def _restrict(cfg: PipelineConfig, *, wave=False, sim=False, valid=False):
    cfg.run_waveform = wave
    cfg.run_simulation = sim
    cfg.run_validity = valid
    return cfg


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="shuttlekit",
        description="compute and postprocess ion shuttling voltage sequences")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, desc in (("expand", "compute multipole expansions only"),
                       ("solve", "expand and solve for voltages"),
                       ("waveform", "solve and produce waveforms"),
                       ("simulate", "solve, map and run the ion dynamics"),
                       ("validate", "solve and evaluate validity criteria"),
                       ("run", "run the full pipeline")):
        p = sub.add_parser(name, help=desc)
        _add_common(p)

    d = sub.add_parser("demo", help="generate and run a bundled demo")
    d.add_argument("name", choices=["linear", "junction"])
    d.add_argument("--outdir", default=None)
    d.add_argument("--no-run", action="store_true",
                   help="only write the demo input files")

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")

    try:
        if args.command == "demo":
            outdir = args.outdir or f"demo-{args.name}"
            config_file, _, _ = write_demo_inputs(args.name, outdir)
            print(f"demo inputs written to {outdir}")
            if args.no_run:
                return 0
            cfg = PipelineConfig.from_file(config_file)
        else:
            cfg = _load_config(args)
            if args.command == "expand":
                _restrict(cfg)
                cfg = _expand_only(cfg)
                print(json.dumps(cfg, indent=1))
                return 0
            if args.command == "solve":
                _restrict(cfg)
            elif args.command == "waveform":
                _restrict(cfg, wave=True)
            elif args.command == "simulate":
                _restrict(cfg, wave=True, sim=True)
            elif args.command == "validate":
                _restrict(cfg, valid=True)
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1

    try:
        bundle = run_pipeline(cfg)
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(json.dumps({k: v for k, v in bundle.items() if isinstance(v, (str, list))},
                     indent=1))
    return 0


def _expand_only(cfg: PipelineConfig) -> dict:
    """Run just the expansion stage and report the cache location."""
    from . import multipole
    from .path import load_path_spec
    from .potentials import load_trap_model
    import os

    trap = load_trap_model(cfg.trap_file)
    path, _ = load_path_spec(cfg.path_file)
    kappa = cfg.kappa if cfg.kappa else 1e-2 * trap.characteristic_length
    es = multipole.expand_along_path(trap, path, cfg.order, cfg.grid_points, kappa)
    key = multipole.expansion_cache_key(trap, path, cfg.order, cfg.grid_points, kappa)
    cache = Path(os.environ.get("SHUTTLEKIT_CACHE", Path(cfg.outdir) / "cache"))
    cache.mkdir(parents=True, exist_ok=True)
    target = cache / f"expansion-{key}.npz"
    multipole.save_expansion_set(es, target)
    return {"expansion_cache": str(target),
            "wells": es.n_wells, "steps": es.n_steps,
            "electrodes": es.n_electrodes, "coefficients": int(es.dc_coeffs.shape[-1])}


if __name__ == "__main__":
    sys.exit(main())
