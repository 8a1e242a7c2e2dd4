"""``phdamp`` command line: build, solve, analyze, plotdata."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np
import tomli

from . import runner
from .phmodel import export_system, sym_part_identity_residual, to_port_hamiltonian
from .scenario import ConfigError, build_structure, load_scenario
from .structure import assemble, load_structure, model_summary

log = logging.getLogger("phdamp")


def _horizons(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad horizon list {text!r}") from None
    if any(v <= 0 for v in vals):
        raise argparse.ArgumentTypeError("horizon multipliers must be positive")
    return vals


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="phdamp", description="Optimal vibration damping of port-Hamiltonian frames.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)

    b = sub.add_parser("build", help="assemble a structure (or a scenario's structure) and export J, R, Q, B")
    b.add_argument("--config", required=True, type=Path)
    b.add_argument("--out", required=True, type=Path)

    s = sub.add_parser("solve", help="run every cost entry of a scenario")
    s.add_argument("--config", required=True, type=Path)
    s.add_argument("--out", required=True, type=Path)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--horizons", type=_horizons, default=None, help="comma-separated multipliers of T, e.g. 1,2,4")
    s.add_argument("--fine-grid", type=int, default=None, help="intervals of the replay grid")
    s.add_argument("--tol", type=float, default=None, help="solver eps_abs = eps_rel")

    a = sub.add_parser("analyze", help="post-hoc optimality analysis of a run directory")
    a.add_argument("--out", required=True, type=Path, help="run directory")

    d = sub.add_parser("plotdata", help="write figure-panel CSVs for a run directory")
    d.add_argument("--out", required=True, type=Path, help="run directory")
    return p


def _build(args) -> int:
    text = args.config.read_text()
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{args.config}: {exc}") from None
    spec = load_structure(args.config) if "nodes" in doc else build_structure(load_scenario(args.config))
    model = assemble(spec)
    sys_ = to_port_hamiltonian(model)
    args.out.mkdir(parents=True, exist_ok=True)
    export_system(sys_, args.out)
    record = model_summary(spec, model)
    record["n_states"] = sys_.n
    record["skew_residual"] = sym_part_identity_residual(sys_)
    record["max_real_eig"] = float(np.linalg.eigvals(sys_.A).real.max())
    runner.write_kv(args.out / "model.txt", record)
    print(f"{spec.name}: {model.n_dof} DOFs, {sys_.n} states, {model.m} actuators -> {args.out}")
    return 0


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    out = getattr(args, "out", Path("."))
    try:
        if args.verb == "build":
            return _build(args)
        if args.verb == "solve":
            if args.jobs < 1:
                raise ConfigError("--jobs must be at least 1")
            results = runner.run_scenario(args.config, args.out, args.jobs, args.horizons, args.fine_grid, args.tol)
            print((args.out / "comparison.txt").read_text(), end="")
            log.info("%d entries solved", len(results))
            return 0
        if args.verb == "analyze":
            for slug, rec in runner.analyze_run(args.out).items():
                print(f"{slug}: " + ", ".join(f"{k}={runner.fmt(v)}" for k, v in rec.items() if k != "label"))
            return 0
        if args.verb == "plotdata":
            for p in runner.emit_plot_data(args.out):
                print(p)
            return 0
    except Exception as exc:  # every failure becomes an exit code plus error record
        code = runner.exit_code_for(exc)
        try:
            out.mkdir(parents=True, exist_ok=True)
            runner.write_error(out, exc, args.verb)
        except OSError:
            pass
        print(f"phdamp {args.verb}: {type(exc).__name__}: {exc}", file=sys.stderr)
        if args.verbose:
            raise
        return code
    return 2


if __name__ == "__main__":
    sys.exit(main())
