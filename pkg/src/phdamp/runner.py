"""Scenario runs: solve every cost entry, replay, audit and write artifacts.

Run directory layout::

    run.toml                  resolved scenario (absolute paths)
    comparison.csv / .txt     ledger table from fine-grid replays
    <slug>/summary.txt        key = value record
    <slug>/trajectory.csv     coarse grid, all states
    <slug>/replay.csv         fine grid, upmost-level states only
    <slug>/arcs.csv           arc partition of the control channels
    <slug>/solution.npz       arrays for post-hoc analysis
    turnpike_<slug>.csv/.txt  horizon sweep (when requested)
    error.txt                 written instead of the above on failure
"""

from __future__ import annotations

import csv
import io
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import tomli
import tomli_w

from .analysis import compare_costs, classify_arcs, turnpike_metrics
from .integrator import EnergyLedger, IntegratorError, energy_audit, replay, write_trajectory_csv
from .ocp.problem import OCPError
from .ocp.qp import QPSolverError
from .ocp.solution import OCPSolution, solve_ocp
from .scenario import ConfigError, CostEntry, ScenarioConfig, Setup, build_setup, load_scenario
from .structure import StructureError
from .phmodel import PHModelError

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_INVARIANT = 0, 2, 3, 4


class InvariantViolation(RuntimeError):
    pass


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, (ConfigError, StructureError, PHModelError, FileNotFoundError)):
        return EXIT_CONFIG
    if isinstance(exc, (InvariantViolation, IntegratorError)):
        return EXIT_INVARIANT
    if isinstance(exc, (OCPError, QPSolverError)):
        return EXIT_SOLVER
    return EXIT_INVARIANT


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.10e}"
    return str(v)


def write_kv(path: Path, record: dict) -> None:
    atomic_write(path, "".join(f"{k} = {fmt(v)}\n" for k, v in record.items()))


def read_kv(path: Path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text().splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
    return out


def atomic_write(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def check_invariants(sol: OCPSolution, fine: EnergyLedger) -> None:
    for name, led in (("coarse", sol.ledger), ("fine", fine)):
        try:
            led.check(1e-8)
        except IntegratorError as exc:
            raise InvariantViolation(f"{name} ledger: {exc}") from None
    if not sol.kkt.ok(1e-6, 1e-9):
        raise InvariantViolation(f"KKT certificate failed: {sol.kkt}")
    if sol.stats["box_violation"] > 1e-9:
        raise InvariantViolation(f"box violated by {sol.stats['box_violation']:.3e}")


@dataclass
class EntryResult:
    entry: CostEntry
    fine: EnergyLedger
    coarse: EnergyLedger


def _run_entry(cfg: ScenarioConfig, entry: CostEntry, out: Path, tol: float | None) -> EntryResult:
    setup = build_setup(cfg)
    spec = setup.ocp(entry)
    sol = solve_ocp(spec, cfg.solver_config(tol))
    fine = replay(setup.sys, setup.x0, sol.u, spec.grid, cfg.N_fine)
    fine_ledger = energy_audit(setup.sys, fine)
    check_invariants(sol, fine_ledger)

    d = out / entry.slug
    d.mkdir(parents=True, exist_ok=True)
    part = classify_arcs(sol.switching, sol.u, spec.u_min, spec.u_max, rel=cfg.tau_s_rel, tau_len=cfg.tau_len)
    record = {
        "label": entry.label,
        "cost": entry.kind,
        "mu": entry.mu if entry.mu is not None else "none",
        "T": cfg.T,
        "N": cfg.N,
        "N_fine": cfg.N_fine,
        "status": sol.stats["status"],
        "iterations": sol.stats["iterations"],
        "polished": sol.stats["polished"],
        "objective": sol.objective,
        "direct_objective": sol.direct_objective,
        **{f"coarse_{k}": v for k, v in sol.ledger.as_dict().items()},
        **{f"fine_{k}": v for k, v in fine_ledger.as_dict().items()},
        "kkt_stationarity": sol.kkt.stationarity,
        "kkt_primal": sol.kkt.primal,
        "kkt_complementarity": sol.kkt.complementarity,
        "box_violation": sol.stats["box_violation"],
        "dynamics_residual": sol.stats["dynamics_residual"],
        "saturated_fraction": float(part.saturated.mean()),
        "tau_s": part.tau_s,
    }
    write_kv(d / "summary.txt", record)
    buf = io.StringIO()
    write_trajectory_csv(buf, setup.sys, sol.traj)
    atomic_write(d / "trajectory.csv", buf.getvalue())
    buf = io.StringIO()
    write_trajectory_csv(buf, setup.sys, fine, state_indices=_top_state_indices(setup))
    atomic_write(d / "replay.csv", buf.getvalue())
    atomic_write(d / "arcs.csv", _arcs_csv(part, spec.grid.h))
    np.savez(d / "solution.npz", x=sol.x, u=sol.u, lam=sol.lam, nu=sol.nu, x_fine=fine.x, u_fine=fine.u)
    return EntryResult(entry, fine_ledger, sol.ledger)


def _top_state_indices(setup: Setup) -> list[int]:
    k = setup.model.n_dof
    return [*setup.top_dofs.tolist(), *(k + setup.top_dofs).tolist()]


def _arcs_csv(part, h: float) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["channel", "kind", "start", "stop", "t_start", "t_stop"])
    for a in part.arcs:
        w.writerow([a.channel + 1, a.kind, a.start, a.stop, f"{a.start * h:.10e}", f"{a.stop * h:.10e}"])
    return buf.getvalue()


def _run_turnpike(cfg: ScenarioConfig, entry: CostEntry, out: Path, tol: float | None) -> None:
    setup = build_setup(cfg)
    sols = []
    for mult in sorted(cfg.horizons):
        T = cfg.T * mult
        N = max(1, int(round(cfg.N * mult)))
        sols.append(solve_ocp(setup.ocp(entry, T, N), cfg.solver_config(tol)))
    rep = turnpike_metrics(sols, setup.W, label=entry.label)
    atomic_write(out / f"turnpike_{entry.slug}.csv", rep.to_csv())
    atomic_write(out / f"turnpike_{entry.slug}.txt", rep.to_text())


def resolved_document(cfg_path: Path) -> dict:
    """Scenario document with paths made absolute, for re-use from the run directory."""
    cfg_path = Path(cfg_path).resolve()
    doc = tomli.loads(cfg_path.read_text())
    base = cfg_path.parent
    st = doc.get("structure", {})
    if "file" in st:
        st["file"] = str((base / st["file"]).resolve())
    for sec in ("weight", "x0"):
        if "file" in doc.get(sec, {}):
            doc[sec]["file"] = str((base / doc[sec]["file"]).resolve())
    return doc


def run_scenario(
    config_path: str | Path,
    out_dir: str | Path,
    jobs: int = 1,
    horizons=None,
    fine_grid: int | None = None,
    tol: float | None = None,
) -> list[EntryResult]:
    cfg = load_scenario(config_path).with_overrides(fine_grid, horizons)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = resolved_document(config_path)
    doc.setdefault("horizon", {})["N_fine"] = cfg.N_fine
    if cfg.horizons:
        doc.setdefault("analysis", {})["horizons"] = list(cfg.horizons)
    atomic_write(out / "run.toml", tomli_w.dumps(doc))
    build_setup(cfg)  # fail early on configuration problems

    tasks = [(_run_entry, e) for e in cfg.costs]
    if len(cfg.horizons) >= 1:
        if len(cfg.horizons) < 3:
            raise ConfigError("turnpike sweep needs at least three horizons")
        tasks += [(_run_turnpike, e) for e in cfg.costs if e.kind != "uncontrolled"]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(fn, cfg, e, out, tol) for fn, e in tasks]
            values = [f.result() for f in futures]
    else:
        values = [fn(cfg, e, out, tol) for fn, e in tasks]
    results = [v for v in values if isinstance(v, EntryResult)]

    table = compare_costs([(r.entry.label, r.fine) for r in results])
    atomic_write(out / "comparison.csv", table.to_csv())
    atomic_write(out / "comparison.txt", table.to_text())
    err = out / "error.txt"
    if err.exists():
        err.unlink()
    return results


def write_error(out_dir: str | Path, exc: BaseException, stage: str) -> int:
    code = exit_code_for(exc)
    write_kv(
        Path(out_dir) / "error.txt",
        {"exit_code": code, "stage": stage, "error": type(exc).__name__, "message": str(exc).replace("\n", " ")},
    )
    return code


# ---------------------------------------------------------------------------
# post-hoc analysis and plot data
# ---------------------------------------------------------------------------


def _load_run(run_dir: Path) -> tuple[ScenarioConfig, Setup, list[tuple[CostEntry, dict]]]:
    run_dir = Path(run_dir)
    cfg_path = run_dir / "run.toml"
    if not cfg_path.exists():
        raise ConfigError(f"{run_dir} holds no run.toml; run 'solve' first")
    cfg = load_scenario(cfg_path)
    setup = build_setup(cfg)
    entries = []
    for e in cfg.costs:
        f = run_dir / e.slug / "solution.npz"
        if not f.exists():
            raise ConfigError(f"missing artifact {f}")
        with np.load(f) as data:
            entries.append((e, {k: data[k] for k in data.files}))
    return cfg, setup, entries


def _rebuild(setup: Setup, entry: CostEntry, arrays: dict) -> OCPSolution:
    from .integrator import Trajectory

    spec = setup.ocp(entry)
    traj = Trajectory(spec.grid, arrays["x"], arrays["u"], arrays["lam"])
    led = energy_audit(setup.sys, traj)
    return OCPSolution(spec, traj, arrays["nu"], float("nan"), float("nan"), None, led, {})


def analyze_run(run_dir: str | Path) -> dict[str, dict]:
    """Re-derive residuals, arcs and singular-arc checks from saved solutions."""
    from .analysis import AnalysisError, check_singular_arcs, complementarity_violations, pontryagin_residual

    run_dir = Path(run_dir)
    cfg, setup, entries = _load_run(run_dir)
    report = {}
    for entry, arrays in entries:
        sol = _rebuild(setup, entry, arrays)
        spec = sol.spec
        rec: dict = {"label": entry.label}
        if entry.kind != "uncontrolled":
            pr = pontryagin_residual(setup.sys, setup.W, sol)
            rec.update({f"pontryagin_{k}": v for k, v in pr.as_dict().items()})
        part = classify_arcs(sol.switching, sol.u, spec.u_min, spec.u_max, rel=cfg.tau_s_rel, tau_len=cfg.tau_len)
        if entry.kind == "supplied-energy":
            rec["complementarity_violations"] = int(complementarity_violations(part, sol.u).sum())
        elif entry.kind == "quadratic":
            # the optimal control is the clipped adjoint feedback
            target = np.clip(-(sol.nu @ setup.sys.B) / (2 * entry.mu), spec.u_min, spec.u_max)
            rec["projection_residual"] = float(np.abs(sol.u - target).max() / max(np.abs(target).max(), 1e-300))
        rec["singular_intervals"] = int(part.singular.sum())
        rec["saturated_intervals"] = int(part.saturated.sum())
        sat_rows = np.flatnonzero(part.saturated.any(axis=1))
        rec["last_saturated_time"] = float((sat_rows.max() + 1) * spec.grid.h) if sat_rows.size else 0.0
        if entry.kind == "supplied-energy":
            try:
                chk = check_singular_arcs(sol, part)
                rec["singular_check_intervals"] = int(chk.intervals.size)
                rec["singular_check_max_rel_error"] = chk.max_rel_error
                rec["singular_check_max_rel_error_raw"] = chk.max_rel_error_raw
                rec["singular_gap_statement"] = chk.max_rel_gap_statement
                rec["singular_gap_printed"] = chk.max_rel_gap_printed
            except AnalysisError as exc:
                rec["singular_check"] = f"skipped ({exc})"
        rec["balance_residual"] = sol.ledger.balance_residual
        write_kv(run_dir / entry.slug / "analysis.txt", rec)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t_mid", *(f"s_{j + 1}" for j in range(setup.sys.m))])
        for t, row in zip(spec.grid.t_mid, sol.switching):
            w.writerow([f"{t:.10e}", *(f"{v:.10e}" for v in row)])
        atomic_write(run_dir / entry.slug / "switching.csv", buf.getvalue())
        report[entry.slug] = rec
    return report


def emit_plot_data(run_dir: str | Path) -> list[Path]:
    """One CSV per figure panel, built from the fine-grid replays."""
    from .integrator import TimeGrid, step_energy_terms, Trajectory
    from .phmodel import hamiltonian

    run_dir = Path(run_dir)
    cfg, setup, entries = _load_run(run_dir)
    fine = TimeGrid(cfg.T, cfg.N_fine)
    coarse = TimeGrid(cfg.T, cfg.N)
    cols, withdrawn, energy, disp = [], [], [], []
    ux = [i for i in setup.top_dofs if setup.model.dof_labels[i].axis == "ux"]
    probe = ux[0] if ux else int(setup.top_dofs[0])
    written = []
    for entry, arrays in entries:
        traj = Trajectory(fine, arrays["x_fine"], arrays["u_fine"])
        supplied, _, _ = step_energy_terms(setup.sys, traj)
        cols.append(entry.slug)
        withdrawn.append(np.r_[0.0, np.cumsum(-supplied)] + 0.0)  # no negative zeros
        energy.append(np.atleast_1d(hamiltonian(setup.sys, traj.x)))
        disp.append(traj.x[:, setup.model.n_dof + probe])
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        m = arrays["u"].shape[1]
        w.writerow(["t", *(f"u_{j + 1}" for j in range(m)), "u_min", "u_max"])
        lo, hi = (0.0, 0.0) if entry.kind == "uncontrolled" else (cfg.u_min, cfg.u_max)
        for t, row in zip(coarse.t[:-1], arrays["u"]):
            w.writerow([f"{t:.10e}", *(f"{v:.10e}" for v in row), f"{lo:.10e}", f"{hi:.10e}"])
        p = run_dir / f"plot_controls_{entry.slug}.csv"
        atomic_write(p, buf.getvalue())
        written.append(p)
    for name, series in (("withdrawn", withdrawn), ("hamiltonian", energy), ("displacement", disp)):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", *cols])
        for k, t in enumerate(fine.t):
            w.writerow([f"{t:.10e}", *(f"{s[k]:.10e}" for s in series)])
        p = run_dir / f"plot_{name}.csv"
        atomic_write(p, buf.getvalue())
        written.append(p)
    return written
