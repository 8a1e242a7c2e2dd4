"""Scenario files: which structure, weight, costs, horizon, box and initial state to run.

Scenario files are TOML documents; see ``docs/scenario_format.md``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla
import tomli

from .integrator import TimeGrid
from .ocp.problem import (
    OCPSpec,
    QuadraticControl,
    StateWeight,
    SuppliedEnergy,
    full_hamiltonian_weight,
    restricted_hamiltonian_weight,
    weight_from_matrix,
    zero_weight,
)
from .ocp.qp import QPSolverConfig
from .phmodel import PHSystem, hamiltonian, state_from_second_order, to_port_hamiltonian
from .structure import SecondOrderModel, StructureSpec, assemble, generate_frame, load_structure, top_nodes


class ConfigError(ValueError):
    pass


_FORCE = re.compile(r"^\s*([-+0-9.eE]+)\s*(N|kN|MN)?\s*$")
_UNITS = {None: 1.0, "N": 1.0, "kN": 1e3, "MN": 1e6}


def parse_force(value) -> float:
    """Number in N, or a string with an explicit ``N``/``kN``/``MN`` suffix."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if isinstance(value, str):
        m = _FORCE.match(value)
        if m:
            try:
                return float(m.group(1)) * _UNITS[m.group(2)]
            except ValueError:
                pass
    raise ConfigError(f"cannot read force value {value!r}")


@dataclass(frozen=True)
class X0Recipe:
    kind: str = "static-deflection"  # static-deflection | modal | file | rest
    energy: float | None = 13906.0
    direction: str = "x"
    mode: int = 1
    amplitude: float | None = None
    path: Path | None = None

    def __post_init__(self):
        if self.kind not in ("static-deflection", "modal", "file", "rest"):
            raise ConfigError(f"x0.kind: unknown recipe {self.kind!r}")
        if self.kind == "static-deflection" and self.direction not in ("x", "y"):
            raise ConfigError("x0.direction must be 'x' or 'y'")
        if self.kind == "file" and self.path is None:
            raise ConfigError("x0.file: path missing")
        if self.energy is not None and self.energy <= 0 and self.kind != "rest":
            raise ConfigError("x0.energy must be positive")


@dataclass(frozen=True)
class CostEntry:
    kind: str  # uncontrolled | quadratic | supplied-energy
    mu: float | None = None

    @property
    def label(self) -> str:
        if self.kind == "quadratic":
            return f"quadratic mu={self.mu:g}"
        return self.kind

    @property
    def slug(self) -> str:
        if self.kind == "quadratic":
            return f"quadratic_mu{self.mu:g}"
        return self.kind.replace("-", "_")


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    structure_file: Path | None
    generator: dict
    weight: str
    weight_file: Path | None
    costs: tuple[CostEntry, ...]
    T: float
    N: int
    N_fine: int
    u_min: float
    u_max: float
    x0: X0Recipe
    horizons: tuple[float, ...] = ()
    tau_s_rel: float = 1e-4
    tau_len: int = 3
    solver: dict = field(default_factory=dict)
    base_dir: Path = Path(".")

    def __post_init__(self):
        if self.N < 1 or self.T <= 0:
            raise ConfigError("horizon: need T > 0 and N >= 1")
        if self.N_fine < self.N:
            raise ConfigError("horizon: N_fine must be at least N")
        if not self.u_min < 0 < self.u_max:
            raise ConfigError("box: need u_min < 0 < u_max")
        if not self.costs:
            raise ConfigError("costs: at least one entry required")
        if self.weight not in ("full-hamiltonian", "upmost-level", "matrix", "zero"):
            raise ConfigError(f"weight.kind: unknown choice {self.weight!r}")

    def solver_config(self, tol: float | None = None) -> QPSolverConfig:
        opts = dict(self.solver)
        if tol is not None:
            opts["eps_abs"] = opts["eps_rel"] = tol
        try:
            return QPSolverConfig(**opts)
        except TypeError as exc:
            raise ConfigError(f"solver: {exc}") from None

    def with_overrides(self, fine_grid: int | None = None, horizons=None) -> "ScenarioConfig":
        cfg = self
        if fine_grid is not None:
            cfg = replace(cfg, N_fine=int(fine_grid))
        if horizons is not None:
            cfg = replace(cfg, horizons=tuple(float(h) for h in horizons))
        return cfg


def _section(doc: dict, name: str) -> dict:
    t = doc.get(name, {})
    if not isinstance(t, dict):
        raise ConfigError(f"{name}: expected a table")
    return t


def parse_scenario(text: str, base_dir: str | Path = ".") -> ScenarioConfig:
    base = Path(base_dir)
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"scenario: {exc}") from None

    st = _section(doc, "structure")
    sfile = st.get("file")
    gen = dict(st.get("generator", {}))
    if (sfile is None) == (not gen):
        raise ConfigError("structure: give exactly one of 'file' or a [structure.generator] table")

    wt = _section(doc, "weight")
    wkind = wt.get("kind", "full-hamiltonian")
    wfile = wt.get("file")
    if wkind == "matrix" and wfile is None:
        raise ConfigError("weight: kind 'matrix' needs 'file'")

    hz = _section(doc, "horizon")
    try:
        T, N = float(hz["T"]), int(hz["N"])
    except KeyError as exc:
        raise ConfigError(f"horizon: missing {exc.args[0]!r}") from None
    N_fine = int(hz.get("N_fine", max(N, 1000)))

    bx = _section(doc, "box")
    if "u_max" not in bx:
        raise ConfigError("box: missing 'u_max'")
    u_max = parse_force(bx["u_max"])
    u_min = parse_force(bx["u_min"]) if "u_min" in bx else -u_max

    costs = []
    for i, c in enumerate(doc.get("costs", [])):
        kind = c.get("kind")
        if kind == "quadratic":
            mus = c.get("mu")
            if mus is None:
                raise ConfigError(f"costs[{i}]: quadratic cost needs 'mu'")
            for mu in mus if isinstance(mus, list) else [mus]:
                if not float(mu) > 0:
                    raise ConfigError(f"costs[{i}]: mu must be positive")
                costs.append(CostEntry("quadratic", float(mu)))
        elif kind in ("supplied-energy", "uncontrolled"):
            costs.append(CostEntry(kind))
        else:
            raise ConfigError(f"costs[{i}]: unknown kind {kind!r}")

    xt = _section(doc, "x0")
    kind = xt.get("kind", "static-deflection")
    energy = xt.get("energy", 13906.0 if kind != "rest" else None)
    x0 = X0Recipe(
        kind=kind,
        energy=None if energy is None else float(energy),
        direction=xt.get("direction", "x"),
        mode=int(xt.get("mode", 1)),
        amplitude=None if "amplitude" not in xt else float(xt["amplitude"]),
        path=None if "file" not in xt else base / xt["file"],
    )

    an = _section(doc, "analysis")
    return ScenarioConfig(
        name=str(doc.get("name", "scenario")),
        structure_file=None if sfile is None else base / sfile,
        generator=gen,
        weight=wkind,
        weight_file=None if wfile is None else base / wfile,
        costs=tuple(costs),
        T=T,
        N=N,
        N_fine=N_fine,
        u_min=u_min,
        u_max=u_max,
        x0=x0,
        horizons=tuple(float(h) for h in an.get("horizons", [])),
        tau_s_rel=float(an.get("tau_s_rel", 1e-4)),
        tau_len=int(an.get("tau_len", 3)),
        solver=dict(_section(doc, "solver")),
        base_dir=base,
    )


def load_scenario(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read scenario {path}: {exc.strerror}") from None
    return parse_scenario(text, path.parent)


# ---------------------------------------------------------------------------
# building blocks
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class Setup:
    """Everything derived from a scenario that every cost entry shares."""

    cfg: ScenarioConfig
    structure: StructureSpec
    model: SecondOrderModel
    sys: PHSystem
    W: StateWeight
    x0: np.ndarray
    top_dofs: np.ndarray

    def ocp(self, entry: CostEntry, T: float | None = None, N: int | None = None) -> OCPSpec:
        grid = TimeGrid(T or self.cfg.T, N or self.cfg.N)
        if entry.kind == "uncontrolled":
            return OCPSpec(self.sys, self.W, QuadraticControl(1.0), 0.0, 0.0, self.x0, grid, "uncontrolled")
        cost = QuadraticControl(entry.mu) if entry.kind == "quadratic" else SuppliedEnergy()
        return OCPSpec(self.sys, self.W, cost, self.cfg.u_min, self.cfg.u_max, self.x0, grid, entry.label)


def build_structure(cfg: ScenarioConfig) -> StructureSpec:
    if cfg.structure_file is not None:
        return load_structure(cfg.structure_file)
    try:
        return generate_frame(**cfg.generator)
    except TypeError as exc:
        raise ConfigError(f"structure.generator: {exc}") from None


def initial_state(recipe: X0Recipe, sys: PHSystem, model: SecondOrderModel) -> np.ndarray:
    k = model.n_dof
    if recipe.kind == "rest":
        return np.zeros(sys.n)
    if recipe.kind == "file":
        try:
            x0 = np.loadtxt(recipe.path, dtype=float).ravel()
        except OSError as exc:
            raise ConfigError(f"x0.file: {exc}") from None
        if x0.shape != (sys.n,):
            raise ConfigError(f"x0.file: expected {sys.n} values, found {x0.size}")
        return x0
    if recipe.kind == "static-deflection":
        axis = "u" + recipe.direction
        f = np.array([1.0 if d.axis == axis else 0.0 for d in model.dof_labels])
        if not f.any():
            raise ConfigError(f"x0: structure has no free {axis} DOFs")
        q = spla.spsolve(model.K.tocsc(), f)
    else:
        _, vecs = sla.eigh(model.K.toarray(), model.M.toarray())
        if not 1 <= recipe.mode <= k:
            raise ConfigError(f"x0.mode must lie in 1..{k}")
        q = vecs[:, recipe.mode - 1]
        q = q * np.sign(q[np.argmax(np.abs(q))])
    x0 = state_from_second_order(sys, q, np.zeros(k))
    if recipe.amplitude is not None:
        x0 *= recipe.amplitude / np.abs(q).max()
    elif recipe.energy is not None:
        x0 *= np.sqrt(recipe.energy / hamiltonian(sys, x0))
    return x0


def build_setup(cfg: ScenarioConfig) -> Setup:
    structure = build_structure(cfg)
    model = assemble(structure)
    sys = to_port_hamiltonian(model)
    top = model.dofs_of(top_nodes(structure))
    if cfg.weight == "full-hamiltonian":
        W = full_hamiltonian_weight(sys)
    elif cfg.weight == "upmost-level":
        W = restricted_hamiltonian_weight(sys, top)
    elif cfg.weight == "zero":
        W = zero_weight(sys)
    else:
        try:
            Wm = np.loadtxt(cfg.weight_file, dtype=float, ndmin=2)
        except OSError as exc:
            raise ConfigError(f"weight.file: {exc}") from None
        try:
            W = weight_from_matrix(sys, Wm, "matrix")
        except ValueError as exc:
            raise ConfigError(f"weight.file: {exc}") from None
    x0 = initial_state(cfg.x0, sys, model)
    return Setup(cfg, structure, model, sys, W, x0, top)
