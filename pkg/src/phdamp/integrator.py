"""Implicit midpoint simulation and discrete energy bookkeeping.

One step solves ``(x1 - x0)/h = A (x0 + x1)/2 + B u`` with ``u`` held
constant on the interval. Because the rule preserves quadratic forms, the
audit identity

    H(x1) - H(x0) = h * (-||R^{1/2} Q xm||^2 + u^T B^T Q xm),  xm = (x0 + x1)/2

holds to round-off, which is what :func:`energy_audit` relies on.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .phmodel import PHSystem, dissipation_rate, hamiltonian, output


class IntegratorError(RuntimeError):
    pass


@dataclass(frozen=True)
class TimeGrid:
    T: float
    N: int

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("TimeGrid needs N >= 1")
        if not self.T > 0:
            raise ValueError("TimeGrid needs T > 0")

    @property
    def h(self) -> float:
        return self.T / self.N

    @property
    def t(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.N + 1)

    @property
    def t_mid(self) -> np.ndarray:
        return (np.arange(self.N) + 0.5) * self.h


@dataclass
class Trajectory:
    grid: TimeGrid
    x: np.ndarray  # (N+1, n)
    u: np.ndarray  # (N, m)
    lam: np.ndarray | None = None  # (N+1, n)

    @property
    def x_mid(self) -> np.ndarray:
        return 0.5 * (self.x[1:] + self.x[:-1])


@dataclass(frozen=True)
class EnergyLedger:
    withdrawn: float
    dissipated: float
    remaining: float
    initial: float

    @property
    def balance_residual(self) -> float:
        return abs(self.initial - self.remaining - self.dissipated - self.withdrawn)

    def as_dict(self) -> dict[str, float]:
        return {
            "withdrawn": self.withdrawn,
            "dissipated": self.dissipated,
            "remaining": self.remaining,
            "initial": self.initial,
            "balance_residual": self.balance_residual,
        }

    def check(self, rtol: float = 1e-8) -> None:
        """Raise if the energy identity or sign constraints are violated."""
        scale = max(self.initial, 1e-300)
        if self.balance_residual > rtol * scale and self.initial > 0:
            raise IntegratorError(f"energy balance violated: residual {self.balance_residual:.3e} J")
        for name in ("dissipated", "remaining", "initial"):
            if getattr(self, name) < -1e-10 * scale:
                raise IntegratorError(f"negative {name} energy")


class MidpointStepper:
    """Factorizes ``T - (h/2) A T`` once and advances in xi coordinates."""

    def __init__(self, sys: PHSystem, h: float):
        if not h > 0:
            raise IntegratorError("step size must be positive")
        self.sys, self.h = sys, h
        half = 0.5 * h * sys.AT
        self.E0 = sp.csc_matrix(sys.T - half)
        self.E1 = sp.csr_matrix(sys.T + half)
        try:
            self.lu = spla.splu(self.E0)
        except RuntimeError as exc:
            raise IntegratorError(
                f"singular resolvent I - (h/2)A at h={h:g}: A has an eigenvalue at 2/h={2 / h:g} ({exc})"
            ) from None
        self.hB = h * sys.B

    def step_coords(self, xi: np.ndarray, u: np.ndarray) -> np.ndarray:
        return self.lu.solve(self.E1 @ xi + self.hB @ u)


def midpoint_step(sys: PHSystem, x: np.ndarray, u, h: float) -> np.ndarray:
    """One implicit midpoint step from ``x`` under constant input ``u``."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    stepper = MidpointStepper(sys, h)
    xi1 = stepper.step_coords(sys.to_coords(np.asarray(x, float)), u)
    return sys.from_coords(xi1)


def simulate(sys: PHSystem, x0: np.ndarray, controls: np.ndarray | None, grid: TimeGrid) -> Trajectory:
    """Sequential midpoint steps with one factorization for the whole grid."""
    if controls is None:
        controls = np.zeros((grid.N, sys.m))
    controls = np.asarray(controls, dtype=float).reshape(grid.N, sys.m)
    stepper = MidpointStepper(sys, grid.h)
    xi = np.empty((grid.N + 1, sys.n))
    xi[0] = sys.to_coords(np.asarray(x0, float))
    for k in range(grid.N):
        xi[k + 1] = stepper.step_coords(xi[k], controls[k])
    return Trajectory(grid, sys.from_coords(xi), controls)


def step_energy_terms(sys: PHSystem, traj: Trajectory) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-interval (supplied, dissipated, dH) energies at midpoint states."""
    h = traj.grid.h
    xm = traj.x_mid
    supplied = h * np.einsum("ij,ij->i", traj.u, output(sys, xm))
    dissipated = h * np.atleast_1d(dissipation_rate(sys, xm))
    H = np.atleast_1d(hamiltonian(sys, traj.x))
    return supplied, dissipated, np.diff(H)


def energy_audit(sys: PHSystem, traj: Trajectory) -> EnergyLedger:
    supplied, dissipated, _ = step_energy_terms(sys, traj)
    return EnergyLedger(
        withdrawn=float(0.0 - supplied.sum()),
        dissipated=float(dissipated.sum()),
        remaining=float(hamiltonian(sys, traj.x[-1])),
        initial=float(hamiltonian(sys, traj.x[0])),
    )


def step_balance_residuals(sys: PHSystem, traj: Trajectory) -> np.ndarray:
    supplied, dissipated, dH = step_energy_terms(sys, traj)
    return dH + dissipated - supplied


def zoh_resample(u: np.ndarray, coarse: TimeGrid, fine: TimeGrid) -> np.ndarray:
    """Piecewise-constant control sampled at the midpoints of the fine intervals."""
    if abs(coarse.T - fine.T) > 1e-12 * coarse.T:
        raise ValueError("grids must share the horizon")
    idx = np.minimum((fine.t_mid / coarse.h).astype(int), coarse.N - 1)
    return np.asarray(u)[idx]


def replay(sys: PHSystem, x0: np.ndarray, u: np.ndarray, coarse: TimeGrid, n_fine: int) -> Trajectory:
    fine = TimeGrid(coarse.T, n_fine)
    return simulate(sys, x0, zoh_resample(u, coarse, fine), fine)


def write_trajectory_csv(
    path, sys: PHSystem, traj: Trajectory, state_indices=None, float_fmt: str = "%.10e"
) -> None:
    """Columns ``t, x_i..., u_j..., H, balance_residual``; ``path`` may be an open text file.

    Controls and the balance residual belong to the interval starting at the
    row's time; the last row repeats nothing and leaves them empty.
    """
    n, m = traj.x.shape[1], traj.u.shape[1]
    idx = range(n) if state_indices is None else list(state_indices)
    H = np.atleast_1d(hamiltonian(sys, traj.x))
    res = step_balance_residuals(sys, traj)
    if hasattr(path, "write"):
        _write_rows(path, traj, idx, m, H, res, float_fmt)
        return
    with open(path, "w", newline="") as fh:
        _write_rows(fh, traj, idx, m, H, res, float_fmt)


def _write_rows(fh, traj, idx, m, H, res, float_fmt):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["t", *(f"x_{i + 1}" for i in idx), *(f"u_{j + 1}" for j in range(m)), "H", "balance_residual"])
    for k, t in enumerate(traj.grid.t):
        row = [float_fmt % t, *(float_fmt % traj.x[k, i] for i in idx)]
        if k < traj.grid.N:
            row += [float_fmt % v for v in traj.u[k]] + [float_fmt % H[k], float_fmt % res[k]]
        else:
            row += [""] * m + [float_fmt % H[k], ""]
        w.writerow(row)
