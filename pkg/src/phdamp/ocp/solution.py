"""From a QP solution back to trajectories, adjoints and energy ledgers.

Dual convention
---------------
The QP Lagrangian is ``f + nu^T (E z - e)``. The dynamics rows are the
midpoint rule multiplied through by ``h``, so ``nu_k`` (one vector per
interval) approximates an adjoint at the interval midpoint without any
``1/h`` factor:

* quadratic control cost: ``nu_k ~ lam(t_{k+1/2})`` where
  ``lam' = -2 W x - A^T lam``, ``lam(T) = 0``;
* supplied-energy cost (optimized in reformulated form):
  ``nu_k ~ lam(t_{k+1/2}) + Q x(t_{k+1/2})`` where
  ``lam' = -Q B u - 2 W x + Q (J + R) lam``, ``lam(T) = 0``.

Grid values average neighbouring intervals. The end points take half a
step of the adjoint equation from the first/last midpoint, so ``lam(T)``
is zero only up to O(h^2).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..integrator import EnergyLedger, Trajectory, energy_audit
from .problem import OCPError, OCPSpec, QPProblem, SuppliedEnergy, direct_objective, transcribe
from .qp import KKTResiduals, QPSolution, QPSolverConfig, solve_qp


@dataclass(eq=False)
class OCPSolution:
    spec: OCPSpec
    traj: Trajectory  # x (N+1, n), u (N, m), lam (N+1, n) on grid points
    nu: np.ndarray  # (N, n) interval multipliers
    objective: float  # QP objective (reformulated for supplied energy, without H(x0))
    direct_objective: float  # direct discretization; equals objective - H(x0) for supplied energy
    kkt: KKTResiduals
    ledger: EnergyLedger
    stats: dict = field(default_factory=dict)

    @property
    def x(self) -> np.ndarray:
        return self.traj.x

    @property
    def u(self) -> np.ndarray:
        return self.traj.u

    @property
    def lam(self) -> np.ndarray:
        return self.traj.lam

    @property
    def supplied_energy(self) -> bool:
        return isinstance(self.spec.cost, SuppliedEnergy)

    @property
    def lam_mid(self) -> np.ndarray:
        """Adjoint at interval midpoints, exact with respect to the discrete stationarity."""
        if self.supplied_energy:
            return self.nu - self.spec.sys.Qx(self.traj.x_mid)
        return self.nu

    @property
    def switching(self) -> np.ndarray:
        """Per-interval switching vector: B^T(Q x + lam) for supplied energy, B^T lam otherwise."""
        return self.nu @ self.spec.sys.B

    @property
    def withdrawn(self) -> float:
        return self.ledger.withdrawn


def _grid_adjoint(spec: OCPSpec, st, xi: np.ndarray, x: np.ndarray, nu: np.ndarray) -> np.ndarray:
    sys = spec.sys
    N, h = nu.shape[0], st.h
    lp = np.empty((N + 1, sys.n))
    lp[1:N] = 0.5 * (nu[:-1] + nu[1:])
    # End points: half a step along lam' = -A^T lam - 2 S x from the nearest
    # midpoint plus a curvature term, so their O(h^2) error matches that of
    # the interior averages and centred differences stay second order.
    ends = np.unique(np.array([0, min(1, N - 1), max(N - 2, 0), N - 1]))
    xim = 0.5 * (xi[ends] + xi[ends + 1])
    Sxi = (st.S @ xim.T).T
    Sx = Sxi if sys.identity_coords else sys._T_lu.solve(np.ascontiguousarray(Sxi.T), trans="T").T
    d = dict(zip(ends.tolist(), -(nu[ends] @ sys.A) - 2.0 * Sx))
    lp[0] = nu[0] - 0.5 * h * d[0]
    lp[N] = nu[N - 1] + 0.5 * h * d[N - 1]
    if N > 1:
        lp[0] += 0.25 * h * (d[1] - d[0])
        lp[N] += 0.25 * h * (d[N - 1] - d[N - 2])
    if isinstance(spec.cost, SuppliedEnergy):
        lp = lp - sys.Qx(x)
    return lp


def extract_solution(sol: QPSolution, spec: OCPSpec, qp: QPProblem | None = None) -> OCPSolution:
    if not sol.converged:
        raise OCPError(f"QP solver did not converge (status {sol.status}, {sol.iterations} iterations)")
    qp = qp if qp is not None else transcribe(spec)
    st = qp.structure
    sys = spec.sys
    xi_all = st.states_with_initial(sol.z)
    _, u = st.split(sol.z)
    u = u.copy()
    x = sys.from_coords(xi_all)
    nu = sol.nu.reshape(st.N, st.n)
    traj = Trajectory(spec.grid, x, u, _grid_adjoint(spec, st, xi_all, x, nu))
    ledger = energy_audit(sys, traj)

    lhs = (st.E0 @ xi_all[1:].T).T
    rhs = (st.E1 @ xi_all[:-1].T).T + u @ st.hB.T
    dyn = np.abs(lhs - rhs).max(axis=1) / np.maximum(np.abs(rhs).max(axis=1), 1e-300)
    stats = {
        "status": sol.status,
        "iterations": sol.iterations,
        "polished": sol.polished,
        "dynamics_residual": float(dyn.max()) if dyn.size else 0.0,
        "box_violation": float(np.max(np.maximum(np.maximum(spec.u_min - u, u - spec.u_max), 0.0))),
        **{k: v for k, v in sol.info.items() if isinstance(v, (int, float))},
    }
    return OCPSolution(
        spec=spec,
        traj=traj,
        nu=nu,
        objective=sol.objective,
        direct_objective=direct_objective(spec, x, u),
        kkt=sol.residuals,
        ledger=ledger,
        stats=stats,
    )


def solve_ocp(spec: OCPSpec, cfg: QPSolverConfig | None = None) -> OCPSolution:
    qp = transcribe(spec)
    return extract_solution(solve_qp(qp, cfg or QPSolverConfig()), spec, qp)
