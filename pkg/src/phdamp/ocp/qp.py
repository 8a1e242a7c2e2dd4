"""Operator-splitting (ADMM) solver for QPs with variable bounds.

The solver splits only the bound constraints; the equality constraints are
kept exact inside every linear solve. Each iteration therefore solves an
equality-constrained QP with a diagonal proximal term on the bounded
variables, which is done by one of two cached factorizations:

* :class:`SparseKKT` - sparse LU of the full KKT matrix (generic QPs).
* :class:`StageRiccati` - a backward Riccati sweep over the time stages of a
  transcribed OCP, which is the block LDL^T factorization of the same KKT
  matrix in stage order and avoids the fill-in a general sparse ordering
  produces for hundreds of states per stage.

A polish step fixes the estimated active set at its bounds, solves the
remaining equality-constrained problem and keeps it only if the KKT
conditions check out.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .problem import OCPStructure, QPProblem

log = logging.getLogger(__name__)


class QPSolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class QPSolverConfig:
    eps_abs: float = 1e-8
    eps_rel: float = 1e-8
    max_iter: int = 4000
    rho: float = 0.1
    sigma: float = 1e-6
    alpha: float = 1.6
    adaptive_rho: bool = True
    polish: bool = True
    check_every: int = 10
    kkt_tol: float = 1e-6
    bound_tol: float = 1e-9
    backend: str = "auto"  # auto | riccati | sparse
    callback: Callable[[dict], None] | None = None


@dataclass
class KKTResiduals:
    stationarity: float  # relative
    primal: float  # relative equality residual
    bound_violation: float  # absolute
    complementarity: float  # relative
    stationarity_abs: float = 0.0
    primal_abs: float = 0.0

    def ok(self, tol: float = 1e-6, bound_tol: float = 1e-9) -> bool:
        return (
            self.stationarity <= tol
            and self.primal <= tol
            and self.complementarity <= tol
            and self.bound_violation <= bound_tol
        )

    def as_dict(self) -> dict[str, float]:
        return dict(self.__dict__)


@dataclass
class QPSolution:
    z: np.ndarray
    nu: np.ndarray
    y: np.ndarray  # bound multipliers over all variables (0 where unbounded/free)
    objective: float
    status: str  # "solved" | "solved_unpolished" | "max_iter"
    iterations: int
    polished: bool
    residuals: KKTResiduals
    info: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.status in ("solved", "solved_unpolished")


def kkt_residuals(qp: QPProblem, z: np.ndarray, nu: np.ndarray, y: np.ndarray) -> KKTResiduals:
    """Residuals of the KKT system, computed straight from the QP data."""
    Pz = qp.P @ z
    Etnu = qp.E.T @ nu
    r = Pz + qp.g + Etnu + y
    inf = lambda v: float(np.max(np.abs(v))) if np.size(v) else 0.0  # noqa: E731
    s_scale = max(inf(Pz), inf(qp.g), inf(Etnu), inf(y), 1e-300)
    Ez = qp.E @ z
    p_abs = inf(Ez - qp.e)
    p_scale = max(inf(Ez), inf(qp.e), 1e-300)
    viol = np.maximum(np.maximum(qp.lb - z, z - qp.ub), 0.0)
    # complementarity: positive multipliers only at upper bounds, negative at lower
    b = qp.bounded
    comp = 0.0
    if b.size:
        yb, zb = y[b], z[b]
        width = np.where(np.isfinite(qp.ub[b] - qp.lb[b]), qp.ub[b] - qp.lb[b], 1.0)
        width = np.where(width > 0, width, 1.0)
        y_scale = max(inf(yb), s_scale * 1e-300, 1e-300)
        gap_up = np.where(yb > 0, np.abs(qp.ub[b] - zb), 0.0)
        gap_lo = np.where(yb < 0, np.abs(zb - qp.lb[b]), 0.0)
        gap_up = np.where(np.isfinite(gap_up), gap_up, width)
        gap_lo = np.where(np.isfinite(gap_lo), gap_lo, width)
        comp = float(np.max(np.abs(yb) / max(y_scale, s_scale) * np.maximum(gap_up, gap_lo) / width))
        if y_scale <= 1e-300:
            comp = 0.0
    return KKTResiduals(
        stationarity=inf(r) / s_scale if s_scale > 1e-300 else 0.0,
        primal=p_abs / p_scale if p_scale > 1e-300 else 0.0,
        bound_violation=inf(viol),
        complementarity=comp,
        stationarity_abs=inf(r),
        primal_abs=p_abs,
    )


# ---------------------------------------------------------------------------
# linear-system backends
# ---------------------------------------------------------------------------


class SparseKKT:
    """Sparse LU of ``[[P + diag(reg), E^T, C^T], [E, 0, 0], [C, 0, 0]]``."""

    def __init__(self, qp: QPProblem):
        self.qp = qp
        self.b = qp.bounded
        self.nz, self.ne = qp.nz, qp.E.shape[0]

    def factor(self, reg: np.ndarray, free: np.ndarray) -> None:
        qp = self.qp
        d = np.zeros(self.nz)
        d[self.b] = np.where(free, reg, 0.0)
        self.fixed = self.b[~free]
        nf = self.fixed.size
        C = sp.csr_matrix((np.ones(nf), (np.arange(nf), self.fixed)), shape=(nf, self.nz))
        K = sp.bmat(
            [[qp.P + sp.diags(d), qp.E.T, C.T], [qp.E, None, None], [C, None, None]],
            format="csc",
        )
        try:
            self.lu = spla.splu(K)
        except RuntimeError as exc:
            raise QPSolverError(f"KKT factorization failed: {exc}") from None
        self._last_nu = None

    def solve(self, q: np.ndarray, fix: np.ndarray) -> np.ndarray:
        rhs_z = -self.qp.g.copy()
        rhs_z[self.b] += q
        free_mask = np.ones(self.b.size, bool)
        free_mask[np.searchsorted(self.b, self.fixed)] = False
        rhs = np.concatenate([rhs_z, self.qp.e, fix[~free_mask]])
        sol = self.lu.solve(rhs)
        self._last_nu = sol[self.nz : self.nz + self.ne]
        return sol[: self.nz]

    def duals(self, z: np.ndarray) -> np.ndarray:
        return self._last_nu

    def zero_input(self) -> np.ndarray:
        self.factor(np.zeros(self.b.size), np.zeros(self.b.size, bool))
        fix = np.clip(np.zeros(self.b.size), self.qp.lb[self.b], self.qp.ub[self.b])
        return self.solve(np.zeros(self.b.size), fix)


class StageRiccati:
    """Riccati recursion for the stage-structured QP of a transcribed OCP.

    Bounded variables are the controls ``u_k`` (flattened stage-major). States
    are eliminated with ``xi_{k+1} = Phi xi_k + Gam u_k``.
    """

    def __init__(self, st: OCPStructure):
        self.st = st
        n, m, h = st.n, st.m, st.h
        E0 = st.E0.toarray()
        self.lu0 = sla.lu_factor(E0)
        self.Phi = sla.lu_solve(self.lu0, st.E1.toarray())
        self.Gam = sla.lu_solve(self.lu0, st.hB)
        self.E1T = st.E1.T.toarray()
        S = st.S.toarray()
        self.S = 0.5 * (S + S.T)
        self.G = st.G.toarray() if st.G is not None else np.zeros((n, n))
        C = 0.5 * np.hstack([np.eye(n) + self.Phi, self.Gam])
        L0 = 2.0 * h * C.T @ self.S @ C
        L0[n:, n:] += 2.0 * h * st.mu * np.eye(m)
        self.L0 = 0.5 * (L0 + L0.T)
        self.F = np.hstack([self.Phi, self.Gam])
        self.PhiT = np.ascontiguousarray(self.Phi.T)
        self.GamT = np.ascontiguousarray(self.Gam.T)

    def factor(self, reg: np.ndarray, free: np.ndarray) -> None:
        st = self.st
        n, m, N = st.n, st.m, st.N
        reg = reg.reshape(N, m)
        free = free.reshape(N, m)
        P = self.G.copy()
        stages = [None] * N
        for k in range(N - 1, -1, -1):
            PF = P @ self.F
            H = self.L0 + self.F.T @ PF
            Hux = H[n:, :n]
            Huu = H[n:, n:]
            fi = np.flatnonzero(free[k])
            ai = np.flatnonzero(~free[k])
            Pn = H[:n, :n]
            if fi.size:
                HFF = Huu[np.ix_(fi, fi)] + np.diag(reg[k, fi])
                try:
                    cf = sla.cho_factor(HFF)
                except np.linalg.LinAlgError:
                    raise QPSolverError(f"stage {k}: reduced Hessian not positive definite") from None
                KF = -sla.cho_solve(cf, Hux[fi])
                Pn = Pn + Hux[fi].T @ KF
            else:
                cf, KF = None, np.zeros((0, n))
            P = 0.5 * (Pn + Pn.T)
            stages[k] = (fi, ai, cf, KF, Hux[fi].T.copy(), Hux[ai].T.copy(), Huu[np.ix_(fi, ai)].copy())
        self.stages = stages

    def solve(self, q: np.ndarray, fix: np.ndarray) -> np.ndarray:
        st = self.st
        n, m, N = st.n, st.m, st.N
        q = q.reshape(N, m)
        fix = fix.reshape(N, m)
        p = np.zeros(n)
        kff = [None] * N
        for k in range(N - 1, -1, -1):
            fi, ai, cf, KF, HxF, HxA, HFA = self.stages[k]
            gx = self.PhiT @ p
            gu = self.GamT @ p - q[k]
            if ai.size:
                a = fix[k, ai]
                gx = gx + HxA @ a
                gF = gu[fi] + HFA @ a
            else:
                gF = gu[fi] if fi.size != m else gu
            if fi.size:
                kF = -sla.cho_solve(cf, gF)
                p = gx + HxF @ kF
            else:
                kF = np.zeros(0)
                p = gx
            kff[k] = kF
        xi = np.empty((N + 1, n))
        u = np.empty((N, m))
        xi[0] = st.xi0
        for k in range(N):
            fi, ai, cf, KF, *_ = self.stages[k]
            uk = fix[k].copy()
            if fi.size:
                uk[fi] = KF @ xi[k] + kff[k]
            u[k] = uk
            xi[k + 1] = self.Phi @ xi[k] + self.Gam @ uk
        return np.concatenate([xi[1:].ravel(), u.ravel()])

    def duals(self, z: np.ndarray) -> np.ndarray:
        st = self.st
        n, N, h = st.n, st.N, st.h
        xi = st.states_with_initial(z)
        Sxm = (0.5 * (xi[1:] + xi[:-1])) @ self.S
        nu = np.empty((N, n))
        grad = h * Sxm[N - 1] + self.G @ xi[N]
        nu[N - 1] = sla.lu_solve(self.lu0, grad, trans=1)
        for k in range(N - 1, 0, -1):
            grad = h * (Sxm[k - 1] + Sxm[k]) + self.E1T @ nu[k]
            nu[k - 1] = sla.lu_solve(self.lu0, grad, trans=1)
        return nu.ravel()

    def zero_input(self) -> np.ndarray:
        st = self.st
        xi = np.empty((st.N + 1, st.n))
        xi[0] = st.xi0
        for k in range(st.N):
            xi[k + 1] = self.Phi @ xi[k]
        return np.concatenate([xi[1:].ravel(), np.zeros(st.N * st.m)])


RICCATI_MIN_STATES = 40  # below this the per-stage Python overhead loses to sparse LU


def make_backend(qp: QPProblem, kind: str = "auto"):
    if kind not in ("auto", "riccati", "sparse"):
        raise QPSolverError(f"unknown backend {kind!r}")
    structured = qp.structure is not None and qp.structure.n >= RICCATI_MIN_STATES
    if kind == "riccati" or (kind == "auto" and structured):
        if qp.structure is None:
            raise QPSolverError("riccati backend needs a transcribed OCP")
        return StageRiccati(qp.structure)
    return SparseKKT(qp)


# ---------------------------------------------------------------------------
# ADMM driver
# ---------------------------------------------------------------------------


def solve_qp(qp: QPProblem, cfg: QPSolverConfig = QPSolverConfig()) -> QPSolution:
    """Solve the QP; returns primal ``z``, equality duals ``nu`` and bound duals ``y``."""
    t_start = time.perf_counter()
    backend = make_backend(qp, cfg.backend)
    b = qp.bounded
    nb = b.size
    lb, ub = qp.lb[b], qp.ub[b]
    info: dict = {"factorizations": 0, "polish_attempts": 0, "rho_updates": 0}

    def finish(z, nu, y_b, status, iters, polished):
        y = np.zeros(qp.nz)
        y[b] = y_b
        res = kkt_residuals(qp, z, nu, y)
        info["time"] = time.perf_counter() - t_start
        return QPSolution(z, nu, y, qp.objective(z), status, iters, polished, res, info)

    if nb == 0:
        backend.factor(np.zeros(0), np.zeros(0, bool))
        z = backend.solve(np.zeros(0), np.zeros(0))
        return finish(z, backend.duals(z), np.zeros(0), "solved", 0, False)

    # variable and cost scaling
    d = np.ones(nb)
    mag = np.fmax(np.where(np.isfinite(lb), np.abs(lb), 0.0), np.where(np.isfinite(ub), np.abs(ub), 0.0))
    d[mag > 0] = mag[mag > 0]
    z0 = backend.zero_input()
    f0 = abs(qp.objective(z0))
    c = 1.0 / f0 if f0 > 0 else 1.0
    lbs, ubs = lb / d, ub / d
    degenerate = lb == ub

    if np.all(degenerate):
        # nothing to optimise: all bounded variables pinned
        return _polish_round(qp, backend, b, lb, ub, d, c, lb.copy(), np.zeros(nb), cfg, info, finish, 0, force=True)

    rho = np.where(degenerate, 1e3 * cfg.rho, cfg.rho)
    sigma = cfg.sigma

    def refactor():
        backend.factor((sigma + rho) / (c * d**2), np.ones(nb, bool))
        info["factorizations"] += 1

    refactor()
    u = np.clip(np.zeros(nb), lbs, ubs)
    w = u.copy()
    y = np.zeros(nb)
    last_active = None
    next_polish = 25
    best = None
    for it in range(1, cfg.max_iter + 1):
        qs = sigma * u + rho * w - y
        z = backend.solve(qs / (c * d), np.zeros(nb))
        nu_last = getattr(backend, "_last_nu", None)
        ut = z[b] / d
        relaxed = cfg.alpha * ut + (1 - cfg.alpha) * w
        w_new = np.clip(relaxed + y / rho, lbs, ubs)
        y_new = y + rho * (relaxed - w_new)
        dual_vec = y_new - y - sigma * (ut - u) - rho * (ut - w)
        u = cfg.alpha * ut + (1 - cfg.alpha) * u
        w, y = w_new, y_new

        if it % cfg.check_every and it != cfg.max_iter:
            continue
        r_prim = float(np.max(np.abs(ut - np.clip(ut, lbs, ubs))))
        r_dual = float(np.max(np.abs(dual_vec)))
        p_scale = max(np.max(np.abs(ut)), np.max(np.abs(w)), 1e-30)
        d_scale = max(np.max(np.abs(y)), np.max(np.abs(sigma * (ut - u) + rho * (ut - w) + y)), 1e-30)
        if cfg.callback is not None:
            cfg.callback({"iter": it, "prim": r_prim, "dual": r_dual, "rho": float(np.median(rho))})
        if best is None or max(r_prim, r_dual) < best[0]:
            best = (max(r_prim, r_dual), z.copy(), w.copy(), y.copy(), None if nu_last is None else nu_last.copy())
        converged = r_prim <= cfg.eps_abs + cfg.eps_rel * p_scale and r_dual <= cfg.eps_abs + cfg.eps_rel * d_scale

        active = _active_set(w, y, lbs, ubs, rho)
        if cfg.polish and (converged or it >= next_polish):
            key = active.tobytes()
            if key != last_active or converged:
                last_active = key
                sol = _polish_round(qp, backend, b, lb, ub, d, c, w * d, y, cfg, info, finish, it)
                if sol is not None:
                    return sol
                refactor()
            next_polish = int(next_polish * 1.5) + cfg.check_every
        if converged:
            nu = nu_last if nu_last is not None else backend.duals(z)
            return finish(z, nu, _bound_duals(qp, z, nu, b), "solved_unpolished", it, False)

        if cfg.adaptive_rho and it % (5 * cfg.check_every) == 0:
            ratio = np.sqrt((r_prim / p_scale) / max(r_dual / d_scale, 1e-30))
            if ratio > 5.0 or ratio < 0.2:
                ratio = float(np.clip(ratio, 1e-3, 1e3))
                rho = np.clip(rho * ratio, 1e-6, 1e6)
                info["rho_updates"] += 1
                refactor()

    _, z, w, y, nu = best
    if nu is None:
        nu = backend.duals(z)
    return finish(z, nu, _bound_duals(qp, z, nu, b), "max_iter", cfg.max_iter, False)


def _bound_duals(qp: QPProblem, z: np.ndarray, nu: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Bound multipliers that close the stationarity equation on the bounded variables."""
    grad = (qp.P @ z + qp.g + qp.E.T @ nu)[b]
    return -grad


def _active_set(w, y, lbs, ubs, rho) -> np.ndarray:
    """0 = free, -1 = lower, +1 = upper (scaled quantities)."""
    act = np.zeros(w.size, dtype=np.int8)
    act[(w - lbs) < -y / rho * 1e-3 + 1e-12] = -1
    act[(ubs - w) < y / rho * 1e-3 + 1e-12] = 1
    act[(lbs == ubs)] = 1
    return act


def _polish_round(qp, backend, b, lb, ub, d, c, u_guess, y_scaled, cfg, info, finish, iters, force=False):
    """Fix the estimated active set and solve exactly; return None if KKT fails."""
    nb = b.size
    act = np.zeros(nb, dtype=np.int8)
    act[u_guess <= lb + 1e-9 * d] = -1
    act[u_guess >= ub - 1e-9 * d] = 1
    act[(y_scaled < 0) & (u_guess <= lb + 1e-6 * d)] = -1
    act[(y_scaled > 0) & (u_guess >= ub - 1e-6 * d)] = 1
    act[lb == ub] = 1
    delta = 1e-11
    seen = set()
    for _ in range(12):
        info["polish_attempts"] += 1
        key = act.tobytes()
        if key in seen:
            break
        seen.add(key)
        free = act == 0
        fix = np.where(act < 0, lb, np.where(act > 0, ub, 0.0))
        backend.factor(np.full(nb, delta) / (c * d**2), free)
        info["factorizations"] += 1
        center = np.clip(u_guess, lb, ub)
        z = None
        for _ in range(30):
            z = backend.solve(delta * center / (c * d**2), fix)
            ub_now = z[b]
            change = np.max(np.abs((ub_now - center)[free]) / d[free]) if free.any() else 0.0
            center = ub_now
            if change <= 1e-14:
                break
        nu = backend.duals(z)
        yb = _bound_duals(qp, z, nu, b)
        yb_free = yb[free]
        yb = np.where(free, 0.0, yb)
        scale = max(np.max(np.abs(yb)), np.max(np.abs((qp.P @ z + qp.g)[b])), 1e-300)
        ytol = 1e-7 * scale
        u_now = z[b]
        new = act.copy()
        new[free & (u_now < lb)] = -1
        new[free & (u_now > ub)] = 1
        pinned = lb == ub
        new[(act == -1) & (yb > ytol) & ~pinned] = 0
        new[(act == 1) & (yb < -ytol) & ~pinned] = 0
        if np.array_equal(new, act) or force:
            sol = finish(z, nu, yb, "solved", iters, True)
            sol.info["polish_free_stationarity"] = float(np.max(np.abs(yb_free))) if yb_free.size else 0.0
            if force or sol.residuals.ok(cfg.kkt_tol, cfg.bound_tol):
                return sol
            log.debug("polish rejected: %s", sol.residuals)
            return None
        act = new
    return None
