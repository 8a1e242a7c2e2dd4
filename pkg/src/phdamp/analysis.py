"""Post-optimality analysis: switching functions, arcs, singular controls,
Pontryagin residuals, a Riccati reference, turnpike metrics and cost tables."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .integrator import EnergyLedger, TimeGrid, Trajectory
from .ocp.problem import QuadraticControl, StateWeight, SuppliedEnergy
from .ocp.solution import OCPSolution
from .phmodel import PHSystem


class AnalysisError(ValueError):
    pass


def _weight_matrix(sys: PHSystem, W) -> np.ndarray:
    if W is None:
        return np.zeros((sys.n, sys.n))
    if isinstance(W, StateWeight):
        return W.x(sys)
    return np.asarray(W, dtype=float)


# ---------------------------------------------------------------------------
# switching function and arcs
# ---------------------------------------------------------------------------


def switching_function(sys: PHSystem, x: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """``s_k = B^T (Q x_mid + lam_mid)`` per interval.

    ``x`` holds grid values (N+1 rows). ``lam`` may hold grid values (N+1
    rows, averaged to midpoints) or midpoint values (N rows).
    """
    x = np.atleast_2d(x)
    lam = np.atleast_2d(lam)
    N = x.shape[0] - 1
    if N < 1 or x.shape[1] != sys.n or lam.shape[1] != sys.n:
        raise AnalysisError("state/adjoint dimension mismatch")
    if lam.shape[0] == N + 1:
        lam = 0.5 * (lam[1:] + lam[:-1])
    elif lam.shape[0] != N:
        raise AnalysisError(f"adjoint has {lam.shape[0]} rows; expected {N} or {N + 1}")
    xm = 0.5 * (x[1:] + x[:-1])
    return (sys.Qx(xm) + lam) @ sys.B


@dataclass(frozen=True)
class Arc:
    channel: int
    kind: str  # "singular" | "bang" | "transition"
    start: int  # first interval
    stop: int  # one past the last interval

    @property
    def length(self) -> int:
        return self.stop - self.start


@dataclass
class ArcPartition:
    s: np.ndarray  # (N, m)
    singular: np.ndarray  # (N, m) bool, |s| <= tau_s
    saturated: np.ndarray  # (N, m) bool, u on the box boundary
    tau_s: float
    tau_len: int
    arcs: list[Arc] = field(default_factory=list)

    @property
    def active(self) -> np.ndarray:
        return ~self.singular

    def channel_arcs(self, i: int) -> list[Arc]:
        return [a for a in self.arcs if a.channel == i]

    def sequence(self, i: int) -> list[str]:
        """Arc kinds of channel ``i`` in time order, transitions dropped."""
        return [a.kind for a in self.channel_arcs(i) if a.kind != "transition"]

    def interior_singular(self, margin: int = 2, unsaturated: bool = True) -> np.ndarray:
        """(N, m) mask of intervals at least ``margin`` intervals inside a singular run.

        With ``unsaturated`` the runs are taken over intervals that are both
        singular and strictly inside the box, which trims arc ends where
        ``|s|`` has not yet dropped to round-off.
        """
        flags = self.singular & ~self.saturated if unsaturated else self.singular
        mask = np.zeros_like(flags)
        for i in range(flags.shape[1]):
            for a, b in _runs(flags[:, i]):
                if b - a >= max(self.tau_len, 2 * margin + 1):
                    mask[a + margin : b - margin, i] = True
        return mask


def _runs(flags: np.ndarray):
    edges = np.flatnonzero(np.diff(np.r_[0, flags.astype(np.int8), 0]))
    return zip(edges[::2], edges[1::2])


def classify_arcs(s, u, u_min, u_max, tau_s: float | None = None, tau_len: int = 3, rel: float = 1e-4, sat_tol: float = 1e-9):
    """Split each channel into singular and bang arcs.

    ``tau_s`` defaults to ``rel * max|s|``. Singular runs shorter than
    ``tau_len`` intervals are labelled transitions.
    """
    s = np.atleast_2d(np.asarray(s, float))
    u = np.atleast_2d(np.asarray(u, float))
    if s.shape != u.shape:
        raise AnalysisError("switching function and control shapes differ")
    m = s.shape[1]
    u_min = np.broadcast_to(np.asarray(u_min, float), (m,))
    u_max = np.broadcast_to(np.asarray(u_max, float), (m,))
    if tau_s is None:
        tau_s = rel * float(np.max(np.abs(s))) if s.size else 0.0
    singular = np.abs(s) <= tau_s
    span = np.maximum(u_max - u_min, 1.0)
    saturated = (u <= u_min + sat_tol * span) | (u >= u_max - sat_tol * span)
    arcs = []
    for i in range(m):
        for a, b in _runs(singular[:, i]):
            arcs.append(Arc(i, "singular" if b - a >= tau_len else "transition", int(a), int(b)))
        for a, b in _runs(~singular[:, i]):
            arcs.append(Arc(i, "bang", int(a), int(b)))
    arcs.sort(key=lambda a: (a.channel, a.start))
    return ArcPartition(s, singular, saturated, float(tau_s), tau_len, arcs)


def complementarity_violations(part: ArcPartition, u: np.ndarray) -> np.ndarray:
    """(N, m) mask where |s| > tau_s but u is not at the bound opposite to s."""
    u = np.atleast_2d(u)
    wrong = part.active & ~(part.saturated & (np.sign(u) == -np.sign(part.s)))
    return wrong


# ---------------------------------------------------------------------------
# singular-arc control
# ---------------------------------------------------------------------------


@dataclass
class SingularControl:
    u: np.ndarray  # derived variant (used as the answer)
    statement: np.ndarray  # Gram B^T QRQ B, v without the W A terms
    printed_proof: np.ndarray  # Gram B^T(QRQ+W)B, v with -2 W A - 2 A^T W
    gram_min_eig: float

    @property
    def gap_statement(self) -> float:
        return float(np.max(np.abs(self.u - self.statement))) if self.u.size else 0.0

    @property
    def gap_printed_proof(self) -> float:
        return float(np.max(np.abs(self.u - self.printed_proof))) if self.u.size else 0.0


def singular_arc_control(sys: PHSystem, W, x, lam, u_A, I, tau_pd: float = 1e-12) -> SingularControl:
    """Control on a singular arc from the second derivative of the switching function.

    ``I`` lists the singular channels, the others (``u_A``) are given. With
    ``A = (J - R) Q`` and ``lam`` the adjoint of the direct problem, setting
    the second derivative of ``B_I^T (Q x + lam)`` to zero gives

        B_I^T (QRQ + W) B u = B_I^T v,
        v = 1/2 ((Q A^2 - 2 W A + 2 A^T W) x + (A^T)^2 lam).

    ``x``, ``lam`` and ``u_A`` may carry a leading time axis.
    """
    Wm = _weight_matrix(sys, W)
    x = np.atleast_2d(x)
    lam = np.atleast_2d(lam)
    I = np.atleast_1d(np.asarray(I, dtype=int))
    if I.size == 0:
        raise AnalysisError("singular index set is empty")
    Aidx = np.setdiff1d(np.arange(sys.m), I)
    u_A = np.asarray(u_A, float).reshape(x.shape[0], Aidx.size)
    A, Q, R, B = sys.A, sys.Q, sys.R, sys.B
    QRQ = Q @ R @ Q
    BI, BA = B[:, I], B[:, Aidx]
    A2 = A @ A
    At2 = A2.T

    def solve(gram_w, Mx):
        G = BI.T @ gram_w @ BI
        ev = np.linalg.eigvalsh(0.5 * (G + G.T))
        if ev.min() <= tau_pd * max(1.0, abs(ev.max())):
            raise AnalysisError(f"singular-arc Gram matrix not positive definite (min eigenvalue {ev.min():.3e})")
        v = 0.5 * (x @ Mx.T + lam @ At2.T)
        rhs = v @ BI - u_A @ (BI.T @ gram_w @ BA).T
        return np.linalg.solve(G, rhs.T).T, float(ev.min())

    base = Q @ A2
    derived, eig = solve(QRQ + Wm, base - 2 * Wm @ A + 2 * A.T @ Wm)
    stmt, _ = solve(QRQ, base - 2 * Wm)
    printed, _ = solve(QRQ + Wm, base - 2 * Wm @ A - 2 * A.T @ Wm)
    return SingularControl(derived, stmt, printed, eig)


@dataclass
class SingularArcCheck:
    intervals: np.ndarray  # interval indices examined
    max_rel_error: float  # against the 1-2-1 filtered QP control
    max_rel_error_raw: float  # against the QP control as is
    max_rel_gap_statement: float
    max_rel_gap_printed: float
    h: float
    errors: np.ndarray

    def passed(self, rel: float = 1e-3) -> bool:
        return self.intervals.size > 0 and self.max_rel_error <= max(rel, 10 * self.h**2)


def check_singular_arcs(sol: OCPSolution, part: ArcPartition | None = None, margin: int = 2) -> SingularArcCheck:
    """Compare the QP control with the singular-arc formula on interior singular intervals.

    On singular arcs the midpoint transcription carries a weakly damped
    odd-even mode in ``u`` that does not vanish as ``h -> 0``. The
    comparison therefore uses ``(u_{k-1} + 2 u_k + u_{k+1}) / 4``, which
    removes that mode and is a second-order estimate of the smooth control;
    the unfiltered mismatch is reported alongside.
    """
    sys = sol.spec.sys
    if part is None:
        part = classify_arcs(sol.switching, sol.u, sol.spec.u_min, sol.spec.u_max)
    mask = part.interior_singular(max(margin, 1))
    u = sol.u
    smooth = u.copy()
    smooth[1:-1] = 0.25 * (u[:-2] + 2 * u[1:-1] + u[2:])
    scale = max(float(np.max(np.abs(u))), 1e-300)
    xm, lm = sol.traj.x_mid, sol.lam_mid
    ks, errs, raw, g1, g2 = [], [], [], [], []
    for k in np.flatnonzero(mask.any(axis=1)):
        I = np.flatnonzero(part.singular[k])
        Aidx = np.setdiff1d(np.arange(sys.m), I)
        sc = singular_arc_control(sys, sol.spec.W, xm[k], lm[k], u[k, Aidx], I)
        sel = mask[k, I]
        ref = smooth[k, I][sel]
        ks.append(k)
        errs.append(np.max(np.abs(sc.u[0][sel] - ref)) / scale)
        raw.append(np.max(np.abs(sc.u[0][sel] - u[k, I][sel])) / scale)
        g1.append(np.max(np.abs(sc.statement[0][sel] - ref)) / scale)
        g2.append(np.max(np.abs(sc.printed_proof[0][sel] - ref)) / scale)
    mx = lambda v: float(np.max(v)) if len(v) else 0.0  # noqa: E731
    return SingularArcCheck(np.asarray(ks, int), mx(errs), mx(raw), mx(g1), mx(g2), sol.spec.grid.h, np.asarray(errs))


# ---------------------------------------------------------------------------
# Pontryagin residuals
# ---------------------------------------------------------------------------


@dataclass
class PontryaginResidual:
    state_max: float
    state_l2: float
    adjoint_max: float
    adjoint_l2: float
    argmin_max: float
    argmin_l2: float
    adjoint_abs_max: float = 0.0

    def as_dict(self) -> dict[str, float]:
        return dict(self.__dict__)


def pontryagin_residual(sys: PHSystem, W, sol: OCPSolution, lam: np.ndarray | None = None) -> PontryaginResidual:
    """Finite-difference residuals of the first-order optimality system.

    State and adjoint equations use centred differences at interior grid
    points, with the grid control taken as the mean of the two adjacent
    intervals. The pointwise minimum condition is checked at interval
    midpoints using midpoint averages of the grid adjoint. Values are
    relative to the size of the corresponding derivative (or control).
    """
    Wm = _weight_matrix(sys, W)
    x = sol.x
    u = sol.u
    lam = sol.lam if lam is None else lam
    h = sol.spec.grid.h
    N = u.shape[0]
    A, B = sys.A, sys.B
    se = isinstance(sol.spec.cost, SuppliedEnergy)

    def norms(r, scale):
        if r.size == 0:
            return 0.0, 0.0
        scale = max(scale, 1e-300)
        return float(np.abs(r).max() / scale), float(np.sqrt(h * np.sum(r * r)) / scale)

    if N >= 2:
        ug = 0.5 * (u[1:] + u[:-1])
        xd = (x[2:] - x[:-2]) / (2 * h)
        ld = (lam[2:] - lam[:-2]) / (2 * h)
        xi = x[1:-1]
        li = lam[1:-1]
        rs = xd - xi @ A.T - ug @ B.T
        rhs = -2 * xi @ Wm - li @ A
        if se:
            rhs = rhs - sys.Qx(ug @ B.T)
        ra = ld - rhs
        s_max, s_l2 = norms(rs, np.abs(xd).max())
        a_scale = max(np.abs(ld).max(), np.abs(rhs).max())
        a_max, a_l2 = norms(ra, a_scale)
        a_abs = float(np.abs(ra).max())
    else:
        s_max = s_l2 = a_max = a_l2 = a_abs = 0.0

    lm = 0.5 * (lam[1:] + lam[:-1])
    umin, umax = sol.spec.u_min, sol.spec.u_max
    if se:
        s = switching_function(sys, x, lm)
        span = np.maximum(umax - umin, 1.0)
        at_lo = u <= umin + 1e-9 * span
        at_hi = u >= umax - 1e-9 * span
        ok = (at_lo & (s >= 0)) | (at_hi & (s <= 0))
        r = np.where(ok, 0.0, np.abs(s))
        g_max, g_l2 = norms(r, np.abs(s).max())
    else:
        mu = sol.spec.cost.mu
        target = np.clip(-(lm @ B) / (2 * mu), umin, umax)
        r = u - target
        g_max, g_l2 = norms(r, np.abs(u).max())
    return PontryaginResidual(s_max, s_l2, a_max, a_l2, g_max, g_l2, a_abs)


# ---------------------------------------------------------------------------
# Riccati reference
# ---------------------------------------------------------------------------


@dataclass
class RiccatiReference:
    grid: TimeGrid
    P: np.ndarray  # (N+1, n, n) grid values
    P_mid: np.ndarray  # (N, n, n)
    traj: Trajectory


def riccati_reference(sys: PHSystem, W, mu: float, grid: TimeGrid, x0: np.ndarray | None = None,
                      newton_tol: float = 1e-13, max_newton: int = 30) -> RiccatiReference:
    """Backward midpoint sweep of ``-P' = A^T P + P A - P B B^T P / mu + W``, ``P(T) = 0``.

    With ``x0`` the closed loop ``u = -B^T P x / mu`` is rolled forward with
    the same midpoint rule (feedback gain taken at interval midpoints).
    """
    if not mu > 0:
        raise AnalysisError("Riccati reference needs mu > 0")
    Wm = _weight_matrix(sys, W)
    A, B = sys.A, sys.B
    n, N, h = sys.n, grid.N, grid.h
    BB = B @ B.T / mu
    I = np.eye(n)

    def F(X):
        return A.T @ X + X @ A - X @ BB @ X + Wm

    P = np.zeros((N + 1, n, n))
    Pm = np.zeros((N, n, n))
    for k in range(N - 1, -1, -1):
        Pn = P[k + 1]
        X = Pn + 0.5 * h * F(Pn)
        for it in range(max_newton):
            G = X - Pn - 0.5 * h * F(X)
            gnorm = np.abs(G).max()
            if gnorm <= newton_tol * max(1.0, np.abs(X).max()):
                break
            At = A - BB @ X
            a = (At - I / h).T
            D = sla.solve_continuous_lyapunov(a, (2.0 / h) * G)
            X = X + 0.5 * (D + D.T)
        else:
            raise AnalysisError(f"Riccati step {k} did not converge (residual {gnorm:.3e})")
        X = 0.5 * (X + X.T)
        if not np.all(np.isfinite(X)):
            raise AnalysisError(f"Riccati blow-up at step {k}")
        Pm[k] = X
        P[k] = 2 * X - Pn
    if x0 is None:
        x0 = np.zeros(n)
    x = np.empty((N + 1, n))
    u = np.empty((N, sys.m))
    x[0] = x0
    for k in range(N):
        Acl = A - BB @ Pm[k]
        x[k + 1] = np.linalg.solve(I - 0.5 * h * Acl, x[k] + 0.5 * h * Acl @ x[k])
        u[k] = -(B.T @ Pm[k] @ (0.5 * (x[k] + x[k + 1]))) / mu
    return RiccatiReference(grid, P, Pm, Trajectory(grid, x, u))


def care_solution(sys: PHSystem, W, mu: float) -> np.ndarray:
    """Stabilizing solution of the algebraic Riccati equation (scipy)."""
    Wm = _weight_matrix(sys, W)
    return sla.solve_continuous_are(sys.A, sys.B, Wm, mu * np.eye(sys.m))


# ---------------------------------------------------------------------------
# turnpike
# ---------------------------------------------------------------------------


def kernel_projector(sys: PHSystem, W, tol: float = 1e-10) -> tuple[np.ndarray, int]:
    """Orthogonal projector onto ``ker RQ ∩ ker W`` and the subspace dimension."""
    Wm = _weight_matrix(sys, W)
    ev, V = np.linalg.eigh(0.5 * (Wm + Wm.T))
    W_half = (V * np.sqrt(np.clip(ev, 0.0, None))) @ V.T
    stacked = np.vstack([sys.R_sqrt @ sys.Q, W_half])
    _, sv, Vt = np.linalg.svd(stacked)
    smax = sv.max() if sv.size else 0.0
    rank = int(np.sum(sv > tol * smax)) if smax > 0 else 0
    basis = Vt[rank:].T
    return basis @ basis.T, basis.shape[1]


@dataclass
class TurnpikeRow:
    T: float
    int_x2: float
    int_u2: float
    int_total: float
    int_dist2: float
    c: float
    omega: float
    envelope_ratio: float  # max of data / fitted envelope

    def as_dict(self) -> dict[str, float]:
        return dict(self.__dict__)


@dataclass
class TurnpikeReport:
    rows: list[TurnpikeRow]
    kernel_dim: int
    plateau_variation: float  # max relative variation of int_total over the top half of horizons
    plateau_variation_dist: float
    label: str = ""

    def plateau(self, tol: float = 0.05) -> bool:
        return self.plateau_variation < tol

    def to_text(self) -> str:
        lines = [
            f"label = {self.label}",
            f"horizons = {','.join(f'{r.T:g}' for r in self.rows)}",
            f"kernel_dim = {self.kernel_dim}",
            f"plateau_variation = {self.plateau_variation:.6e}",
            f"plateau_variation_dist = {self.plateau_variation_dist:.6e}",
            "envelope_norm = ||x0|| (unsquared)",
        ]
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        keys = list(TurnpikeRow.__dataclass_fields__)
        w.writerow(keys)
        for r in self.rows:
            w.writerow([f"{getattr(r, k):.10e}" for k in keys])
        return buf.getvalue()


def _envelope_fit(t, f, T, x0norm):
    """Envelope ``c (e^{-w t} + e^{-w (T - t)}) ||x0||`` fitted in the log domain.

    ``w`` is the least-squares decay rate of ``log f`` over the first third
    of the horizon; ``c`` then minimizes the log misfit over both outer
    thirds. Values below ``1e-12 max f`` are treated as round-off and skipped.
    """
    if x0norm <= 0 or not np.any(f > 0):
        return 0.0, 0.0, 0.0
    live = f > 1e-12 * f.max()
    head = live & (t <= T / 3)
    outer = live & ((t <= T / 3) | (t >= 2 * T / 3))
    if head.sum() < 2:
        return 0.0, 0.0, 0.0
    slope, _ = np.polyfit(t[head], np.log(f[head]), 1)
    w = max(-float(slope), 0.0)
    lf = np.log(f[outer]) - np.log(x0norm)
    shape = np.logaddexp(-w * t[outer], -w * (T - t[outer]))
    logc = float(np.mean(lf - shape))
    ratio = float(np.exp(np.max(lf - shape - logc)))
    return float(np.exp(logc)), w, ratio


def turnpike_metrics(solutions: list[OCPSolution], W=None, projector: np.ndarray | None = None, label: str = "") -> TurnpikeReport:
    if len(solutions) < 3:
        raise AnalysisError("turnpike metrics need at least three horizons")
    sols = sorted(solutions, key=lambda s: s.spec.grid.T)
    sys = sols[0].spec.sys
    if projector is None:
        projector, dim = kernel_projector(sys, W if W is not None else sols[0].spec.W)
    else:
        dim = int(round(np.trace(projector)))
    rows = []
    for s in sols:
        g = s.spec.grid
        xm = s.traj.x_mid
        x2 = np.sum(xm * xm, axis=1)
        u2 = np.sum(s.u * s.u, axis=1)
        px = xm @ projector
        d2 = np.sum(px * px, axis=1)
        c, w, ratio = _envelope_fit(g.t_mid, x2 + u2, g.T, float(np.linalg.norm(s.x[0])))
        rows.append(TurnpikeRow(g.T, g.h * x2.sum(), g.h * u2.sum(), g.h * (x2 + u2).sum(), g.h * d2.sum(), c, w, ratio))

    def variation(vals):
        top = vals[len(vals) // 2 :]
        ref = max(abs(v) for v in top)
        return 0.0 if ref == 0 else (max(top) - min(top)) / ref

    return TurnpikeReport(rows, dim, variation([r.int_total for r in rows]), variation([r.int_dist2 for r in rows]), label)


# ---------------------------------------------------------------------------
# cost comparison
# ---------------------------------------------------------------------------


@dataclass
class CostRow:
    label: str
    ledger: EnergyLedger


@dataclass
class ComparisonTable:
    rows: list[CostRow]

    columns = ("withdrawn", "dissipated", "remaining", "initial")

    def value(self, label: str, column: str) -> float:
        for r in self.rows:
            if r.label == label:
                return getattr(r.ledger, column)
        raise KeyError(label)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["cost", *self.columns])
        for r in self.rows:
            w.writerow([r.label, *(f"{getattr(r.ledger, c):.10e}" for c in self.columns)])
        return buf.getvalue()

    def to_text(self) -> str:
        head = ["cost", "withdrawn [J]", "dissipated [J]", "remaining [J]", "initial [J]"]
        body = [[r.label, *(f"{getattr(r.ledger, c):.6g}" for c in self.columns)] for r in self.rows]
        widths = [max(len(row[i]) for row in [head, *body]) for i in range(len(head))]
        fmt = lambda row: "  ".join(  # noqa: E731
            c.ljust(widths[i]) if i == 0 else c.rjust(widths[i]) for i, c in enumerate(row)
        )
        sep = "  ".join("-" * w for w in widths)
        return "\n".join([fmt(head), sep, *map(fmt, body)]) + "\n"


def compare_costs(rows: list[tuple[str, EnergyLedger]], rtol: float = 1e-9) -> ComparisonTable:
    """Tabulate ledgers of runs that share structure, initial state and grid."""
    if not rows:
        raise AnalysisError("no rows to compare")
    e0 = rows[0][1].initial
    for label, led in rows:
        if abs(led.initial - e0) > rtol * max(abs(e0), 1e-300):
            raise AnalysisError(f"row {label!r} starts from a different initial energy")
    return ComparisonTable([CostRow(lab, led) for lab, led in rows])


def cost_label(cost) -> str:
    if isinstance(cost, QuadraticControl):
        return f"quadratic mu={cost.mu:g}"
    if isinstance(cost, SuppliedEnergy):
        return "supplied-energy"
    return str(cost)
