"""Optimal control problem definitions and their QP transcription."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..integrator import TimeGrid
from ..phmodel import PHSystem, hamiltonian


class OCPError(ValueError):
    pass


@dataclass(frozen=True)
class QuadraticControl:
    mu: float

    def __post_init__(self):
        if not self.mu > 0:
            raise OCPError("QuadraticControl needs mu > 0")

    @property
    def label(self) -> str:
        return f"quadratic(mu={self.mu:g})"


@dataclass(frozen=True)
class SuppliedEnergy:
    @property
    def label(self) -> str:
        return "supplied-energy"


@dataclass(frozen=True, eq=False)
class StateWeight:
    """State weight W, held in physical coordinates and in xi coordinates (``T^T W T``)."""

    xi: sp.csr_matrix
    name: str = "custom"
    _x: np.ndarray | None = None

    def x(self, sys: PHSystem) -> np.ndarray:
        if self._x is not None:
            return self._x
        if sys.identity_coords:
            return self.xi.toarray()
        # W = T^{-T} W_xi T^{-1}
        Wi = sys._T_lu.solve(self.xi.toarray().T, trans="T").T  # W_xi T^{-1}
        W = sys._T_lu.solve(Wi, trans="T")
        return 0.5 * (W + W.T)


def weight_from_matrix(sys: PHSystem, W, name: str = "custom") -> StateWeight:
    W = np.asarray(W.toarray() if sp.issparse(W) else W, dtype=float)
    if W.shape != (sys.n, sys.n):
        raise OCPError(f"W must be {sys.n}x{sys.n}")
    if np.abs(W - W.T).max() > 1e-12 * max(np.abs(W).max(), 1.0):
        raise OCPError("W must be symmetric")
    ev = np.linalg.eigvalsh(W)
    if ev.min() < -1e-10 * max(np.abs(ev).max(), 1.0):
        raise OCPError(f"W must be positive semidefinite (min eigenvalue {ev.min():.3e})")
    T = sys.T.toarray()
    Wxi = T.T @ W @ T
    return StateWeight(sp.csr_matrix(0.5 * (Wxi + Wxi.T)), name, W)


def full_hamiltonian_weight(sys: PHSystem) -> StateWeight:
    """W = Q, i.e. x^T W x = 2 H(x)."""
    return StateWeight(sys.energy_metric, "full-hamiltonian")


def zero_weight(sys: PHSystem) -> StateWeight:
    return StateWeight(sp.csr_matrix((sys.n, sys.n)), "zero", np.zeros((sys.n, sys.n)))


def restricted_hamiltonian_weight(sys: PHSystem, dofs, name: str = "upmost-level") -> StateWeight:
    """Q with every row/column outside the given DOFs (and their momenta) zeroed.

    ``dofs`` index the displacement vector q; the matching momentum entries are
    included automatically for lifted systems.
    """
    if sys.n_dof is None:
        raise OCPError("restricted Hamiltonian weight needs a lifted second-order system")
    k = sys.n_dof
    dofs = np.asarray(sorted(set(int(d) for d in dofs)), dtype=int)
    model = sys.source
    M = model.M.tocsc()
    # W_x = blockdiag(S Minv S, S K S);  in xi = (q', q): blockdiag(M S Minv S M, S K S)
    E = sp.csc_matrix((np.ones(len(dofs)), (dofs, np.arange(len(dofs)))), shape=(k, len(dofs)))
    Minv_cols = spla.splu(M).solve(E.toarray())  # Minv[:, dofs]
    Minv_tt = Minv_cols[dofs]
    Mt = (M @ E).toarray()  # M[:, dofs]
    kin = Mt @ Minv_tt @ Mt.T
    kin[np.abs(kin) < 1e-14 * np.abs(kin).max()] = 0.0
    Kt = model.K.toarray()[np.ix_(dofs, dofs)]
    pot = sp.csr_matrix(E @ sp.csr_matrix(Kt) @ E.T)
    Wxi = sp.block_diag([sp.csr_matrix(0.5 * (kin + kin.T)), pot], format="csr")
    Wx = np.zeros((sys.n, sys.n))
    Wx[np.ix_(dofs, dofs)] = Minv_tt
    Wx[np.ix_(k + dofs, k + dofs)] = Kt
    return StateWeight(Wxi, name, 0.5 * (Wx + Wx.T))


@dataclass(frozen=True, eq=False)
class OCPSpec:
    sys: PHSystem
    W: StateWeight
    cost: QuadraticControl | SuppliedEnergy
    u_min: np.ndarray
    u_max: np.ndarray
    x0: np.ndarray
    grid: TimeGrid
    label: str = ""

    def __post_init__(self):
        m = self.sys.m
        u_min = np.broadcast_to(np.asarray(self.u_min, dtype=float), (m,)).copy()
        u_max = np.broadcast_to(np.asarray(self.u_max, dtype=float), (m,)).copy()
        object.__setattr__(self, "u_min", u_min)
        object.__setattr__(self, "u_max", u_max)
        if np.any(u_min > 0) or np.any(u_max < 0):
            raise OCPError("control box must contain 0")
        x0 = np.asarray(self.x0, dtype=float)
        if x0.shape != (self.sys.n,):
            raise OCPError(f"x0 must have length {self.sys.n}")
        object.__setattr__(self, "x0", x0)
        if self.W.xi.shape != (self.sys.n, self.sys.n):
            raise OCPError("W has the wrong dimension")
        if not self.label:
            object.__setattr__(self, "label", self.cost.label)


@dataclass(frozen=True, eq=False)
class OCPStructure:
    """Stage data of a transcribed OCP, in xi coordinates."""

    n: int
    m: int
    N: int
    h: float
    E0: sp.csc_matrix
    E1: sp.csr_matrix
    hB: np.ndarray
    S: sp.csr_matrix  # stage weight; stage cost h * xm^T S xm
    G: sp.csr_matrix | None  # terminal weight; cost xi_N^T G xi_N / 2
    mu: float  # stage cost h * mu * |u|^2
    xi0: np.ndarray

    def split(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        nx = self.N * self.n
        return z[:nx].reshape(self.N, self.n), z[nx:].reshape(self.N, self.m)

    def states_with_initial(self, z: np.ndarray) -> np.ndarray:
        xi, _ = self.split(z)
        return np.vstack([self.xi0, xi])


@dataclass(eq=False)
class QPProblem:
    """``min 1/2 z^T P z + g^T z + const  s.t.  E z = e,  lb <= z <= ub``."""

    P: sp.csr_matrix
    g: np.ndarray
    E: sp.csr_matrix
    e: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    const: float = 0.0
    structure: OCPStructure | None = None
    meta: dict = field(default_factory=dict)

    @property
    def nz(self) -> int:
        return self.P.shape[0]

    @property
    def bounded(self) -> np.ndarray:
        return np.flatnonzero(np.isfinite(self.lb) | np.isfinite(self.ub))

    def objective(self, z: np.ndarray) -> float:
        return float(0.5 * z @ (self.P @ z) + self.g @ z + self.const)


def stage_weights(spec: OCPSpec) -> tuple[sp.csr_matrix, sp.csr_matrix | None, float]:
    sys = spec.sys
    if isinstance(spec.cost, SuppliedEnergy):
        S = (spec.W.xi + sys.dissipation_metric).tocsr()
        return S, sys.energy_metric, 0.0
    return spec.W.xi.tocsr(), None, spec.cost.mu


def transcribe(spec: OCPSpec) -> QPProblem:
    """Implicit-midpoint collocation of the OCP into a sparse convex QP.

    Decision vector ``z = (xi_1, ..., xi_N, u_0, ..., u_{N-1})`` where
    ``x = T xi``. Dynamics rows read ``E1 xi_k + h B u_k - E0 xi_{k+1} = 0``.
    For the supplied-energy cost the objective is the reformulated
    ``H(x_N) + sum_k h xm_k^T (W + QRQ) xm_k`` (H(x0) omitted).
    """
    sys, grid = spec.sys, spec.grid
    n, m, N, h = sys.n, sys.m, grid.N, grid.h
    S, G, mu = stage_weights(spec)
    xi0 = sys.to_coords(spec.x0)

    tri = sp.diags(
        [np.full(N - 1, 1.0), np.r_[np.full(N - 1, 2.0), 1.0], np.full(N - 1, 1.0)], [-1, 0, 1], format="csr"
    )
    Pxx = (0.5 * h) * sp.kron(tri, S, format="csr")
    if G is not None:
        last = sp.csr_matrix(([1.0], ([N - 1], [N - 1])), shape=(N, N))
        Pxx = Pxx + sp.kron(last, G, format="csr")
    Puu = sp.identity(N * m, format="csr") * (2.0 * h * mu)
    P = sp.block_diag([Pxx, Puu], format="csr")

    g = np.zeros(N * n + N * m)
    Sx0 = S @ xi0
    g[:n] = 0.5 * h * Sx0
    const = 0.25 * h * float(xi0 @ Sx0)

    half = 0.5 * h * sys.AT
    E0 = sp.csc_matrix(sys.T - half)
    E1 = sp.csr_matrix(sys.T + half)
    diag = sp.kron(sp.identity(N), -E0, format="csr")
    sub = sp.kron(sp.eye(N, k=-1), E1, format="csr")
    Eu = sp.kron(sp.identity(N), sp.csr_matrix(h * sys.B), format="csr")
    E = sp.hstack([diag + sub, Eu], format="csr")
    e = np.zeros(N * n)
    e[:n] = -(E1 @ xi0)

    lb = np.r_[np.full(N * n, -np.inf), np.tile(spec.u_min, N)]
    ub = np.r_[np.full(N * n, np.inf), np.tile(spec.u_max, N)]
    structure = OCPStructure(n, m, N, h, E0, E1, h * sys.B, S, G, mu, xi0)
    return QPProblem(P, g, E, e, lb, ub, const, structure, {"cost": spec.cost.label})


def direct_objective(spec: OCPSpec, x: np.ndarray, u: np.ndarray) -> float:
    """Direct discretization of the cost (bilinear supply term for supplied energy)."""
    sys, h = spec.sys, spec.grid.h
    xm = 0.5 * (x[1:] + x[:-1])
    Wx = spec.W.x(sys)
    stage = np.einsum("ij,jk,ik->i", xm, Wx, xm)
    if isinstance(spec.cost, SuppliedEnergy):
        y = sys.Qx(xm) @ sys.B
        return float(h * (stage.sum() + np.einsum("ij,ij->", u, y)))
    return float(h * (stage.sum() + spec.cost.mu * np.sum(u * u)))


def reformulated_offset(spec: OCPSpec) -> float:
    """Constant separating the QP objective from the direct cost: H(x0) for supplied energy."""
    return float(hamiltonian(spec.sys, spec.x0)) if isinstance(spec.cost, SuppliedEnergy) else 0.0
