"""Linear port-Hamiltonian systems ``x' = (J - R) Q x + B u``, ``y = B^T Q x``.

Q is kept in a factored form ``Q = QT @ inv(T)`` with sparse ``T`` and
``QT``. For a system lifted from second-order form with ``x = (M q', q)``,

    T  = blockdiag(M, I)      (x = T @ xi with xi = (q', q))
    QT = blockdiag(I, K)

so every matrix the solvers touch stays sparse and ``M^{-1}`` is never
formed unless ``Q`` is requested explicitly. Generic systems use ``T = I``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .structure import SecondOrderModel

DENSE_Q_LIMIT = 500


class PHModelError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class PHSystem:
    J: sp.csr_matrix
    R: sp.csr_matrix
    B: np.ndarray
    T: sp.csc_matrix
    QT: sp.csr_matrix
    n_dof: int | None = None
    source: SecondOrderModel | None = None

    @property
    def n(self) -> int:
        return self.J.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def identity_coords(self) -> bool:
        return self.source is None and _is_identity(self.T)

    @cached_property
    def _T_lu(self):
        return spla.splu(sp.csc_matrix(self.T))

    @cached_property
    def JR(self) -> sp.csr_matrix:
        return (self.J - self.R).tocsr()

    @cached_property
    def AT(self) -> sp.csr_matrix:
        """``A @ T = (J - R) @ QT`` (sparse)."""
        return (self.JR @ self.QT).tocsr()

    @cached_property
    def energy_metric(self) -> sp.csr_matrix:
        """``T^T Q T``: the Hamiltonian in xi coordinates is ``xi^T G xi / 2``."""
        G = (self.T.T @ self.QT).tocsr()
        return ((G + G.T) * 0.5).tocsr()

    @cached_property
    def dissipation_metric(self) -> sp.csr_matrix:
        """``(QT)^T R (QT)``: dissipated power in xi coordinates."""
        G = (self.QT.T @ self.R @ self.QT).tocsr()
        return ((G + G.T) * 0.5).tocsr()

    @cached_property
    def Q(self) -> np.ndarray:
        """Dense Q. Only available for moderate sizes."""
        if self.n > 2 * DENSE_Q_LIMIT:
            raise PHModelError(f"explicit Q refused for n={self.n}; use Qx()")
        if self.identity_coords:
            Q = self.QT.toarray()
        else:
            # Q = QT T^{-1}  =>  Q^T = T^{-T} QT^T
            Q = self._T_lu.solve(self.QT.T.toarray(), trans="T").T
        return 0.5 * (Q + Q.T)

    @cached_property
    def A(self) -> np.ndarray:
        return np.asarray(self.JR @ self.Q)

    @cached_property
    def R_sqrt(self) -> np.ndarray:
        w, V = np.linalg.eigh(self.R.toarray())
        scale = max(np.abs(w).max(initial=0.0), 1.0)
        w = np.where(w < 1e-12 * scale, 0.0, w)
        return (V * np.sqrt(w)) @ V.T

    def to_coords(self, x: np.ndarray) -> np.ndarray:
        """xi = T^{-1} x (works on stacked rows)."""
        x = np.asarray(x, dtype=float)
        if self.identity_coords:
            return x.copy()
        return self._T_lu.solve(np.atleast_2d(x).T).T.reshape(x.shape)

    def from_coords(self, xi: np.ndarray) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        return (self.T @ np.atleast_2d(xi).T).T.reshape(xi.shape)

    def Qx(self, x: np.ndarray) -> np.ndarray:
        """Q @ x for a vector or stacked row vectors."""
        xi = self.to_coords(x)
        return (self.QT @ np.atleast_2d(xi).T).T.reshape(np.shape(x))

    def apply_A(self, x: np.ndarray) -> np.ndarray:
        return (self.JR @ np.atleast_2d(self.Qx(x)).T).T.reshape(np.shape(x))

    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n:
            raise PHModelError(f"state dimension mismatch: expected {self.n}, got {x.shape[-1]}")
        return x

    # read-back of the second-order blocks
    def second_order_blocks(self) -> dict[str, np.ndarray]:
        if self.n_dof is None:
            raise PHModelError("system was not lifted from a second-order model")
        k = self.n_dof
        Q = self.Q
        return {
            "M": np.linalg.inv(Q[:k, :k]),
            "K": Q[k:, k:],
            "D": self.R.toarray()[:k, :k],
            "Fu": self.B[:k],
        }


def _is_identity(T: sp.spmatrix) -> bool:
    n = T.shape[0]
    diff = T - sp.identity(n, format="csr")
    return diff.count_nonzero() == 0


def check_ph_structure(sys: PHSystem, tol: float = 1e-12) -> None:
    """Raise if J, R, Q violate skewness, symmetry or definiteness."""
    J, R = sys.J, sys.R
    jn = max(abs(J).max(), 1.0)
    if abs(J + J.T).max() > tol * jn:
        raise PHModelError("J is not skew-symmetric")
    rn = max(abs(R).max(), 1.0) if R.nnz else 1.0
    if R.nnz and abs(R - R.T).max() > tol * rn:
        raise PHModelError("R is not symmetric")
    if sys.n <= 2 * DENSE_Q_LIMIT:
        w = np.linalg.eigvalsh(R.toarray())
        if w.size and w.min() < -1e-10 * max(abs(w).max(), 1.0):
            raise PHModelError(f"R has a negative eigenvalue {w.min():.3e}")
        G = sys.energy_metric.toarray()
        try:
            np.linalg.cholesky(G)
        except np.linalg.LinAlgError:
            raise PHModelError("Q is not positive definite") from None


def from_matrices(J, R, Q, B, validate: bool = True) -> PHSystem:
    """Build a generic system (identity coordinates) from explicit matrices."""
    J = sp.csr_matrix(np.asarray(J.toarray() if sp.issparse(J) else J, dtype=float))
    R = sp.csr_matrix(np.asarray(R.toarray() if sp.issparse(R) else R, dtype=float))
    Q = sp.csr_matrix(np.asarray(Q.toarray() if sp.issparse(Q) else Q, dtype=float))
    B = np.asarray(B.toarray() if sp.issparse(B) else B, dtype=float)
    if B.ndim == 1:
        B = B[:, None]
    n = J.shape[0]
    if J.shape != (n, n) or R.shape != (n, n) or Q.shape != (n, n) or B.shape[0] != n:
        raise PHModelError("inconsistent matrix dimensions")
    sys = PHSystem(J, R, B, sp.identity(n, format="csc"), Q)
    if validate:
        check_ph_structure(sys)
    return sys


def to_port_hamiltonian(model: SecondOrderModel) -> PHSystem:
    """Lift ``M q'' + D q' + K q = F_u u`` to port-Hamiltonian form."""
    k = model.n_dof
    M, D, K = model.M, model.D, model.K
    try:
        np.linalg.cholesky(M.toarray())
        np.linalg.cholesky(K.toarray())
    except np.linalg.LinAlgError:
        raise PHModelError("M and K must be positive definite") from None
    I = sp.identity(k, format="csr")
    Z = sp.csr_matrix((k, k))
    J = sp.bmat([[Z, -I], [I, Z]], format="csr")
    R = sp.bmat([[D, Z], [Z, Z]], format="csr")
    T = sp.bmat([[M, Z], [Z, I]], format="csc")
    QT = sp.bmat([[I, Z], [Z, K]], format="csr")
    B = np.vstack([model.Fu.toarray(), np.zeros((k, model.m))])
    return PHSystem(J, R, B, T, QT, n_dof=k, source=model)


def state_from_second_order(sys: PHSystem, q: np.ndarray, qdot: np.ndarray) -> np.ndarray:
    """x = (M q', q)."""
    if sys.source is None:
        raise PHModelError("system was not lifted from a second-order model")
    return np.concatenate([sys.source.M @ np.asarray(qdot, float), np.asarray(q, float)])


def hamiltonian(sys: PHSystem, x: np.ndarray) -> float | np.ndarray:
    """Stored energy ``x^T Q x / 2`` (vectorised over leading axes)."""
    x = sys._check(x)
    return 0.5 * np.einsum("...i,...i->...", x, sys.Qx(x))


def output(sys: PHSystem, x: np.ndarray) -> np.ndarray:
    """Collocated output ``y = B^T Q x``."""
    x = sys._check(x)
    return sys.Qx(x) @ sys.B


def dissipation_rate(sys: PHSystem, x: np.ndarray) -> float | np.ndarray:
    """``||R^{1/2} Q x||^2`` (vectorised)."""
    x = sys._check(x)
    Qx = np.atleast_2d(sys.Qx(x))
    val = np.einsum("ij,ij->i", Qx, (sys.R @ Qx.T).T)
    return val.reshape(x.shape[:-1]) if x.ndim > 1 else float(val[0])


def power_balance_residual(sys: PHSystem, x, u, xdot) -> float:
    """``xdot^T Q x + ||R^{1/2} Q x||^2 - u^T y``; zero on exact trajectories."""
    x = sys._check(x)
    xdot = sys._check(xdot)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if u.shape != (sys.m,):
        raise PHModelError(f"input dimension mismatch: expected {sys.m}, got {u.shape}")
    Qx = sys.Qx(x)
    return float(xdot @ Qx + Qx @ (sys.R @ Qx) - u @ (sys.B.T @ Qx))


# ---------------------------------------------------------------------------
# sparse triplet text format
# ---------------------------------------------------------------------------


def write_triplets(path: str | Path, matrix) -> None:
    """Header ``% rows cols nnz`` then one ``row col value`` line per entry (0-based)."""
    A = sp.coo_matrix(matrix)
    A.sum_duplicates()
    lines = [f"% {A.shape[0]} {A.shape[1]} {A.nnz}"]
    order = np.lexsort((A.col, A.row))
    lines += [f"{A.row[i]} {A.col[i]} {float(A.data[i])!r}" for i in order]
    Path(path).write_text("\n".join(lines) + "\n")


def read_triplets(path: str | Path) -> sp.csr_matrix:
    text = Path(path).read_text().splitlines()
    header = text[0].lstrip("%").split()
    if len(header) != 3 or not text[0].startswith("%"):
        raise PHModelError(f"{path}: missing '% rows cols nnz' header")
    rows, cols, nnz = (int(v) for v in header)
    body = [ln.split() for ln in text[1:] if ln.strip() and not ln.startswith("%")]
    if len(body) != nnz:
        raise PHModelError(f"{path}: header announces {nnz} entries, found {len(body)}")
    if not body:
        return sp.csr_matrix((rows, cols))
    r = np.array([int(b[0]) for b in body])
    c = np.array([int(b[1]) for b in body])
    v = np.array([float(b[2]) for b in body])
    return sp.csr_matrix((v, (r, c)), shape=(rows, cols))


def export_system(sys: PHSystem, directory: str | Path) -> list[Path]:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    items = {"J": sys.J, "R": sys.R, "Q": sys.Q, "B": sys.B}
    paths = []
    for name, mat in items.items():
        p = out / f"{name}.txt"
        write_triplets(p, mat)
        paths.append(p)
    return paths


def import_system(directory: str | Path) -> PHSystem:
    d = Path(directory)
    mats = {name: read_triplets(d / f"{name}.txt") for name in ("J", "R", "Q", "B")}
    return from_matrices(mats["J"], mats["R"], mats["Q"], mats["B"].toarray())


def sym_part_identity_residual(sys: PHSystem) -> float:
    """``||QA + A^T Q + 2 QRQ|| / ||QRQ||`` - zero for any pH system."""
    Q, A = sys.Q, sys.A
    QRQ = Q @ sys.R.toarray() @ Q
    return float(sla.norm(Q @ A + A.T @ Q + 2 * QRQ) / max(sla.norm(QRQ), 1e-300))
