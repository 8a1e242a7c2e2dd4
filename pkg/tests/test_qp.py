import numpy as np
import pytest
import scipy.sparse as sp
from scipy.optimize import lsq_linear

from phdamp.integrator import TimeGrid
from phdamp.ocp.problem import (
    OCPSpec,
    QPProblem,
    QuadraticControl,
    SuppliedEnergy,
    full_hamiltonian_weight,
    transcribe,
)
from phdamp.ocp.qp import QPSolverConfig, QPSolverError, kkt_residuals, make_backend, solve_qp
from phdamp.phmodel import to_port_hamiltonian
from phdamp.structure import spring_mass_chain


def _qp(P, g, E=None, e=None, lb=None, ub=None):
    P = sp.csr_matrix(np.atleast_2d(P))
    n = P.shape[0]
    E = sp.csr_matrix((0, n)) if E is None else sp.csr_matrix(np.atleast_2d(E))
    e = np.zeros(E.shape[0]) if e is None else np.asarray(e, float)
    lb = np.full(n, -np.inf) if lb is None else np.asarray(lb, float)
    ub = np.full(n, np.inf) if ub is None else np.asarray(ub, float)
    return QPProblem(P, np.asarray(g, float), E, e, lb, ub)


def test_equality_constrained_matches_kkt_solve():
    P = np.array([[2.0, 0.5], [0.5, 1.0]])
    g = np.array([1.0, -1.0])
    E = np.array([[1.0, 1.0]])
    sol = solve_qp(_qp(P, g, E, [1.0]))
    K = np.block([[P, E.T], [E, np.zeros((1, 1))]])
    ref = np.linalg.solve(K, np.r_[-g, 1.0])
    np.testing.assert_allclose(sol.z, ref[:2], atol=1e-10)
    np.testing.assert_allclose(sol.nu, ref[2:], atol=1e-10)
    assert sol.status == "solved"


def test_clamped_scalar_and_dual_sign():
    # min (u + 2)^2 on [-1, 1]: lower bound active, multiplier negative by convention
    sol = solve_qp(_qp([[2.0]], [4.0], lb=[-1.0], ub=[1.0]))
    assert sol.z[0] == pytest.approx(-1.0, abs=1e-12)
    assert sol.y[0] == pytest.approx(-2.0, abs=1e-10)
    sol = solve_qp(_qp([[2.0]], [-4.0], lb=[-1.0], ub=[1.0]))
    assert sol.z[0] == pytest.approx(1.0, abs=1e-12)
    assert sol.y[0] == pytest.approx(2.0, abs=1e-10)
    assert sol.polished


def test_interior_box_has_zero_duals():
    sol = solve_qp(_qp([[2.0]], [1.0], lb=[-1.0], ub=[1.0]))
    assert sol.z[0] == pytest.approx(-0.5, abs=1e-10)
    assert sol.y[0] == pytest.approx(0.0, abs=1e-10)


def test_kkt_residuals_flag_perturbations():
    qp = _qp([[2.0]], [4.0], lb=[-1.0], ub=[1.0])
    sol = solve_qp(qp)
    assert sol.residuals.ok()
    assert kkt_residuals(qp, sol.z, sol.nu, -sol.y).stationarity > 0.5
    assert kkt_residuals(qp, sol.z - 1e-6, sol.nu, sol.y).bound_violation == pytest.approx(1e-6)
    # wrong-sign multiplier at an inactive bound shows up as complementarity
    bad = kkt_residuals(qp, np.array([0.0]), sol.nu, np.array([-4.0]))
    assert bad.complementarity > 0.1


def test_backend_errors():
    qp = _qp([[1.0]], [0.0])
    with pytest.raises(QPSolverError):
        make_backend(qp, "dense")
    with pytest.raises(QPSolverError):
        make_backend(qp, "riccati")


def test_iteration_cap_reports_status():
    chain = spring_mass_chain([1.0, 1.0], [1.0, 1.0], alpha1=0.05, alpha2=0.05)
    sys = to_port_hamiltonian(chain)
    spec = OCPSpec(sys, full_hamiltonian_weight(sys), SuppliedEnergy(), -0.3, 0.3, [0, 0, 1, 1.5], TimeGrid(6.0, 200))
    sol = solve_qp(transcribe(spec), QPSolverConfig(max_iter=10, polish=False))
    assert sol.status == "max_iter" and not sol.converged


# -- condensed oracle ----------------------------------------------------------


def condensed_oracle(sys, W, cost, x0, grid, u_min, u_max):
    """Eliminate the states with dense midpoint maps and solve the box QP by BVLS."""
    A, B, Q = sys.A, sys.B, sys.Q
    n, m, N, h = sys.n, sys.m, grid.N, grid.h
    I = np.eye(n)
    Ad = np.linalg.solve(I - 0.5 * h * A, I + 0.5 * h * A)
    Bd = np.linalg.solve(I - 0.5 * h * A, h * B)
    # x_k = Phi_k x0 + Gam_k u
    Phi = [I]
    Gam = [np.zeros((n, N * m))]
    for k in range(N):
        G = Ad @ Gam[-1]
        G[:, k * m : (k + 1) * m] += Bd
        Gam.append(G)
        Phi.append(Ad @ Phi[-1])
    S = W if isinstance(cost, QuadraticControl) else W + Q @ sys.R.toarray() @ Q
    H = np.zeros((N * m, N * m))
    f = np.zeros(N * m)
    c = 0.0
    for k in range(N):
        Pm, Gm = 0.5 * (Phi[k] + Phi[k + 1]), 0.5 * (Gam[k] + Gam[k + 1])
        a = Pm @ x0
        H += 2 * h * Gm.T @ S @ Gm
        f += 2 * h * Gm.T @ S @ a
        c += h * a @ S @ a
    if isinstance(cost, QuadraticControl):
        H += 2 * h * cost.mu * np.eye(N * m)
    else:
        a = Phi[N] @ x0
        H += Gam[N].T @ Q @ Gam[N]
        f += Gam[N].T @ Q @ a
        c += 0.5 * a @ Q @ a
    H = 0.5 * (H + H.T) + 1e-13 * np.abs(H).max() * np.eye(N * m)
    L = np.linalg.cholesky(H)
    res = lsq_linear(L.T, -np.linalg.solve(L, f), bounds=(np.tile(u_min, N), np.tile(u_max, N)),
                     method="bvls", tol=1e-14)
    u = res.x
    return u.reshape(N, m), 0.5 * u @ H @ u + f @ u + c


@pytest.fixture(scope="module")
def small_ocp():
    model = spring_mass_chain([1.0, 0.5], [2.0, 3.0], actuated=((-1, 0), (0, 1)), alpha1=0.1, alpha2=0.02)
    sys = to_port_hamiltonian(model)
    return sys, np.array([0.4, -0.2, 1.0, -0.7])


@pytest.mark.parametrize("backend", ["sparse", "riccati"])
@pytest.mark.parametrize("cost", [QuadraticControl(0.05), SuppliedEnergy()], ids=["quadratic", "supplied"])
def test_box_ocp_matches_condensed_oracle(small_ocp, backend, cost):
    sys, x0 = small_ocp
    W = full_hamiltonian_weight(sys)
    grid = TimeGrid(2.0, 10)
    spec = OCPSpec(sys, W, cost, -0.4, 0.4, x0, grid)
    qp = transcribe(spec)
    sol = solve_qp(qp, QPSolverConfig(backend=backend))
    assert sol.residuals.ok(1e-8, 1e-12)
    u_ref, obj_ref = condensed_oracle(sys, sys.Q, cost, x0, grid, spec.u_min, spec.u_max)
    _, u = qp.structure.split(sol.z)
    assert sol.objective == pytest.approx(obj_ref, rel=1e-9)
    # bounds are active somewhere, so the oracle exercises the active-set logic
    assert np.any(np.isclose(np.abs(u_ref), 0.4))
    if isinstance(cost, QuadraticControl):
        np.testing.assert_allclose(u, u_ref, atol=1e-7)


def test_backends_agree_on_duals(small_ocp):
    sys, x0 = small_ocp
    spec = OCPSpec(sys, full_hamiltonian_weight(sys), QuadraticControl(0.05), -0.4, 0.4, x0, TimeGrid(2.0, 10))
    qp = transcribe(spec)
    a = solve_qp(qp, QPSolverConfig(backend="sparse"))
    b = solve_qp(qp, QPSolverConfig(backend="riccati"))
    np.testing.assert_allclose(a.z, b.z, atol=1e-9)
    np.testing.assert_allclose(a.nu, b.nu, atol=1e-8 * np.abs(a.nu).max())
    np.testing.assert_allclose(a.y, b.y, atol=1e-8 * max(np.abs(a.y).max(), 1.0))
