import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phdamp.phmodel import (
    PHModelError,
    check_ph_structure,
    dissipation_rate,
    export_system,
    from_matrices,
    hamiltonian,
    import_system,
    output,
    power_balance_residual,
    read_triplets,
    state_from_second_order,
    sym_part_identity_residual,
    to_port_hamiltonian,
    write_triplets,
)
from phdamp.structure import assemble, generate_frame, spring_mass_chain


@pytest.fixture(scope="module")
def frame3():
    model = assemble(generate_frame(storeys=3))
    return model, to_port_hamiltonian(model)


def test_lift_recovers_second_order_blocks(frame3):
    model, sys = frame3
    k = model.n_dof
    assert sys.n == 2 * k and sys.m == model.m
    check_ph_structure(sys)
    blocks = sys.second_order_blocks()
    np.testing.assert_allclose(blocks["K"], model.K.toarray(), rtol=1e-10, atol=1e-6)
    np.testing.assert_allclose(blocks["D"], model.D.toarray())
    Minv = np.linalg.inv(model.M.toarray())
    np.testing.assert_allclose(np.linalg.inv(blocks["M"]), Minv, rtol=1e-8, atol=1e-10 * np.abs(Minv).max())


def test_energy_is_kinetic_plus_potential(frame3, rng):
    model, sys = frame3
    q, v = rng.standard_normal((2, model.n_dof))
    x = state_from_second_order(sys, q, v)
    M, K = model.M.toarray(), model.K.toarray()
    assert hamiltonian(sys, x) == pytest.approx(0.5 * v @ M @ v + 0.5 * q @ K @ q, rel=1e-10)
    # output is actuator-point velocity, dissipation is v^T D v
    np.testing.assert_allclose(output(sys, x), model.Fu.T @ v, rtol=1e-8, atol=1e-10)
    assert dissipation_rate(sys, x) == pytest.approx(v @ model.D.toarray() @ v, rel=1e-8)


def test_vectorised_helpers(frame3, rng):
    _, sys = frame3
    X = rng.standard_normal((5, sys.n))
    H = hamiltonian(sys, X)
    assert H.shape == (5,)
    assert H[2] == pytest.approx(hamiltonian(sys, X[2]))
    assert dissipation_rate(sys, X).shape == (5,)
    with pytest.raises(PHModelError, match="dimension"):
        hamiltonian(sys, np.zeros(3))


def test_symmetric_part_identity(frame3):
    _, sys = frame3
    assert sym_part_identity_residual(sys) < 1e-9


def test_power_balance_on_exact_derivative(rng):
    model = spring_mass_chain([1.0, 3.0, 2.0], [2.0, 1.0, 4.0], actuated=((-1, 0), (1, 2)), alpha1=0.2, alpha2=0.03)
    sys = to_port_hamiltonian(model)
    x, u = rng.standard_normal(sys.n), rng.standard_normal(sys.m)
    xdot = sys.apply_A(x) + sys.B @ u
    assert abs(power_balance_residual(sys, x, u, xdot)) < 1e-12 * np.abs(x).max() ** 2 * 100
    with pytest.raises(PHModelError):
        power_balance_residual(sys, x, np.zeros(5), xdot)


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=1, max_value=6), st.integers(min_value=0, max_value=2**31 - 1))
def test_generic_system_power_balance(n, seed):
    r = np.random.default_rng(seed)
    S = r.standard_normal((n, n))
    J = S - S.T
    L = r.standard_normal((n, n))
    R = L @ L.T
    G = r.standard_normal((n, n))
    Q = G @ G.T + n * np.eye(n)
    B = r.standard_normal((n, 2))
    sys = from_matrices(J, R, Q, B)
    x, u = r.standard_normal(n), r.standard_normal(2)
    xdot = (J - R) @ Q @ x + B @ u
    scale = abs(xdot @ Q @ x) + abs(u @ B.T @ Q @ x) + 1.0
    assert abs(power_balance_residual(sys, x, u, xdot)) < 1e-10 * scale


def test_structure_checks():
    I = np.eye(2)
    with pytest.raises(PHModelError, match="skew"):
        from_matrices(I, np.zeros((2, 2)), I, np.ones(2))
    J = np.array([[0.0, 1.0], [-1.0, 0.0]])
    with pytest.raises(PHModelError, match="negative eigenvalue"):
        from_matrices(J, -I, I, np.ones(2))
    with pytest.raises(PHModelError, match="positive definite"):
        from_matrices(J, np.zeros((2, 2)), np.diag([1.0, -1.0]), np.ones(2))
    with pytest.raises(PHModelError, match="dimensions"):
        from_matrices(J, np.zeros((3, 3)), I, np.ones(2))


def test_triplet_round_trip(tmp_path, frame3):
    _, sys = frame3
    paths = export_system(sys, tmp_path / "sys")
    assert [p.name for p in paths] == ["J.txt", "R.txt", "Q.txt", "B.txt"]
    back = import_system(tmp_path / "sys")
    np.testing.assert_array_equal(back.J.toarray(), sys.J.toarray())
    np.testing.assert_array_equal(back.Q, sys.Q)
    np.testing.assert_array_equal(back.B, sys.B)


def test_triplet_header_errors(tmp_path):
    p = tmp_path / "m.txt"
    write_triplets(p, np.array([[1.0, 0.0], [0.0, 2.0]]))
    assert p.read_text().splitlines()[0] == "% 2 2 2"
    p.write_text("% 2 2 3\n0 0 1.0\n")
    with pytest.raises(PHModelError, match="announces"):
        read_triplets(p)
    p.write_text("0 0 1.0\n")
    with pytest.raises(PHModelError, match="header"):
        read_triplets(p)
