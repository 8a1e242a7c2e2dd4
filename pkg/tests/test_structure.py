import numpy as np
import pytest
import scipy.linalg as sla

from phdamp.structure import (
    STEEL,
    Actuator,
    Element,
    Material,
    Node,
    Section,
    StructureError,
    StructureSpec,
    assemble,
    beam_local_matrices,
    dump_structure_spec,
    element_matrices,
    generate_frame,
    load_structure,
    model_summary,
    natural_frequencies,
    parse_structure_spec,
    spring_mass_chain,
    top_nodes,
)

SEC = Section(A=6.0e-3, Iy=2.0e-5, Iz=3.5e-5, J=5.0e-5)


def hermite_oracle(EI, rhoA, L, npts=6):
    """Bending stiffness/mass from Gauss quadrature of cubic Hermite shape functions."""
    xg, wg = np.polynomial.legendre.leggauss(npts)
    x = 0.5 * L * (xg + 1)
    w = 0.5 * L * wg
    xi = x / L
    N = np.stack([1 - 3 * xi**2 + 2 * xi**3, L * (xi - 2 * xi**2 + xi**3), 3 * xi**2 - 2 * xi**3, L * (-(xi**2) + xi**3)])
    d2 = np.stack([(-6 + 12 * xi) / L**2, (-4 + 6 * xi) / L, (6 - 12 * xi) / L**2, (-2 + 6 * xi) / L])
    return EI * (d2 * w) @ d2.T, rhoA * (N * w) @ N.T


def test_beam_bending_blocks_match_quadrature():
    L = 2.3
    k, m = beam_local_matrices(STEEL, SEC, L)
    Kb, Mb = hermite_oracle(STEEL.E * SEC.Iz, STEEL.rho * SEC.A, L)
    idx = [1, 5, 7, 11]
    np.testing.assert_allclose(k[np.ix_(idx, idx)], Kb, rtol=1e-10, atol=1e-6)
    np.testing.assert_allclose(m[np.ix_(idx, idx)], Mb, rtol=1e-10, atol=1e-12)
    # the x-z plane has the opposite rotation sign convention
    Ky, My = hermite_oracle(STEEL.E * SEC.Iy, STEEL.rho * SEC.A, L)
    S = np.diag([1.0, -1.0, 1.0, -1.0])
    idx = [2, 4, 8, 10]
    np.testing.assert_allclose(k[np.ix_(idx, idx)], S @ Ky @ S, rtol=1e-10, atol=1e-6)
    np.testing.assert_allclose(m[np.ix_(idx, idx)], S @ My @ S, rtol=1e-10, atol=1e-12)


def test_beam_axial_and_torsion():
    L = 1.7
    k, m = beam_local_matrices(STEEL, SEC, L)
    assert k[0, 0] == pytest.approx(STEEL.E * SEC.A / L)
    assert k[0, 6] == pytest.approx(-STEEL.E * SEC.A / L)
    assert k[3, 3] == pytest.approx(STEEL.G * SEC.J / L)
    assert m[0, 0] == pytest.approx(STEEL.rho * SEC.A * L / 3)


def _rigid_modes(p1, p2):
    """Six rigid-body motions of a two-node beam in (u1, r1, u2, r2) ordering."""
    modes = []
    for a in range(3):
        v = np.zeros(12)
        v[a] = v[6 + a] = 1.0
        modes.append(v)
    for a in range(3):
        w = np.zeros(3)
        w[a] = 1.0
        v = np.zeros(12)
        v[0:3] = np.cross(w, p1)
        v[3:6] = w
        v[6:9] = np.cross(w, p2)
        v[9:12] = w
        modes.append(v)
    return np.array(modes).T


@pytest.mark.parametrize("p2", [(0, 0, 3.0), (2.0, 0, 0), (1.0, -2.0, 0.5), (0.1, 0.2, -1.5)])
def test_rotated_beam_rigid_body_invariants(p2):
    p1 = np.array([0.3, 0.1, 0.2])
    p2 = p1 + np.array(p2, float)
    el = Element("beam", (0, 1), STEEL, SEC)
    k, m = element_matrices(el, {0: p1, 1: p2})
    assert np.abs(k - k.T).max() < 1e-6 * np.abs(k).max()
    R = _rigid_modes(p1, p2)
    assert np.abs(k @ R).max() < 1e-8 * np.abs(k).max()
    # 6 rigid modes are the only zero-energy motions
    ev = np.linalg.eigvalsh(k)
    assert np.sum(ev < 1e-8 * ev.max()) == 6
    L = np.linalg.norm(p2 - p1)
    for a in range(3):
        assert R[:, a] @ m @ R[:, a] == pytest.approx(STEEL.rho * SEC.A * L, rel=1e-12)


def test_link_element():
    el = Element("link", (0, 1), STEEL, Section(A=1e-3))
    k, m = element_matrices(el, {0: (0, 0, 0), 1: (3.0, 4.0, 0)})
    c = np.array([0.6, 0.8, 0.0])
    d = np.concatenate([-c, c])
    assert d @ k @ d == pytest.approx(4 * STEEL.E * 1e-3 / 5.0)
    perp = np.concatenate([[0, 0, 1.0], [0, 0, 0]])
    assert perp @ k @ perp == pytest.approx(0.0, abs=1e-6)
    t = np.array([1.0, 0, 0, 1.0, 0, 0])
    assert t @ m @ t == pytest.approx(STEEL.rho * 1e-3 * 5.0)


def test_cantilever_frequency_converges_to_euler_bernoulli():
    L, ne = 4.0, 16
    nodes = [Node(0, (0, 0, 0), (True,) * 6)] + [Node(i, (L * i / ne, 0, 0)) for i in range(1, ne + 1)]
    elements = [Element("beam", (i, i + 1), STEEL, SEC) for i in range(ne)]
    model = assemble(StructureSpec(tuple(nodes), tuple(elements), (), 0.0, 1e-4))
    f = natural_frequencies(model, 1)[0]
    # first root of cos(x) cosh(x) = -1, bending about the weaker axis
    beta = 1.8751040687119611
    exact = beta**2 * np.sqrt(STEEL.E * min(SEC.Iy, SEC.Iz) / (STEEL.rho * SEC.A * L**4)) / (2 * np.pi)
    assert f == pytest.approx(exact, rel=1e-6)


def test_frame_dimensions():
    spec = generate_frame()
    model = assemble(spec)
    assert len(spec.nodes) == 28
    assert model.n_dof == 152
    assert model.m == 24
    assert top_nodes(spec) == [24, 25, 26, 27]
    assert len(model.dofs_of(top_nodes(spec))) == 24
    M, K = model.M.toarray(), model.K.toarray()
    assert np.linalg.eigvalsh(M).min() > 0
    assert np.linalg.eigvalsh(K).min() > 0
    D = model.D.toarray()
    np.testing.assert_allclose(D, 0.05 * M + 0.005 * K, rtol=0, atol=1e-12 * np.abs(D).max())


def test_frame_layouts_and_errors():
    assert assemble(generate_frame(actuator_layout="columns_lower_three")).m == 12
    assert assemble(generate_frame(storeys=4, actuator_layout="all_storeys")).m == 32
    assert assemble(generate_frame(storeys=3, actuator_layout="none")).m == 0
    with pytest.raises(StructureError, match="layout-infeasible"):
        generate_frame(storeys=2)
    with pytest.raises(StructureError):
        generate_frame(actuator_layout="diagonal")


def test_actuator_force_pattern_is_equal_and_opposite():
    spec = generate_frame(storeys=3)
    model = assemble(spec)
    Fu = model.Fu.toarray()
    # column actuators between two free nodes act along z on both ends
    j = next(i for i, a in enumerate(spec.actuators) if a.nodes[0] >= 4)
    col = Fu[:, j]
    assert np.count_nonzero(col) == 2
    assert col.sum() == pytest.approx(0.0)


def test_validation_messages():
    good = generate_frame(storeys=3)
    with pytest.raises(StructureError, match="dangling"):
        bad = StructureSpec(good.nodes, good.elements + (Element("link", (0, 99), STEEL, SEC),))
        assemble(bad)
    with pytest.raises(StructureError, match="duplicate"):
        assemble(StructureSpec(good.nodes + (good.nodes[0],), good.elements))
    with pytest.raises(StructureError, match="unit vector"):
        assemble(StructureSpec(good.nodes, good.elements, (Actuator((0, 4), (1.0, 1.0, 0.0)),)))
    with pytest.raises(StructureError, match="positive definite"):
        free = tuple(Node(n.id, n.position) for n in good.nodes)
        assemble(StructureSpec(free, good.elements))
    with pytest.raises(StructureError, match="damping"):
        assemble(StructureSpec(good.nodes, good.elements, (), 0.0, 0.0))
    with pytest.raises(StructureError, match="degenerate"):
        nodes = good.nodes + (Node(999, good.nodes[0].position),)
        assemble(StructureSpec(nodes, good.elements + (Element("link", (0, 999), STEEL, SEC),)))


def test_document_round_trip(tmp_path):
    spec = generate_frame(storeys=3, alpha1=0.02)
    text = dump_structure_spec(spec)
    path = tmp_path / "f.cfg"
    path.write_text(text)
    back = load_structure(path)
    assert back.nodes == spec.nodes
    assert back.elements == spec.elements
    assert back.actuators == spec.actuators
    assert (back.alpha1, back.alpha2) == (0.02, spec.alpha2)
    assert top_nodes(back) == top_nodes(spec)
    a, b = assemble(spec), assemble(back)
    assert abs(a.K - b.K).max() == 0


def test_document_errors():
    with pytest.raises(StructureError, match="nodes: missing"):
        parse_structure_spec("[meta]\nname='x'\n")
    doc = """
[[nodes]]
id = 0
position = [0, 0, 0]
fixed = "all"
[[nodes]]
id = 1
position = [0, 0, 1]
[[elements]]
kind = "beam"
nodes = [0, 1]
section = "missing"
"""
    with pytest.raises(StructureError, match="unknown section"):
        parse_structure_spec(doc)
    with pytest.raises(StructureError, match="unknown axis"):
        parse_structure_spec(doc.replace('"all"', '["uq"]'))
    with pytest.raises(StructureError, match="document"):
        parse_structure_spec("[[nodes]\n")


def test_bundled_frame_file_matches_generator():
    from pathlib import Path

    path = Path(__file__).resolve().parents[1] / "frames" / "six_storey.cfg"
    spec = load_structure(path)
    ref = generate_frame()
    assert spec.nodes == ref.nodes and spec.elements == ref.elements and spec.actuators == ref.actuators


def test_spring_mass_chain():
    model = spring_mass_chain([1.0, 2.0], [3.0, 5.0], actuated=((-1, 0), (0, 1)), alpha1=0.1, alpha2=0.0)
    np.testing.assert_allclose(model.K.toarray(), [[8.0, -5.0], [-5.0, 5.0]])
    np.testing.assert_allclose(model.Fu.toarray(), [[1.0, -1.0], [0.0, 1.0]])
    w2 = sla.eigh(model.K.toarray(), model.M.toarray(), eigvals_only=True)
    np.testing.assert_allclose(natural_frequencies(model, 2), np.sqrt(w2) / (2 * np.pi))
    with pytest.raises(StructureError):
        spring_mass_chain([1.0], [1.0, 2.0])


def test_model_summary_keys():
    spec = generate_frame(storeys=3)
    rec = model_summary(spec, assemble(spec))
    assert rec["nodes"] == 16 and rec["actuators"] == 24
    assert rec["frequency_1_hz"] > 0
    assert Material(E=1.0, rho=1.0, nu=0.25).G == pytest.approx(0.4)
