from pathlib import Path

import numpy as np
import pytest

from phdamp.phmodel import hamiltonian
from phdamp.scenario import (
    ConfigError,
    CostEntry,
    X0Recipe,
    build_setup,
    load_scenario,
    parse_force,
    parse_scenario,
)

ROOT = Path(__file__).resolve().parents[1]

BASE = """
name = "t"
[structure.generator]
storeys = 3
[horizon]
T = 0.5
N = 50
[box]
u_max = "20 kN"
[[costs]]
kind = "quadratic"
mu = [1e-6, 1e-8]
[[costs]]
kind = "supplied-energy"
"""


def test_parse_force_units():
    assert parse_force("100 kN") == 1e5
    assert parse_force("2.5MN") == 2.5e6
    assert parse_force(" 7 N ") == 7.0
    assert parse_force(12) == 12.0
    for bad in ("10 kW", "abc", True, None):
        with pytest.raises(ConfigError):
            parse_force(bad)


def test_parse_defaults_and_cost_expansion():
    cfg = parse_scenario(BASE)
    assert [c.label for c in cfg.costs] == ["quadratic mu=1e-06", "quadratic mu=1e-08", "supplied-energy"]
    assert [c.slug for c in cfg.costs] == ["quadratic_mu1e-06", "quadratic_mu1e-08", "supplied_energy"]
    assert cfg.u_min == -2e4 and cfg.u_max == 2e4
    assert cfg.N_fine == 1000
    assert cfg.weight == "full-hamiltonian"
    assert cfg.x0 == X0Recipe()
    assert cfg.x0.energy == 13906.0
    assert CostEntry("uncontrolled").slug == "uncontrolled"


@pytest.mark.parametrize(
    "edit, message",
    [
        (("N = 50", "N = 50\nN_fine = 10"), "N_fine"),
        (('u_max = "20 kN"', 'u_max = "-20 kN"'), "box"),
        (('kind = "supplied-energy"', 'kind = "bang"'), "unknown kind"),
        (("mu = [1e-6, 1e-8]", "mu = [0.0]"), "positive"),
        (("[structure.generator]", '[structure]\nfile = "x.cfg"\n[structure.generator]'), "exactly one"),
        (("T = 0.5\n", ""), "missing 'T'"),
        (("[horizon]", '[weight]\nkind = "upper"\n[horizon]'), "weight.kind"),
        (("[horizon]", '[weight]\nkind = "matrix"\n[horizon]'), "needs 'file'"),
        (("[horizon]", '[x0]\nkind = "wind"\n[horizon]'), "unknown recipe"),
        (("[horizon]", '[solver]\nwarp = 9\n[horizon]'), "solver"),
        (("name", "name = = "), "scenario"),
    ],
)
def test_config_errors(edit, message):
    text = BASE.replace(*edit, 1)
    with pytest.raises(ConfigError, match=message):
        cfg = parse_scenario(text)
        cfg.solver_config()


def test_static_deflection_hits_target_energy():
    setup = build_setup(parse_scenario(BASE))
    assert hamiltonian(setup.sys, setup.x0) == pytest.approx(13906.0, rel=1e-12)
    k = setup.model.n_dof
    assert np.abs(setup.x0[:k]).max() == 0  # starts at rest
    q = setup.x0[k:]
    ux = np.array([d.axis == "ux" for d in setup.model.dof_labels])
    # the lateral load pattern drives the x-translations in one direction
    assert np.all(q[ux] > 0)


def test_modal_and_rest_and_file_recipes(tmp_path):
    text = BASE + '\n[x0]\nkind = "modal"\nmode = 2\nenergy = 50.0\n'
    setup = build_setup(parse_scenario(text))
    assert hamiltonian(setup.sys, setup.x0) == pytest.approx(50.0)
    K, M = setup.model.K.toarray(), setup.model.M.toarray()
    q = setup.x0[setup.model.n_dof :]
    w2 = (q @ K @ q) / (q @ M @ q)
    lam = np.sort(np.linalg.eigvals(np.linalg.solve(M, K)).real)
    assert w2 == pytest.approx(lam[1], rel=1e-8)

    setup = build_setup(parse_scenario(BASE + '\n[x0]\nkind = "rest"\n'))
    assert not setup.x0.any()

    vec = tmp_path / "x0.txt"
    np.savetxt(vec, np.arange(setup.sys.n, dtype=float))
    cfg = parse_scenario(BASE + '\n[x0]\nkind = "file"\nfile = "x0.txt"\n', tmp_path)
    np.testing.assert_array_equal(build_setup(cfg).x0, np.arange(setup.sys.n))
    np.savetxt(vec, np.arange(3.0))
    with pytest.raises(ConfigError, match="expected"):
        build_setup(cfg)
    with pytest.raises(ConfigError, match="mode"):
        build_setup(parse_scenario(BASE + '\n[x0]\nkind = "modal"\nmode = 999\n'))


def test_weight_choices(tmp_path):
    setup = build_setup(parse_scenario(BASE.replace("[horizon]", '[weight]\nkind = "upmost-level"\n[horizon]')))
    assert setup.W.name == "upmost-level"
    Wx = setup.W.x(setup.sys)
    assert np.count_nonzero(np.abs(Wx).sum(axis=0)) == 2 * len(setup.top_dofs)
    setup = build_setup(parse_scenario(BASE.replace("[horizon]", '[weight]\nkind = "zero"\n[horizon]')))
    assert setup.W.xi.nnz == 0
    n = setup.sys.n
    np.savetxt(tmp_path / "w.txt", -np.eye(n))
    cfg = parse_scenario(BASE.replace("[horizon]", '[weight]\nkind = "matrix"\nfile = "w.txt"\n[horizon]'), tmp_path)
    with pytest.raises(ConfigError, match="semidefinite"):
        build_setup(cfg)


def test_overrides_and_uncontrolled_spec():
    cfg = parse_scenario(BASE).with_overrides(fine_grid=200, horizons=[1, 2, 4])
    assert cfg.N_fine == 200 and cfg.horizons == (1.0, 2.0, 4.0)
    assert cfg.solver_config(1e-5).eps_abs == 1e-5
    setup = build_setup(cfg)
    spec = setup.ocp(CostEntry("uncontrolled"))
    assert np.all(spec.u_min == 0) and np.all(spec.u_max == 0)
    spec = setup.ocp(CostEntry("supplied-energy"), T=1.0, N=100)
    assert spec.grid.T == 1.0 and spec.grid.N == 100


@pytest.mark.parametrize("name", sorted(p.name for p in (ROOT / "scenarios").glob("*.cfg")))
def test_bundled_scenarios_parse(name):
    cfg = load_scenario(ROOT / "scenarios" / name)
    assert cfg.costs
    assert cfg.N_fine >= cfg.N


def test_missing_file():
    with pytest.raises(ConfigError, match="cannot read"):
        load_scenario("/nonexistent/scenario.cfg")
