import numpy as np
import pytest

from pdeopt import optim, pinnsolve, tape
from pdeopt.field import ScalarField, SeededRng
from pdeopt.problems import as_jet, make_problem

SMALL4 = {"samples.interior": 40, "samples.boundary": 16, "samples.initial": 8, "problem.lattice_nodes": 5}


def test_fixed_sets_do_not_change_between_iterations():
    p = make_problem("ex4", {**SMALL4, "samples.policy": "fixed"})
    a = p.sample("fixed", SeededRng(3), 0)
    b = p.sample("fixed", SeededRng(3), 4)
    for k in a.points:
        assert np.array_equal(a[k], b[k])


def test_resampling_is_fresh_per_iteration_and_reproducible():
    p = make_problem("ex4", SMALL4)
    a0 = p.sample("resample", SeededRng(3), 0)
    a1 = p.sample("resample", SeededRng(3), 1)
    again = p.sample("resample", SeededRng(3), 1)
    assert not np.array_equal(a0["interior"], a1["interior"])
    for k in a1.points:
        assert np.array_equal(a1[k], again[k])


def test_point_sets_lie_where_planned():
    p = make_problem("ex4", SMALL4)
    s = p.sample("resample", SeededRng(0), 0)
    x, n = s["boundary"], s.normals["boundary"]
    for i in range(x.shape[0]):
        ax = int(np.flatnonzero(n[i])[0])
        assert ax in (0, 1)  # spatial faces only
        assert x[i, ax] == (1.0 if n[i, ax] > 0 else 0.0)
    assert np.all(s["initial"][:, 2] == 0.0) and np.all(s["terminal"][:, 2] == 1.0)
    assert np.array_equal(s["initial"][:, :2], s["terminal"][:, :2])
    assert np.all((s["interior"] >= 0) & (s["interior"] <= 1))


def test_grid_sets_match_the_lattice():
    p = make_problem("ex1")
    s = p.sample("fixed", SeededRng(0))
    assert np.allclose(s["interior"][:, 0], p.lattice.axes()[0])


def test_unknown_policy_is_rejected():
    with pytest.raises(ValueError):
        make_problem("ex1").sample("sometimes", SeededRng(0))


@pytest.mark.parametrize("pid,method,over", [
    ("ex1", "ota", {}), ("ex1", "ato", {}), ("ex2", "ota", {}), ("ex2", "ato", {}),
    ("ex3", "ota", {"samples.interior": 6, "samples.boundary": 3}),
    ("ex4", "ota", SMALL4),
])
def test_oracle_gradient_matches_finite_differences(pid, method, over):
    p = make_problem(pid, over)
    rng = SeededRng(2)
    nets = pinnsolve.init_networks(p, method, (6, 6), rng)
    gen = np.random.default_rng(5)
    z = p.zeros().with_values(0.3 * gen.standard_normal(p.lattice.shape))
    lam = p.zeros().with_values(0.1 * gen.standard_normal(p.lattice.shape))
    widths = {n: net.widths for n, net in nets.items()}
    oracle = pinnsolve.assemble_ota_loss(p, widths, z, lam, p.sample("fixed", rng), pinnsolve.LossWeights()) \
        if method == "ota" else pinnsolve.assemble_ato_loss(p, widths, z, lam, p.sample("fixed", rng),
                                                            pinnsolve.LossWeights())
    theta = oracle.join(nets)
    _, g = oracle(theta)
    d = gen.standard_normal(theta.size)
    e = 1e-6
    fd = (oracle(theta + e * d)[0] - oracle(theta - e * d)[0]) / (2 * e)
    assert abs(fd - g @ d) <= 1e-6 * max(abs(fd), 1e-8)


def test_ato_loss_by_hand():
    # a feasible state with u = z + lam/beta leaves only the data misfit
    p = make_problem("ex1")
    nu = p["problem.nu"]
    x = np.array([0.2, 0.5])
    y = np.sin(np.pi * x)
    u = np.array([1.0, 2.0])
    f = nu * np.pi**2 * y + u * y
    J = {("u", "interior"): tape.leaf_jet(as_jet(u)),
         ("y", "interior"): tape.leaf_jet(as_jet(y, np.zeros((2, 1)), (-np.pi**2 * y)[:, None]))}
    lam = np.array([0.01, -0.02])
    ctx = {"interior": {"f": f, "y_obs": y - 0.1, "z": u - lam / p.beta, "lam": lam}}
    L = p.loss("ato", J, ctx, pinnsolve.LossWeights())
    assert L.value == pytest.approx(0.5 * 0.1**2, rel=1e-12)
    # with the wrong u the state residual adds in with weight w_e
    J[("u", "interior")] = tape.leaf_jet(as_jet(u + 0.5))
    L = p.loss("ato", J, ctx, pinnsolve.LossWeights(w_e=2.0))
    aug = 0.5 * p.beta * 0.5**2
    pde = np.mean((0.5 * y) ** 2)
    assert L.value == pytest.approx(0.5 * 0.1**2 + aug + 2.0 * pde, rel=1e-12)


def test_ato_needs_the_expert_switch_on_ex4():
    p = make_problem("ex4", SMALL4)
    rng = SeededRng(0)
    nets = pinnsolve.init_networks(p, "ota", (4,), rng)
    cfg = pinnsolve.TrainConfig(optim.OptConfig(adam_iterations=1, lbfgs_iterations=0))
    with pytest.raises(pinnsolve.UnsupportedSolverError):
        pinnsolve.solve_subproblem(p, nets, p.zeros(), p.zeros(), cfg, "ato", rng)


def test_subproblem_training_lowers_the_loss_and_fills_the_lattice():
    p = make_problem("ex2")
    rng = SeededRng(0)
    nets = pinnsolve.init_networks(p, "ota", (8, 8), rng)
    cfg = pinnsolve.TrainConfig(optim.OptConfig(adam_iterations=200, adam_lr=1e-2, lbfgs_iterations=50),
                                hidden=(8, 8))
    r = pinnsolve.solve_subproblem(p, nets, p.zeros(), p.zeros(), cfg, "ota", rng)
    assert r.trace[-1][1] < 0.1 * r.trace[0][1]
    assert isinstance(r.u, ScalarField) and r.u.lattice == p.lattice
    # bubble ansatz: the state vanishes on the boundary exactly
    assert r.y.values[0] == 0 and r.y.values[-1] == 0
