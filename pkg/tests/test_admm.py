import numpy as np
import pytest

from pdeopt import admm, pinnsolve, prox
from pdeopt.field import Lattice, ScalarField, SeededRng
from pdeopt.problems import make_problem

LAT = Lattice((0.0,), (1.0,), (11,))


def test_multiplier_update_arithmetic():
    lam = ScalarField(LAT, np.ones(11))
    u = ScalarField(LAT, np.full(11, 3.0))
    z = ScalarField(LAT, np.full(11, 1.0))
    assert np.allclose(admm.multiplier_update(lam, u, z, 0.5).values, 0.0)
    assert np.allclose(admm.multiplier_update(np.ones(3), np.full(3, 2.0), np.zeros(3), 1.0), -1.0)


def test_multiplier_update_rejects_mixed_lattices():
    other = ScalarField(Lattice((0.0,), (1.0,), (12,)), np.zeros(12))
    f = ScalarField.zeros(LAT)
    with pytest.raises(ValueError):
        admm.multiplier_update(f, other, f, 1.0)


def _toy(a, gamma, beta, iterations, tol=0.0):
    """min 1/2 |u - a|^2 + gamma |u|: exact u-step, soft-threshold prox."""
    def u_step(k, z, lam):
        return (a + lam + beta * z) * (1 / (1 + beta)), None

    def prox_(v):
        return v.with_values(prox.shrink(v.values, gamma / beta))

    z0 = ScalarField.zeros(LAT)
    return admm.admm_iterate(u_step, prox_, z0, z0, beta, iterations, early_stop_tol=tol,
                             rel_err=lambda u: float(np.max(np.abs(u.values - prox.shrink(a.values, gamma)))))


def test_toy_problem_converges_to_the_soft_threshold():
    a = ScalarField(LAT, np.linspace(-2, 2, 11))
    rep = _toy(a, 0.7, 1.0, 200)
    assert not rep.failed and len(rep.rows) == 200
    assert np.allclose(rep.state.z.values, prox.shrink(a.values, 0.7), atol=1e-10)
    assert np.allclose(rep.state.u.values, rep.state.z.values, atol=1e-10)
    assert [r["k"] for r in rep.rows[:3]] == [1, 2, 3]
    assert rep.rows[-1]["rel_err"] < 1e-10


def test_early_stop_on_small_primal_residual():
    a = ScalarField(LAT, np.linspace(-2, 2, 11))
    rep = _toy(a, 0.7, 1.0, 200, tol=1e-6)
    assert len(rep.rows) < 200
    assert rep.rows[-1]["primal_residual"] < 1e-6


def test_divergence_ends_the_loop_with_the_rows_so_far():
    def u_step(k, z, lam):
        if k == 2:
            raise FloatingPointError("overflow")
        return z + 1.0, None

    z0 = ScalarField.zeros(LAT)
    rep = admm.admm_iterate(u_step, lambda v: v, z0, z0, 1.0, 10)
    assert rep.failed and len(rep.rows) == 2 and "iteration 3" in rep.message


def test_trace_csv_layout():
    a = ScalarField(LAT, np.linspace(-2, 2, 11))
    lines = _toy(a, 0.7, 1.0, 3).trace_csv().splitlines()
    assert lines[0] == "k,primal_residual,objective,rel_err"
    assert len(lines) == 4 and lines[1].startswith("1,")


def test_config_validation():
    with pytest.raises(ValueError):
        admm.AdmmConfig(beta=0.0, iterations=3)
    with pytest.raises(ValueError):
        admm.AdmmConfig(beta=1.0, iterations=0)
    with pytest.raises(ValueError):
        admm.AdmmConfig(beta=1.0, iterations=2, method="sgd")


def test_train_config_follows_the_preset():
    p = make_problem("ex2", {"train.warm_adam_iterations": "10", "weights.w_p": "3"})
    t = admm.train_config(p)
    assert t.opt.adam_iterations == 5000 and t.opt.lbfgs_iterations == 1000
    assert t.budget(1).adam_iterations == 10 and t.budget(1).lbfgs_iterations == 1000
    assert t.weights.w_p == 3.0 and t.hidden == (50, 50, 50, 50)


def test_pinn_admm_runs_and_records_training():
    p = make_problem("ex2", {"admm.iterations": "2", "net.width": "6", "net.hidden_layers": "2",
                             "train.adam_iterations": "20", "train.lbfgs_iterations": "5",
                             "admm.warm_start": "false"})
    rep = admm.admm_run(p, admm.admm_config(p, "ota"), admm.train_config(p), SeededRng(0))
    assert not rep.failed and len(rep.rows) == 2
    assert [t["steps"] for t in rep.training] == [25, 25]  # cold starts keep the full budget
    assert np.max(rep.state.z.values) <= 0.3


def test_unsupported_formulation():
    p = make_problem("ex4")
    with pytest.raises(pinnsolve.UnsupportedSolverError):
        admm.admm_run(p, admm.AdmmConfig(0.1, 1, "ato"), admm.train_config(p), SeededRng(0))
    with pytest.raises(pinnsolve.UnsupportedSolverError):
        admm.reference_run(p)


def test_gauss_newton_admm_decreases_the_gap():
    p = make_problem("ex1", {"admm.iterations": "5"})
    rep = admm.reference_run(p)
    assert len(rep.rows) == 5 and not rep.failed
    assert rep.rows[-1]["primal_residual"] < rep.rows[0]["primal_residual"]
    assert all(np.isfinite(r["objective"]) for r in rep.rows)
