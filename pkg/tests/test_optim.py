import numpy as np
import pytest

from pdeopt import optim
from pdeopt.verify import wolfe_ok


def rosenbrock(x):
    f = 100 * (x[1] - x[0] ** 2) ** 2 + (1 - x[0]) ** 2
    g = np.array([-400 * x[0] * (x[1] - x[0] ** 2) - 2 * (1 - x[0]), 200 * (x[1] - x[0] ** 2)])
    return f, g


def make_quadratic(seed=0, n=10):
    rng = np.random.default_rng(seed)
    Q = rng.standard_normal((n, n))
    A = Q @ Q.T + n * np.eye(n)
    xs = rng.standard_normal(n)

    def fn(x):
        d = x - xs
        return 0.5 * d @ A @ d, A @ d

    return fn, xs


def test_lbfgs_rosenbrock_with_strong_wolfe_steps():
    cfg = optim.OptConfig(lbfgs_iterations=200, gtol=1e-10)
    r = optim.lbfgs_run(rosenbrock, np.array([-1.2, 1.0]), cfg)
    np.testing.assert_allclose(r.theta, [1.0, 1.0], atol=1e-6)
    assert r.status == "converged"
    assert len(r.wolfe) == len(r.trace) - r.fallback_steps
    assert wolfe_ok(r.wolfe, cfg.c1, cfg.c2)


@pytest.mark.parametrize("seed", range(5))
def test_lbfgs_quadratic_converges_in_few_iterations(seed):
    fn, xs = make_quadratic(seed)
    # a tight curvature condition makes each step close to an exact line search
    cfg = optim.OptConfig(lbfgs_iterations=100, c2=0.01, gtol=1e-10)
    r = optim.lbfgs_run(fn, np.zeros(10), cfg)
    assert np.linalg.norm(fn(r.theta)[1]) <= 1e-10
    assert len(r.trace) <= 15
    assert wolfe_ok(r.wolfe, cfg.c1, cfg.c2)


@pytest.mark.parametrize("seed", range(5))
def test_every_accepted_step_satisfies_strong_wolfe(seed):
    fn, _ = make_quadratic(seed, 6)
    cfg = optim.OptConfig(lbfgs_iterations=50)
    r = optim.lbfgs_run(fn, np.random.default_rng(seed).standard_normal(6), cfg)
    assert r.wolfe and wolfe_ok(r.wolfe, cfg.c1, cfg.c2)


def test_lbfgs_zero_budget_and_start_at_minimizer():
    fn, xs = make_quadratic()
    r = optim.lbfgs_run(fn, np.zeros(10), optim.OptConfig(lbfgs_iterations=0))
    assert r.trace == [] and np.array_equal(r.theta, np.zeros(10))
    r = optim.lbfgs_run(fn, xs.copy(), optim.OptConfig(lbfgs_iterations=10))
    assert r.trace == [] and r.status == "converged"


def test_lbfgs_reports_failed_line_search():
    # a loss whose reported gradient points uphill admits no descent step
    def liar(x):
        return float(x @ x), -2 * x

    r = optim.lbfgs_run(liar, np.ones(3), optim.OptConfig(lbfgs_iterations=5))
    assert r.status == "line_search_failed"
    np.testing.assert_array_equal(r.theta, np.ones(3))


def test_adam_minimizes_quadratic_and_trace_is_monotone_in_step():
    fn, xs = make_quadratic(1, 5)
    r = optim.adam_run(fn, np.zeros(5), optim.OptConfig(adam_iterations=4000, adam_lr=1e-2))
    assert np.linalg.norm(r.theta - xs) < 1e-6
    steps = [row[0] for row in r.trace]
    assert steps == list(range(len(steps)))


def test_trace_offsets_and_csv():
    fn, _ = make_quadratic(2, 4)
    cfg = optim.OptConfig(adam_iterations=3, lbfgs_iterations=2)
    a = optim.adam_run(fn, np.zeros(4), cfg)
    b = optim.lbfgs_run(fn, a.theta, cfg, step_offset=len(a.trace))
    assert [r[0] for r in a.trace + b.trace] == list(range(len(a.trace) + len(b.trace)))
    text = optim.loss_trace_csv(a.trace)
    assert text.splitlines()[0] == "step,loss,grad_norm" and len(text.splitlines()) == 4


def test_non_finite_loss_is_reported():
    from pdeopt.nnet import TrainingDivergenceError

    with pytest.raises(TrainingDivergenceError):
        optim.adam_run(lambda x: (float("inf"), np.zeros_like(x)), np.zeros(2), optim.OptConfig(adam_iterations=2))


def test_config_validation():
    with pytest.raises(ValueError):
        optim.OptConfig(c1=0.5, c2=0.1)
    with pytest.raises(ValueError):
        optim.OptConfig(adam_lr=0.0)


@pytest.mark.parametrize("scale", [1e-6, 1.0, 1e6])
def test_first_adam_step_follows_the_gradient_sign(scale):
    g0 = scale * np.array([3.0, -0.2, 5e-3, -7.0])

    def fn(x):
        return float(g0 @ x), g0

    r = optim.adam_run(fn, np.zeros(4), optim.OptConfig(adam_iterations=1, adam_lr=1e-3))
    assert np.array_equal(np.sign(r.theta), -np.sign(g0))
