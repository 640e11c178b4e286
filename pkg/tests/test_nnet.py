import numpy as np
import pytest

from pdeopt import nnet
from pdeopt.field import SeededRng


def _fd_jets(net, ans, x, e=1e-4):
    d = x.shape[1]
    f0 = nnet.eval_jets(net, ans, x, 0).value
    g, h = np.empty_like(x), np.empty_like(x)
    for a in range(d):
        s = np.zeros(d)
        s[a] = e
        fp = nnet.eval_jets(net, ans, x + s, 0).value
        fm = nnet.eval_jets(net, ans, x - s, 0).value
        g[:, a] = (fp - fm) / (2 * e)
        h[:, a] = (fp - 2 * f0 + fm) / e**2
    return g, h


@pytest.mark.parametrize("d,ans", [(1, nnet.IDENTITY), (1, nnet.interval_bubble()), (2, nnet.scaled(0.05)),
                                   (3, nnet.IDENTITY)])
def test_jets_match_finite_differences(d, ans):
    rng = np.random.default_rng(d)
    net = nnet.init((d, 8, 8, 1), rng)
    x = rng.uniform(0.05, 0.95, (11, d))
    jet = nnet.eval_jets(net, ans, x, 2)
    g, h = _fd_jets(net, ans, x)
    scale_g = max(np.abs(g).max(), 1e-3)
    scale_h = max(np.abs(h).max(), 1e-2)
    assert np.abs(jet.grad - g).max() / scale_g <= 1e-5
    assert np.abs(jet.diag2 - h).max() / scale_h <= 1e-5


def test_jet_values_match_plain_forward():
    rng = np.random.default_rng(3)
    net = nnet.init((2, 5, 1), rng)
    x = rng.random((6, 2))
    np.testing.assert_allclose(nnet.eval_jets(net, nnet.IDENTITY, x, 2).value, nnet.forward(net, x).ravel(),
                               rtol=1e-14, atol=1e-14)


def test_diag_axes_select_second_derivatives():
    rng = np.random.default_rng(4)
    net = nnet.init((3, 6, 1), rng)
    x = rng.random((5, 3))
    full = nnet.eval_jets(net, nnet.IDENTITY, x, 2)
    part = nnet.eval_jets(net, nnet.IDENTITY, x, 2, (0, 1))
    np.testing.assert_allclose(part.diag2, full.diag2[:, :2], rtol=1e-13, atol=1e-13)
    assert part.d2(1) is not None and part.diag_axes == (0, 1)


def test_bubble_ansatz_vanishes_at_end_points():
    net = nnet.init((1, 7, 1), np.random.default_rng(0))
    v = nnet.eval_jets(net, nnet.interval_bubble(), np.array([[0.0], [1.0]]), 0).value
    np.testing.assert_allclose(v, 0.0, atol=1e-15)


def _residual_loss(jets):
    """mean((y_xx + y_yy - y * y_x)^2) and its cotangents."""
    j = jets[0]
    r = j.diag2[:, 0] + j.diag2[:, 1] - j.value * j.grad[:, 0]
    n = r.size
    dg = np.zeros_like(j.grad)
    dg[:, 0] = -2 * r * j.value / n
    return float(np.mean(r**2)), [(-2 * r * j.grad[:, 0] / n, dg, np.stack([2 * r / n] * 2, axis=1))]


@pytest.mark.parametrize("ans", [nnet.IDENTITY, nnet.scaled(0.3)])
def test_parameter_gradient_through_second_derivatives(ans):
    rng = np.random.default_rng(9)
    net = nnet.init((2, 7, 7, 1), rng)
    x = rng.random((13, 2))
    req = [nnet.JetRequest(0, ans, x, 2)]
    _, grads = nnet.loss_grad([net], req, _residual_loss)
    theta = net.to_vector()
    e = 1e-6
    for _ in range(3):
        d = rng.standard_normal(theta.size)
        fp = nnet.loss_grad([nnet.MlpParams.from_vector(net.widths, theta + e * d)], req, _residual_loss)[0]
        fm = nnet.loss_grad([nnet.MlpParams.from_vector(net.widths, theta - e * d)], req, _residual_loss)[0]
        fd = (fp - fm) / (2 * e)
        assert abs(fd - grads[0] @ d) <= 1e-4 * abs(fd)


def test_non_finite_loss_raises_divergence():
    net = nnet.init((1, 3, 1), np.random.default_rng(0))
    req = [nnet.JetRequest(0, nnet.IDENTITY, np.array([[0.5]]), 0)]
    with pytest.raises(nnet.TrainingDivergenceError):
        nnet.loss_grad([net], req, lambda jets: (float("nan"), [(np.zeros(1), None, None)]))


def test_init_is_reproducible_and_bounded():
    a = nnet.init((4, 16, 1), SeededRng(5).generator("init", 0))
    b = nnet.init((4, 16, 1), SeededRng(5).generator("init", 0))
    assert np.array_equal(a.to_vector(), b.to_vector())
    assert np.abs(a.weights[0]).max() <= 0.5
    assert a.size == nnet.param_count((4, 16, 1)) == 4 * 16 + 16 + 16 + 1


def test_vector_round_trip_and_shape_check():
    net = nnet.init((2, 3, 1), np.random.default_rng(1))
    back = nnet.MlpParams.from_vector(net.widths, net.to_vector())
    assert np.array_equal(back.to_vector(), net.to_vector())
    with pytest.raises(ValueError):
        nnet.MlpParams.from_vector((2, 3, 1), np.zeros(5))


def test_checkpoint_round_trip(tmp_path):
    net = nnet.init((1, 4, 1), np.random.default_rng(2))
    nnet.save_checkpoint(tmp_path / "net.json", net, nnet.interval_bubble(), seed=7)
    back, ans, seed = nnet.load_checkpoint(tmp_path / "net.json")
    assert seed == 7 and ans.name == "x(x-1)"
    x = np.linspace(0, 1, 5)[:, None]
    np.testing.assert_array_equal(nnet.eval_jets(back, ans, x, 0).value,
                                  nnet.eval_jets(net, nnet.interval_bubble(), x, 0).value)
