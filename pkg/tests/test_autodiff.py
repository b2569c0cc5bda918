import numpy as np
import pytest

from oracles import central_diff, naive_conv1d_same, rel_err
from pdet import autodiff_nn as nn
from pdet.errors import GraphConsumed, InputTooShort, ShapeMismatch


def gradcheck(build, arrays, rng, h=1e-4):
    """Max relative error of backward() against central differences, over every input array.

    ``build`` maps a list of Params to an output Tensor. The scalar checked
    is ``sum(r * output)`` for a fixed random ``r``.
    """
    params = [nn.Param(a.astype(np.float64), f"p{i}") for i, a in enumerate(arrays)]
    out = build(params)
    r = rng.normal(size=out.shape)
    nn.backward(out, r)
    worst = 0.0
    for i, p in enumerate(params):
        def f(v, i=i):
            vals = [q.data.copy() for q in params]
            vals[i] = v
            fresh = [nn.Tensor(a) for a in vals]
            return float(np.sum(r * build(fresh).data))

        worst = max(worst, rel_err(p.grad, central_diff(f, p.data.copy(), h)))
    return worst


def t3(a):
    return nn.Tensor(np.asarray(a, dtype=np.float64).reshape(1, 1, -1))


class TestConv:
    def test_identity_kernel(self, rng):
        x = rng.normal(size=(1, 1, 9))
        y = nn.conv1d_same(nn.Tensor(x), nn.Tensor([[[0.0, 1.0, 0.0]]]), nn.Tensor([0.0]))
        np.testing.assert_array_equal(y.data, x)

    def test_box_kernel(self):
        y = nn.conv1d_same(t3([1, 2, 3]), nn.Tensor([[[1.0, 1.0, 1.0]]]), nn.Tensor([0.0]))
        np.testing.assert_array_equal(y.data.ravel(), [3, 6, 5])

    def test_cross_correlation_orientation(self):
        y = nn.conv1d_same(t3([0, 1, 0, 0]), nn.Tensor([[[1.0, 2.0, 3.0]]]), nn.Tensor([0.0]))
        np.testing.assert_array_equal(y.data.ravel(), [3, 2, 1, 0])

    @pytest.mark.parametrize("k", [1, 3, 5])
    def test_matches_nested_loops(self, k, rng):
        x = rng.normal(size=(2, 3, 11))
        w = rng.normal(size=(4, 3, k))
        b = rng.normal(size=4)
        y = nn.conv1d_same(nn.Tensor(x), nn.Tensor(w), nn.Tensor(b))
        np.testing.assert_allclose(y.data, naive_conv1d_same(x, w, b), atol=1e-12)

    def test_gradcheck(self, rng):
        arrays = [rng.normal(size=(2, 2, 16)), rng.normal(size=(3, 2, 3)), rng.normal(size=3)]
        assert gradcheck(lambda p: nn.conv1d_same(*p), arrays, rng) <= 1e-4

    def test_shape_errors(self, rng):
        x = nn.Tensor(rng.normal(size=(1, 2, 8)))
        with pytest.raises(ShapeMismatch):
            nn.conv1d_same(x, nn.Tensor(np.zeros((1, 3, 3))), nn.Tensor(np.zeros(1)))
        with pytest.raises(ShapeMismatch):
            nn.conv1d_same(x, nn.Tensor(np.zeros((1, 2, 2))), nn.Tensor(np.zeros(1)))


class TestBatchNorm:
    def test_train_statistics(self, rng):
        x = rng.normal(3.0, 5.0, size=(4, 3, 32))
        st = nn.BatchNormState.fresh(3)
        y = nn.batchnorm1d(nn.Tensor(x), nn.Tensor(np.ones(3)), nn.Tensor(np.zeros(3)), st).data
        assert np.abs(y.mean(axis=(0, 2))).max() <= 1e-6
        assert np.abs(y.var(axis=(0, 2)) - 1).max() <= 1e-4

    def test_running_update(self, rng):
        x = rng.normal(2.0, 3.0, size=(4, 1, 8))
        st = nn.BatchNormState.fresh(1)
        nn.batchnorm1d(nn.Tensor(x), nn.Tensor([1.0]), nn.Tensor([0.0]), st)
        m = x.size
        assert st.running_mean[0] == pytest.approx(0.1 * x.mean())
        assert st.running_var[0] == pytest.approx(0.9 + 0.1 * x.var() * m / (m - 1))

    def test_eval_identity(self, rng):
        x = rng.normal(size=(2, 3, 10))
        st = nn.BatchNormState.fresh(3)
        y = nn.batchnorm1d(nn.Tensor(x), nn.Tensor(np.ones(3)), nn.Tensor(np.zeros(3)), st, mode="eval")
        np.testing.assert_allclose(y.data, x, atol=1e-12)
        np.testing.assert_array_equal(st.running_mean, 0)

    def test_constant_channel_is_finite(self):
        x = np.ones((2, 1, 8))
        st = nn.BatchNormState.fresh(1)
        p = [nn.Param(x, "x"), nn.Param(np.ones(1), "g"), nn.Param(np.zeros(1), "b")]
        y = nn.batchnorm1d(p[0], p[1], p[2], st)
        nn.backward(y, np.ones_like(x))
        assert np.all(np.isfinite(y.data)) and np.all(y.data == 0)
        assert all(np.all(np.isfinite(q.grad)) for q in p)

    def test_degenerate(self):
        with pytest.raises(nn.DegenerateBatch):
            nn.batchnorm1d(nn.Tensor(np.ones((1, 1, 1))), nn.Tensor([1.0]), nn.Tensor([0.0]), nn.BatchNormState.fresh(1))

    @pytest.mark.parametrize("mode", ["train", "eval"])
    def test_gradcheck(self, mode, rng):
        arrays = [rng.normal(size=(3, 2, 8)), rng.uniform(0.5, 2, size=2), rng.normal(size=2)]
        st = nn.BatchNormState(rng.normal(size=2), rng.uniform(0.5, 2, size=2))

        def build(p):
            s = nn.BatchNormState(st.running_mean.copy(), st.running_var.copy())
            return nn.batchnorm1d(p[0], p[1], p[2], s, mode=mode)

        assert gradcheck(build, arrays, rng) <= 1e-4


class TestActivations:
    def test_relu(self):
        np.testing.assert_array_equal(nn.relu(t3([-1, 0, 2])).data.ravel(), [0, 0, 2])

    def test_relu_kink_gradient_is_zero(self):
        p = nn.Param(np.zeros((1, 1, 1)), "x")
        nn.backward(nn.relu(p), np.ones((1, 1, 1)))
        assert p.grad.item() == 0.0

    def test_tanh(self):
        assert nn.tanh(t3([0.0])).data.item() == 0.0

    def test_gradcheck(self, rng):
        x = rng.normal(size=(2, 3, 10))
        x[np.abs(x) < 0.05] = 0.5  # stay off the relu kink
        assert gradcheck(lambda p: nn.relu(p[0]), [x], rng) <= 1e-6
        assert gradcheck(lambda p: nn.tanh(p[0]), [x], rng, h=1e-5) <= 1e-6


class TestPoolUpsample:
    def test_pool(self):
        np.testing.assert_array_equal(nn.avgpool1d(t3([1, 3, 5, 7]), 2).data.ravel(), [2, 6])

    def test_pool_constant(self):
        np.testing.assert_array_equal(nn.avgpool1d(t3(np.full(12, 4.0)), 4).data, 4.0)

    def test_pool_drops_tail(self):
        assert nn.avgpool1d(t3([1, 2, 3, 4, 5]), 2).shape == (1, 1, 2)

    def test_pool_too_short(self):
        with pytest.raises(InputTooShort):
            nn.avgpool1d(t3([1.0]), 2)

    def test_upsample(self):
        np.testing.assert_array_equal(nn.upsample_nearest(t3([1, 2]), 2).data.ravel(), [1, 1, 2, 2])

    def test_left_inverse(self, rng):
        x = rng.normal(size=(2, 3, 7))
        np.testing.assert_array_equal(nn.avgpool1d(nn.upsample_nearest(nn.Tensor(x), 2), 2).data, x)

    def test_gradcheck(self, rng):
        assert gradcheck(lambda p: nn.avgpool1d(p[0], 2), [rng.normal(size=(2, 2, 9))], rng) <= 1e-6
        assert gradcheck(lambda p: nn.upsample_nearest(p[0], 2), [rng.normal(size=(2, 2, 5))], rng) <= 1e-6


class TestConcat:
    def test_shape(self, rng):
        y = nn.concat_channels(nn.Tensor(rng.normal(size=(1, 2, 6))), nn.Tensor(rng.normal(size=(1, 3, 6))))
        assert y.shape == (1, 5, 6)

    def test_empty_operand(self, rng):
        x = rng.normal(size=(2, 2, 6))
        np.testing.assert_array_equal(nn.concat_channels(nn.Tensor(x), nn.Tensor(np.zeros((2, 0, 6)))).data, x)

    def test_gradient_split(self, rng):
        a, b = nn.Param(rng.normal(size=(1, 2, 4)), "a"), nn.Param(rng.normal(size=(1, 1, 4)), "b")
        nn.backward(nn.concat_channels(a, b), np.ones((1, 3, 4)))
        np.testing.assert_array_equal(a.grad, 1)
        np.testing.assert_array_equal(b.grad, 1)

    def test_mismatch(self, rng):
        with pytest.raises(ShapeMismatch):
            nn.concat_channels(nn.Tensor(np.zeros((1, 1, 4))), nn.Tensor(np.zeros((1, 1, 5))))


def _small_graph(rng):
    x = nn.Tensor(rng.normal(size=(2, 1, 8)))
    w = nn.Param(rng.normal(size=(2, 1, 3)), "w")
    b = nn.Param(rng.normal(size=2), "b")
    return nn.tanh(nn.relu(nn.conv1d_same(x, w, b))), [w, b]


class TestBackward:
    def test_zero_grad_output(self, rng):
        out, params = _small_graph(rng)
        nn.backward(out, np.zeros(out.shape))
        assert all(not p.grad.any() for p in params)

    def test_linearity(self):
        out1, p1 = _small_graph(np.random.default_rng(3))
        out2, p2 = _small_graph(np.random.default_rng(3))
        g = np.random.default_rng(4).normal(size=out1.shape)
        nn.backward(out1, g)
        nn.backward(out2, 2 * g)
        for a, b in zip(p1, p2):
            np.testing.assert_allclose(b.grad, 2 * a.grad, rtol=1e-12)

    def test_accumulates(self, rng):
        x = rng.normal(size=(1, 1, 6))
        w = nn.Param(rng.normal(size=(1, 1, 3)), "w")
        b = nn.Param(np.zeros(1), "b")
        g = np.ones((1, 1, 6))
        nn.backward(nn.conv1d_same(x, w, b), g)
        first = w.grad.copy()
        nn.backward(nn.conv1d_same(x, w, b), g)
        np.testing.assert_allclose(w.grad, 2 * first)
        nn.zero_grad([w, b])
        assert not w.grad.any()

    def test_graph_consumed(self, rng):
        out, _ = _small_graph(rng)
        nn.backward(out, np.ones(out.shape))
        with pytest.raises(GraphConsumed):
            nn.backward(out, np.ones(out.shape))

    def test_shared_node(self, rng):
        # y = a + a via concat then sum of both halves -> grad 2
        a = nn.Param(rng.normal(size=(1, 1, 4)), "a")
        h = nn.relu(a)
        out = nn.concat_channels(h, h)
        nn.backward(out, np.ones((1, 2, 4)))
        np.testing.assert_array_equal(a.grad, 2.0 * (a.data > 0))

    def test_deterministic_forward(self, rng):
        out1, _ = _small_graph(np.random.default_rng(9))
        out2, _ = _small_graph(np.random.default_rng(9))
        np.testing.assert_array_equal(out1.data, out2.data)


class TestAdam:
    def test_zero_gradient(self):
        p = nn.Param(np.array([1.0, -2.0]), "p")
        st = nn.AdamState()
        for _ in range(3):
            nn.adam_step([p], st)
        np.testing.assert_array_equal(p.data, [1.0, -2.0])

    def test_first_step(self):
        p = nn.Param(np.array([0.0]), "p")
        p.grad = np.array([1.0])
        nn.adam_step([p], nn.AdamState(lr=1e-3))
        assert p.data[0] == pytest.approx(-0.001 / (1 + 1e-8), rel=1e-12)
        assert p.data[0] == pytest.approx(-0.000999999, abs=1e-9)

    def test_quadratic(self):
        p = nn.Param(np.array([1.0]), "theta")
        st = nn.AdamState(lr=0.01)
        for step in range(1, 5001):
            p.grad = 2 * p.data
            nn.adam_step([p], st)
            if abs(p.data[0]) <= 1e-3:
                break
        assert abs(p.data[0]) <= 1e-3, (step, p.data)
