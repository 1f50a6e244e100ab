import numpy as np
import pytest

from mmlab import nn, rng
from mmlab import training as tr

TOL = 1e-4


def to64(net):
    for _, layer in net.named_layers():
        layer.W = layer.W.astype(np.float64)
        layer.b = layer.b.astype(np.float64)
    return tr.params_of(net)


def instance(seed):
    gen = np.random.default_rng(seed)
    n = int(gen.integers(3, 12))
    d1, d2 = int(gen.integers(2, 7)), int(gen.integers(2, 7))
    k = int(gen.integers(2, 5))
    X1 = gen.standard_normal((n, d1))
    X2 = gen.standard_normal((n, d2))
    y = gen.integers(0, k, n)
    return gen, X1, X2, y, k


class TestLayers:
    def test_dense_shapes(self):
        layer = nn.Dense.init(3, 2, rng.seed_state(0))
        assert layer.W.shape == (2, 3) and layer.W.dtype == np.float32
        with pytest.raises(nn.ShapeError):
            layer.forward(np.zeros((4, 5), dtype=np.float32))

    def test_glorot_bounds(self):
        layer = nn.Dense.init(300, 100, rng.seed_state(1))
        limit = np.sqrt(6 / 400)
        assert np.abs(layer.W).max() <= limit
        assert np.abs(layer.W).max() > 0.95 * limit
        assert not layer.b.any()

    def test_init_is_seeded(self):
        a = nn.Dense.init(5, 4, rng.seed_state(3))
        b = nn.Dense.init(5, 4, rng.seed_state(3))
        assert np.array_equal(a.W, b.W)

    def test_relu_zero_subgradient(self):
        r = nn.ReLU()
        r.forward(np.array([[-1.0, 0.0, 2.0]]))
        assert r.backward(np.ones((1, 3))).tolist() == [[0.0, 0.0, 1.0]]

    def test_relu_functions(self):
        X = np.array([[-1.0, 0.0, 3.0]])
        assert nn.relu_forward(X).tolist() == [[0.0, 0.0, 3.0]]
        assert nn.relu_backward(X, np.ones_like(X)).tolist() == [[0.0, 0.0, 1.0]]

    def test_affine_helpers(self):
        layer = nn.Dense(np.eye(2), np.array([1.0, -1.0]))
        out = nn.affine_forward(layer, np.array([[2.0, 3.0]]))
        assert out.tolist() == [[3.0, 2.0]]
        gx, gW, gb = nn.affine_backward(layer, np.array([[1.0, 0.0]]))
        assert gx.tolist() == [[1.0, 0.0]] and gb.tolist() == [1.0, 0.0]
        assert gW.tolist() == [[2.0, 3.0], [0.0, 0.0]]


class TestLosses:
    def test_uniform_logits_loss(self):
        loss, _ = nn.softmax_xent(np.zeros((4, 3)), np.array([0, 1, 2, 0]))
        assert loss == pytest.approx(np.log(3))

    def test_xent_gradient_rows_sum_to_zero(self):
        _, g = nn.softmax_xent(np.random.default_rng(0).standard_normal((5, 4)), np.arange(5) % 4)
        assert np.allclose(g.sum(axis=1), 0)

    def test_xent_stable_for_large_logits(self):
        loss, g = nn.softmax_xent(np.array([[1000.0, 0.0]]), np.array([0]))
        assert loss == pytest.approx(0.0) and np.isfinite(g).all()

    def test_xent_label_range(self):
        with pytest.raises(ValueError):
            nn.softmax_xent(np.zeros((2, 2)), np.array([0, 2]))

    def test_mse(self):
        loss, g = nn.mse(np.array([[1.0, 3.0]]), np.array([[0.0, 1.0]]))
        assert loss == pytest.approx(2.5)
        assert g.tolist() == [[1.0, 2.0]]

    def test_mse_shape(self):
        with pytest.raises(nn.ShapeError):
            nn.mse(np.zeros((2, 2)), np.zeros((2, 3)))

    def test_softmax_rows(self):
        p = nn.softmax(np.array([[1.0, 2.0, 3.0]]))
        assert p.sum() == pytest.approx(1.0) and np.all(np.diff(p) > 0)

    def test_sgd_step_in_place(self):
        p = np.array([1.0, 2.0])
        nn.sgd_step([p], [np.array([1.0, -1.0])], 0.5)
        assert p.tolist() == [0.5, 2.5]

    def test_sgd_mismatch(self):
        with pytest.raises(nn.ShapeError):
            nn.sgd_step([np.zeros(2)], [np.zeros(3)], 0.1)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            nn.TrainConfig(lr=0)
        with pytest.raises(ValueError):
            nn.TrainConfig(batch="mini")


class TestGradCheck:
    """Central differences on float64 shadows of every network and loss."""

    def check(self, net, closure):
        params = to64(net)
        report = nn.grad_check(closure, params, TOL, max_coords=48, h=1e-5, relu_masks=net.relu_masks)
        assert report.ok(TOL), report
        assert report.n_checked > 0

    @pytest.mark.parametrize("seed", range(50))
    def test_unimodal(self, seed):
        _, X1, _, y, k = instance(seed)
        net = tr.UniModalNet.create(X1.shape[1], k, 1, seed, hidden=5)

        def closure():
            out = net.forward(X1)
            loss, g = nn.softmax_xent(out["logits"], y)
            net.backward({"logits": g})
            return loss, tr.grads_of(net)

        self.check(net, closure)

    @pytest.mark.parametrize("seed", range(50))
    def test_fusion_mlp_head(self, seed):
        _, X1, X2, y, k = instance(seed)
        net = tr.LateFusionNet.create(X1.shape[1], X2.shape[1], k, seed, head="mlp", hidden=4, mlp_hidden=6)

        def closure():
            out = net.forward(X1, X2)
            loss, g = nn.softmax_xent(out["logits"], y)
            net.backward({"logits": g})
            return loss, tr.grads_of(net)

        self.check(net, closure)

    @pytest.mark.parametrize("seed", range(50))
    def test_umt_loss_linear_head(self, seed):
        gen, X1, X2, y, k = instance(seed)
        net = tr.LateFusionNet.create(X1.shape[1], X2.shape[1], k, seed, head="linear", hidden=4)
        t1 = np.abs(gen.standard_normal((len(y), 4)))
        t2 = np.abs(gen.standard_normal((len(y), 4)))
        lam = float(gen.uniform(0.1, 5))

        def closure():
            out = net.forward(X1, X2)
            ce, g = nn.softmax_xent(out["logits"], y)
            d1, g1 = nn.mse(out["f1"], t1)
            d2, g2 = nn.mse(out["f2"], t2)
            net.backward({"logits": g, "f1": lam * g1, "f2": lam * g2})
            return ce + lam * (d1 + d2), tr.grads_of(net)

        self.check(net, closure)

    @pytest.mark.parametrize("seed", range(50))
    def test_aux_ce_with_dropout(self, seed):
        _, X1, X2, y, k = instance(seed)
        net = tr.LateFusionNet.create(X1.shape[1], X2.shape[1], k, seed, head="mlp", hidden=4, mlp_hidden=5, aux=True)
        keep = [(1, 1), (0, 1), (1, 0)][seed % 3]

        def closure():
            out = net.forward(X1, X2, keep=keep)
            ce, g = nn.softmax_xent(out["logits"], y)
            c1, g1 = nn.softmax_xent(out["aux1"], y)
            c2, g2 = nn.softmax_xent(out["aux2"], y)
            net.backward({"logits": g, "aux1": g1, "aux2": g2})
            return ce + c1 + c2, tr.grads_of(net)

        self.check(net, closure)

    @pytest.mark.parametrize("seed", range(50))
    def test_early_fusion(self, seed):
        _, X1, X2, y, k = instance(seed)
        X = np.concatenate([X1, X2], axis=1)
        net = tr.EarlyFusionNet.create(X.shape[1], k, seed=seed, hidden=6)

        def closure():
            out = net.forward(X)
            loss, g = nn.softmax_xent(out["logits"], y)
            net.backward({"logits": g})
            return loss, tr.grads_of(net)

        self.check(net, closure)

    def test_detects_wrong_gradient(self):
        p = [np.array([1.0, 2.0])]

        def closure():
            return float(np.sum(p[0] ** 2)), [3 * p[0]]

        assert not nn.grad_check(closure, p, TOL).ok(TOL)

    def test_kinks_skipped(self):
        x = [np.array([0.0, 1.0])]
        mask = []

        def closure():
            mask[:] = [x[0] > 0]
            return float(np.maximum(x[0], 0).sum()), [(x[0] > 0).astype(float)]

        report = nn.grad_check(closure, x, TOL, relu_masks=lambda: mask)
        assert report.n_skipped_kinks == 1 and report.ok(TOL)


class TestSerialization:
    def test_array_round_trip(self):
        a = np.random.default_rng(0).standard_normal((3, 4)).astype(np.float32)
        assert np.array_equal(nn.decode_array(nn.encode_array(a)), a)
