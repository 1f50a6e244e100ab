import json

import numpy as np
import pytest

from mmlab import nn
from mmlab import training as tr
from mmlab.synthgen import GenConfig, SplitSpec, SyntheticDataset


def cfg(iters=200, seed=0, **kw):
    return nn.TrainConfig(max_iters=iters, seed=seed, **kw)


@pytest.fixture(scope="module")
def alpha_uni(small_alpha):
    ds, sp = small_alpha
    return tr.train_unimodal(ds, sp, 1, cfg(300)), tr.train_unimodal(ds, sp, 2, cfg(300))


class TestUnimodal:
    def test_alpha_learns(self, alpha_uni):
        # 320 training rows in 8 latent dims; the full-size check is in acceptance
        m1, m2 = alpha_uni
        assert m1.metrics["test_acc"] >= 0.9 and m2.metrics["test_acc"] >= 0.9

    def test_early_stop(self, alpha_uni):
        m1, _ = alpha_uni
        assert m1.metrics["iterations"] < 300
        assert m1.history["train_acc"][-1] == 1.0

    def test_history_sampling(self, alpha_uni):
        iters = alpha_uni[0].history["iter"]
        assert iters[:3] == [0, 10, 20]

    def test_bad_modality(self, small_alpha):
        with pytest.raises(ValueError):
            tr.train_unimodal(*small_alpha, 3)

    def test_deterministic(self, small_alpha):
        a = tr.train_unimodal(*small_alpha, 1, cfg(20, seed=4))
        b = tr.train_unimodal(*small_alpha, 1, cfg(20, seed=4))
        c = tr.train_unimodal(*small_alpha, 1, cfg(20, seed=5))
        assert a.digest() == b.digest() != c.digest()

    def test_split_size_mismatch(self, small_alpha):
        ds, _ = small_alpha
        with pytest.raises(ValueError):
            tr.train_unimodal(ds, SplitSpec(np.arange(5), 50), 1, cfg(5))


class TestFusion:
    def test_naive_alpha(self, small_alpha):
        b = tr.train_naive_fusion(*small_alpha, cfg=cfg(300))
        assert b.metrics["test_acc"] >= 0.95
        assert b.features(small_alpha[0].X1, 1).shape[1] == tr.FUSION_ENCODER_HIDDEN

    def test_linear_head_shape(self, small_alpha):
        b = tr.train_naive_fusion(*small_alpha, head="linear", cfg=cfg(5))
        assert len(b.net.head_layers) == 1
        assert b.net.head_layers[0].n_in == 2 * tr.FUSION_ENCODER_HIDDEN

    def test_early_fusion(self, small_beta):
        b = tr.train_early_fusion(*small_beta, cfg=cfg(5))
        assert b.kind == "early" and b.net.encoder.n_out == tr.EARLY_FUSION_HIDDEN
        with pytest.raises(KeyError):
            b.features(small_beta[0].X1, 1)

    def test_unknown_tap(self, small_alpha):
        b = tr.train_naive_fusion(*small_alpha, cfg=cfg(2))
        with pytest.raises(KeyError):
            b.features(small_alpha[0].X1, 3)

    def test_unimodal_tap_mismatch(self, alpha_uni, small_alpha):
        with pytest.raises(KeyError):
            alpha_uni[0].features(small_alpha[0].X2, 2)


class TestUMT:
    def test_zero_distill_is_naive(self, small_beta):
        ds, sp = small_beta
        t1, t2 = tr.train_teachers(ds, sp, cfg(30))
        naive = tr.train_naive_fusion(ds, sp, cfg=cfg(40, seed=2))
        umt = tr.train_umt(ds, sp, t1, t2, tr.UMTConfig(1.0, 0.0), cfg(40, seed=2))
        assert umt.digest() == naive.digest()
        assert umt.history["loss"] == naive.history["loss"]

    def test_teachers_use_distinct_seeds(self, small_beta):
        t1, t2 = tr.train_teachers(*small_beta, cfg(3))
        assert t1.config["train"]["seed"] != t2.config["train"]["seed"]
        assert t1.net.modality == 1 and t2.net.modality == 2

    def test_pure_distillation_converges(self, datasets):
        ds, sp = datasets("alpha")
        t1, t2 = tr.train_teachers(ds, sp, cfg(300))
        umt = tr.train_umt(ds, sp, t1, t2, tr.UMTConfig(0.0, 50.0), cfg(400, early_stop_patience=0))
        parts = umt.history["components"]
        first = parts[0]["distill1"] + parts[0]["distill2"]
        last = parts[-1]["distill1"] + parts[-1]["distill2"]
        assert last < 0.01 * first

    def test_small_lr_loss_monotone(self, small_beta):
        ds, sp = small_beta
        t1, t2 = tr.train_teachers(ds, sp, cfg(50))
        umt = tr.train_umt(ds, sp, t1, t2, cfg=cfg(20, lr=1e-4, log_every=1, early_stop_patience=0))
        loss = np.array(umt.history["loss"])
        assert np.all(np.diff(loss) <= 1e-6 * loss[:-1])

    def test_width_mismatch(self, small_beta):
        ds, sp = small_beta
        t1, t2 = tr.train_teachers(ds, sp, cfg(2), hidden=7)
        with pytest.raises(nn.ShapeError):
            tr.train_umt(ds, sp, t1, t2, cfg=cfg(2))

    def test_teacher_order(self, small_beta):
        t1, t2 = tr.train_teachers(*small_beta, cfg(2))
        with pytest.raises(ValueError):
            tr.train_umt(*small_beta, t2, t1, cfg=cfg(2))

    def test_negative_lambda(self):
        with pytest.raises(ValueError):
            tr.UMTConfig(1.0, -1.0)


class TestUME:
    def test_identical_models(self, alpha_uni, small_alpha):
        ds, _ = small_alpha
        m1, _ = alpha_uni
        assert np.array_equal(tr.ume_predict(m1, m1, ds.X1, ds.X2), m1.predict(ds.X1))

    def test_one_sided_weights(self, alpha_uni, small_alpha):
        ds, _ = small_alpha
        m1, m2 = alpha_uni
        assert np.array_equal(tr.ume_predict(m1, m2, ds.X1, ds.X2, (1, 0)), m1.predict(ds.X1))

    def test_weight_scale_invariance(self, alpha_uni, small_alpha):
        ds, _ = small_alpha
        m1, m2 = alpha_uni
        a = tr.ume_predict(m1, m2, ds.X1, ds.X2, (0.3, 0.7))
        b = tr.ume_predict(m1, m2, ds.X1, ds.X2, (3, 7))
        assert np.array_equal(a, b)

    def test_alpha_accuracy(self, alpha_uni, small_alpha):
        ds, sp = small_alpha
        idx = sp.test_indices
        pred = tr.ume_predict(*alpha_uni, ds.X1[idx], ds.X2[idx])
        assert np.mean(pred == ds.labels[idx]) >= 0.95

    @pytest.mark.parametrize("w", [(0, 0), (-1, 2), (1, 2, 3)])
    def test_bad_weights(self, alpha_uni, small_alpha, w):
        ds, _ = small_alpha
        with pytest.raises(ValueError):
            tr.ume_predict(*alpha_uni, ds.X1, ds.X2, w)


class TestAuxAndDropout:
    def test_aux_components_sum(self, small_alpha):
        b = tr.train_aux_ce(*small_alpha, cfg=cfg(30))
        for total, parts in zip(b.history["loss"], b.history["components"]):
            assert abs(total - sum(parts.values())) < 1e-6

    def test_zero_drop_is_naive(self, small_alpha):
        a = tr.train_modality_dropout(*small_alpha, drop_prob=0.0, cfg=cfg(30, seed=1))
        b = tr.train_naive_fusion(*small_alpha, cfg=cfg(30, seed=1))
        assert a.digest() == b.digest()

    def test_drop_frequency(self):
        keep = tr.dropout_schedule(0, 100_000, 1 / 3)
        freq = (~keep).mean(axis=0)
        assert np.all(np.abs(freq - 1 / 6) < 0.01)
        assert not np.any((~keep).all(axis=1))

    def test_independent_drops(self):
        keep = tr.dropout_schedule(0, 100_000, 1 / 3, independent=True)
        assert np.all(np.abs((~keep).mean(axis=0) - 1 / 3) < 0.01)
        assert (~keep).all(axis=1).any()

    @pytest.mark.parametrize("p", [-0.1, 1.0])
    def test_bad_drop_prob(self, p):
        with pytest.raises(ValueError):
            tr.dropout_schedule(0, 10, p)

    def test_dropped_block_equals_zero_input(self, small_alpha):
        ds, _ = small_alpha
        net = tr.LateFusionNet.create(ds.config.d1, ds.config.d2, 2, 0)
        dropped = net.forward(ds.X1, ds.X2, keep=(0, 1))["logits"]
        # zero X1 with a zero bias gives a zero feature block
        net.enc1.b[:] = 0
        zeroed = net.forward(np.zeros_like(ds.X1), ds.X2)["logits"]
        assert np.allclose(dropped, zeroed)

    def test_dropout_records_counts(self, small_alpha):
        b = tr.train_modality_dropout(*small_alpha, cfg=cfg(60, early_stop_patience=0))
        assert sum(b.config["drop_counts"]) > 0


class TestSplitClassifier:
    def test_reconstruction(self, small_alpha):
        ds, _ = small_alpha
        b = tr.train_naive_fusion(*small_alpha, head="linear", cfg=cfg(50))
        c1, c2 = tr.split_mm_classifier(b)
        f1, f2 = b.features(ds.X1, 1), b.features(ds.X2, 2)
        full = b.logits(ds.X1, ds.X2)
        recon = tr.linear_logits(c1, f1) + tr.linear_logits(c2, f2) - b.net.head_layers[0].b
        assert np.abs(recon - full).max() < 1e-5

    def test_inactive_block(self):
        gen = np.random.default_rng(0)
        head = nn.Dense(gen.standard_normal((3, 6)), gen.standard_normal(3))
        F = np.concatenate([gen.standard_normal((20, 3)), np.zeros((20, 3))], axis=1)
        c1, _ = tr.split_mm_classifier(head, (3, 3))
        assert np.array_equal(
            np.argmax(tr.linear_logits(c1, F[:, :3]), 1), np.argmax(tr.linear_logits(head, F), 1)
        )

    def test_mlp_head_rejected(self, small_alpha):
        b = tr.train_naive_fusion(*small_alpha, cfg=cfg(2))
        with pytest.raises(ValueError):
            tr.split_mm_classifier(b)

    def test_block_sizes(self):
        with pytest.raises(nn.ShapeError):
            tr.split_mm_classifier(nn.Dense(np.zeros((2, 4)), np.zeros(2)), (1, 2))


class TestDecision:
    def test_tie_goes_to_ume(self, small_alpha):
        ds, sp = small_alpha
        res = tr.decision_trick(ds, sp, cfg(300))
        if res.mm_clf_acc == res.avg_pred_acc:
            assert res.recommendation == "UME"
        assert set(res.to_dict()) >= {"recommendation", "mm_clf_acc", "avg_pred_acc"}

    def test_beta_recommends_umt(self, datasets):
        ds, sp = datasets("beta")
        res = tr.decision_trick(ds, sp, cfg(300))
        assert abs(res.avg_pred_acc - 0.5) < 0.05
        assert res.mm_clf_acc > res.avg_pred_acc
        assert res.recommendation == "UMT"

    def test_single_class_warns(self, small_alpha):
        ds, sp = small_alpha
        one = SyntheticDataset(ds.X1, ds.X2, np.zeros_like(ds.labels), ds.config)
        res = tr.decision_trick(one, sp, cfg(20))
        assert res.warning and res.recommendation == "UME"


class TestBundle:
    def test_round_trip(self, tmp_path, alpha_uni, small_alpha):
        ds, _ = small_alpha
        for b in (alpha_uni[0], tr.train_naive_fusion(*small_alpha, head="linear", cfg=cfg(3))):
            b.save(tmp_path / "m.json")
            back = tr.ModelBundle.load(tmp_path / "m.json")
            assert back.digest() == b.digest()
            assert np.array_equal(back.predict(ds.X1, ds.X2), b.predict(ds.X1, ds.X2))

    def test_early_round_trip(self, tmp_path, small_beta):
        b = tr.train_early_fusion(*small_beta, cfg=cfg(3))
        b.save(tmp_path / "e.json")
        assert tr.ModelBundle.load(tmp_path / "e.json").digest() == b.digest()

    def test_tampered_digest(self, tmp_path, alpha_uni):
        alpha_uni[0].save(tmp_path / "m.json")
        d = json.loads((tmp_path / "m.json").read_text())
        d["digest"] = "0" * 64
        with pytest.raises(ValueError):
            tr.ModelBundle.from_dict(d)

    def test_frozen_copy_independent(self, alpha_uni):
        copy = alpha_uni[0].frozen_copy()
        copy.net.encoder.W[0, 0] += 1
        assert copy.digest() != alpha_uni[0].digest()
