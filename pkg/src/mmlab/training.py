"""Training strategies for the synthetic two-modality tasks.

Every strategy trains by full-batch SGD on the train rows of a split and
returns a :class:`ModelBundle`. Late-fusion networks expose the post-ReLU
output of each encoder (``f1``/``f2``) as taps; those are what UMT distills
into and what the probes read.
"""

from __future__ import annotations

import copy
import enum
import hashlib
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from mmlab import nn, rng
from mmlab.synthgen import SplitSpec, SyntheticDataset

logger = logging.getLogger(__name__)

UNI_HIDDEN = 100
FUSION_ENCODER_HIDDEN = 100
EARLY_FUSION_HIDDEN = 200
MLP_HEAD_HIDDEN = 200

# stream offsets so that init, dropout and teachers never share a stream
_DROPOUT_STREAM = 0x5DEECE66D
_TEACHER_STREAM = 0xA5A5A5A5


class Head(str, enum.Enum):
    LINEAR = "linear"
    MLP = "mlp"


# -- networks ----------------------------------------------------------------


class UniModalNet:
    """``Dense -> ReLU -> Dense`` on one modality."""

    kind = "unimodal"

    def __init__(self, encoder: nn.Dense, head: nn.Dense, modality: int):
        encoder.input_grad = False
        self.encoder = encoder
        self.head = head
        self.modality = modality
        self.relu = nn.ReLU()
        self.f = None

    @classmethod
    def create(cls, in_dim, n_classes, modality, seed, hidden=UNI_HIDDEN):
        state = rng.seed_state(seed)
        enc = nn.Dense.init(in_dim, hidden, state)
        head = nn.Dense.init(hidden, n_classes, state)
        return cls(enc, head, modality)

    def named_layers(self) -> list[tuple[str, nn.Dense]]:
        return [("encoder", self.encoder), ("head", self.head)]

    def features(self, X):
        return nn.relu_forward(X @ self.encoder.W.T + self.encoder.b)

    def forward(self, X):
        self.f = self.relu.forward(self.encoder.forward(X))
        return {"logits": self.head.forward(self.f), "f": self.f}

    def backward(self, grads):
        g = self.head.backward(grads["logits"])
        if grads.get("f") is not None:
            g = g + grads["f"]
        self.encoder.backward(self.relu.backward(g))

    def relu_masks(self):
        return [self.relu._mask]

    def predict_logits(self, X):
        f = self.features(X)
        return f @ self.head.W.T + self.head.b

    def arch(self) -> dict:
        return {"modality": self.modality}


class EarlyFusionNet(UniModalNet):
    """Two-layer MLP over the concatenated inputs ``[X1, X2]``.

    There is no per-modality feature tap; this is the plain multi-modal
    baseline, not a late-fusion model.
    """

    kind = "early"

    def __init__(self, encoder: nn.Dense, head: nn.Dense, modality: int = 0):
        super().__init__(encoder, head, 0)

    @classmethod
    def create(cls, in_dim, n_classes, modality=0, seed=0, hidden=EARLY_FUSION_HIDDEN):
        return super().create(in_dim, n_classes, 0, seed, hidden)

    def arch(self) -> dict:
        return {"inputs": "concat"}


class LateFusionNet:
    """Two per-modality encoders, concatenated, then a fusion head.

    With ``aux=True`` each encoder output also feeds its own linear
    classifier (used by the auxiliary-CE strategy).
    """

    kind = "fusion"

    def __init__(self, enc1, enc2, head_layers, head: Head, aux1=None, aux2=None):
        enc1.input_grad = enc2.input_grad = False
        self.enc1 = enc1
        self.enc2 = enc2
        self.head_layers = head_layers
        self.head = Head(head)
        self.aux1 = aux1
        self.aux2 = aux2
        self.relu1 = nn.ReLU()
        self.relu2 = nn.ReLU()
        self.head_relu = nn.ReLU()
        self._keep = (1.0, 1.0)

    @classmethod
    def create(
        cls,
        d1,
        d2,
        n_classes,
        seed,
        head=Head.MLP,
        hidden=FUSION_ENCODER_HIDDEN,
        mlp_hidden=MLP_HEAD_HIDDEN,
        aux=False,
    ):
        head = Head(head)
        state = rng.seed_state(seed)
        enc1 = nn.Dense.init(d1, hidden, state)
        enc2 = nn.Dense.init(d2, hidden, state)
        if head is Head.LINEAR:
            head_layers = [nn.Dense.init(2 * hidden, n_classes, state)]
        else:
            head_layers = [
                nn.Dense.init(2 * hidden, mlp_hidden, state),
                nn.Dense.init(mlp_hidden, n_classes, state),
            ]
        aux1 = nn.Dense.init(hidden, n_classes, state) if aux else None
        aux2 = nn.Dense.init(hidden, n_classes, state) if aux else None
        return cls(enc1, enc2, head_layers, head, aux1, aux2)

    @property
    def hidden(self) -> int:
        return self.enc1.n_out

    def named_layers(self) -> list[tuple[str, nn.Dense]]:
        out = [("enc1", self.enc1), ("enc2", self.enc2)]
        out += [(f"head{i}", layer) for i, layer in enumerate(self.head_layers)]
        if self.aux1 is not None:
            out += [("aux1", self.aux1), ("aux2", self.aux2)]
        return out

    def encoder(self, modality: int) -> nn.Dense:
        return {1: self.enc1, 2: self.enc2}[modality]

    def features(self, X, modality: int):
        enc = self.encoder(modality)
        return nn.relu_forward(X @ enc.W.T + enc.b)

    def _head_forward(self, h):
        if self.head is Head.LINEAR:
            return self.head_layers[0].forward(h)
        a = self.head_relu.forward(self.head_layers[0].forward(h))
        return self.head_layers[1].forward(a)

    def _head_backward(self, g):
        if self.head is Head.LINEAR:
            return self.head_layers[0].backward(g)
        g = self.head_layers[1].backward(g)
        return self.head_layers[0].backward(self.head_relu.backward(g))

    def forward(self, X1, X2, keep=(1.0, 1.0)):
        """``keep`` zeroes a modality's feature block before fusion (dropout)."""
        self._keep = keep
        f1 = self.relu1.forward(self.enc1.forward(X1))
        f2 = self.relu2.forward(self.enc2.forward(X2))
        h1 = f1 if keep[0] else np.zeros_like(f1)
        h2 = f2 if keep[1] else np.zeros_like(f2)
        out = {"logits": self._head_forward(np.concatenate([h1, h2], axis=1)), "f1": f1, "f2": f2}
        if self.aux1 is not None:
            out["aux1"] = self.aux1.forward(f1)
            out["aux2"] = self.aux2.forward(f2)
        return out

    def backward(self, grads):
        gh = self._head_backward(grads["logits"])
        k = self.hidden
        g1 = gh[:, :k] if self._keep[0] else np.zeros_like(gh[:, :k])
        g2 = gh[:, k:] if self._keep[1] else np.zeros_like(gh[:, k:])
        if grads.get("aux1") is not None:
            g1 = g1 + self.aux1.backward(grads["aux1"])
            g2 = g2 + self.aux2.backward(grads["aux2"])
        if grads.get("f1") is not None:
            g1 = g1 + grads["f1"]
        if grads.get("f2") is not None:
            g2 = g2 + grads["f2"]
        self.enc1.backward(self.relu1.backward(g1))
        self.enc2.backward(self.relu2.backward(g2))

    def relu_masks(self):
        masks = [self.relu1._mask, self.relu2._mask]
        if self.head is Head.MLP:
            masks.append(self.head_relu._mask)
        return masks

    def predict_logits(self, X1, X2):
        h = np.concatenate([self.features(X1, 1), self.features(X2, 2)], axis=1)
        for i, layer in enumerate(self.head_layers):
            h = h @ layer.W.T + layer.b
            if i < len(self.head_layers) - 1:
                h = nn.relu_forward(h)
        return h

    def arch(self) -> dict:
        return {"head": self.head.value, "aux": self.aux1 is not None}


def params_of(net) -> list[np.ndarray]:
    return [p for _, layer in net.named_layers() for p in layer.params()]


def grads_of(net) -> list[np.ndarray]:
    return [g for _, layer in net.named_layers() for g in layer.grads()]


def param_digest(net) -> str:
    h = hashlib.sha256()
    for name, layer in net.named_layers():
        h.update(name.encode())
        for p in layer.params():
            h.update(np.ascontiguousarray(p, dtype="<f4").tobytes())
    return h.hexdigest()


# -- bundles -----------------------------------------------------------------


@dataclass
class ModelBundle:
    net: UniModalNet | EarlyFusionNet | LateFusionNet
    strategy: str
    config: dict
    metrics: dict = field(default_factory=dict)
    history: dict = field(default_factory=dict)

    @property
    def kind(self) -> str:
        return self.net.kind

    @property
    def n_classes(self) -> int:
        if self.kind != "fusion":
            return self.net.head.n_out
        return self.net.head_layers[-1].n_out

    def digest(self) -> str:
        return param_digest(self.net)

    def logits(self, ds_or_X1, X2=None) -> np.ndarray:
        if isinstance(ds_or_X1, SyntheticDataset):
            X1, X2 = ds_or_X1.X1, ds_or_X1.X2
        else:
            X1 = ds_or_X1
        if self.kind == "early":
            return self.net.predict_logits(np.concatenate([X1, X2], axis=1))
        if self.kind == "unimodal":
            X = X1 if self.net.modality == 1 or X2 is None else X2
            return self.net.predict_logits(X)
        return self.net.predict_logits(X1, X2)

    def predict(self, ds_or_X1, X2=None) -> np.ndarray:
        return np.argmax(self.logits(ds_or_X1, X2), axis=1)

    def features(self, X, modality: int | None = None) -> np.ndarray:
        if self.kind == "early":
            raise KeyError("an early-fusion model has no per-modality tap")
        if self.kind == "unimodal":
            if modality not in (None, self.net.modality):
                raise KeyError(f"unimodal model has no tap for modality {modality}")
            return self.net.features(X)
        if modality not in (1, 2):
            raise KeyError(f"unknown encoder tap {modality!r}")
        return self.net.features(X, modality)

    def to_dict(self) -> dict:
        layers = []
        for name, layer in self.net.named_layers():
            layers.append(
                {
                    "name": name,
                    "type": "dense",
                    "in": layer.n_in,
                    "out": layer.n_out,
                    "W": nn.encode_array(layer.W),
                    "b": nn.encode_array(layer.b),
                }
            )
        return {
            "format": "mmlab-model/1",
            "kind": self.kind,
            "strategy": self.strategy,
            "arch": {**self.net.arch(), "layers": [{k: l[k] for k in ("name", "type", "in", "out")} for l in layers]},
            "seed": self.config.get("train", {}).get("seed"),
            "config": self.config,
            "params": {l["name"]: {"W": l["W"], "b": l["b"]} for l in layers},
            "metrics": self.metrics,
            "history": self.history,
            "digest": self.digest(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelBundle":
        layers = {
            name: nn.Dense(nn.decode_array(blob["W"]), nn.decode_array(blob["b"]))
            for name, blob in d["params"].items()
        }
        arch = d["arch"]
        if d["kind"] == "unimodal":
            net = UniModalNet(layers["encoder"], layers["head"], arch["modality"])
        elif d["kind"] == "early":
            net = EarlyFusionNet(layers["encoder"], layers["head"])
        elif d["kind"] == "fusion":
            heads = [layers[k] for k in sorted(k for k in layers if k.startswith("head"))]
            net = LateFusionNet(
                layers["enc1"], layers["enc2"], heads, Head(arch["head"]),
                layers.get("aux1"), layers.get("aux2"),
            )
        else:
            raise ValueError(f"unknown model kind {d['kind']!r}")
        bundle = cls(net, d["strategy"], d["config"], d.get("metrics", {}), d.get("history", {}))
        if d.get("digest") and bundle.digest() != d["digest"]:
            raise ValueError("model file digest does not match its parameters")
        return bundle

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "ModelBundle":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def frozen_copy(self) -> "ModelBundle":
        return copy.deepcopy(self)


# -- training loop -----------------------------------------------------------


@dataclass
class _Rows:
    X1: np.ndarray
    X2: np.ndarray
    y: np.ndarray


def _rows(ds: SyntheticDataset, split: SplitSpec) -> tuple[_Rows, _Rows]:
    train_idx, test_idx = split.train_indices, split.test_indices
    if split.n_total != len(ds):
        raise ValueError(f"split covers {split.n_total} rows, dataset has {len(ds)}")
    assert np.intersect1d(train_idx, test_idx).size == 0, "train/test overlap"

    def take(idx):
        return _Rows(
            np.ascontiguousarray(ds.X1[idx], dtype=nn.DTYPE),
            np.ascontiguousarray(ds.X2[idx], dtype=nn.DTYPE),
            ds.labels[idx],
        )

    return take(train_idx), take(test_idx)


def fit(net, cfg: nn.TrainConfig, step: Callable[[int], tuple[float, dict, np.ndarray]], y):
    """Run full-batch SGD; ``step(it)`` does forward+backward and returns
    ``(total_loss, loss_components, train_logits)``."""
    params = params_of(net)
    history = {"iter": [], "loss": [], "train_acc": [], "components": []}
    streak = 0
    it = 0
    for it in range(cfg.max_iters):
        loss, parts, logits = step(it)
        acc = float(np.mean(np.argmax(logits, axis=1) == y))
        if it % cfg.log_every == 0:
            history["iter"].append(it)
            history["loss"].append(loss)
            history["train_acc"].append(acc)
            history["components"].append(parts)
        nn.sgd_step(params, grads_of(net), cfg.lr)
        if cfg.check_finite and not nn.all_finite(params):
            raise FloatingPointError(f"non-finite parameters at iteration {it}")
        streak = streak + 1 if acc == 1.0 else 0
        if cfg.early_stop_patience and streak >= cfg.early_stop_patience:
            break
    history["iterations"] = it + 1
    return history


def _accuracy(pred, y) -> float:
    return float(np.mean(pred == y)) if len(y) else float("nan")


def _finish(bundle: ModelBundle, train: _Rows, test: _Rows, started: float) -> ModelBundle:
    bundle.metrics.update(
        train_acc=_accuracy(bundle.predict(train.X1, train.X2), train.y),
        test_acc=_accuracy(bundle.predict(test.X1, test.X2), test.y),
        wall_time=time.perf_counter() - started,
        iterations=bundle.history.get("iterations"),
    )
    return bundle


def train_unimodal(
    ds: SyntheticDataset,
    split: SplitSpec,
    modality: int,
    cfg: nn.TrainConfig | None = None,
    hidden: int = UNI_HIDDEN,
) -> ModelBundle:
    cfg = cfg or nn.TrainConfig()
    if modality not in (1, 2):
        raise ValueError(f"modality must be 1 or 2, got {modality}")
    started = time.perf_counter()
    train, test = _rows(ds, split)
    X = train.X1 if modality == 1 else train.X2
    net = UniModalNet.create(X.shape[1], ds.n_classes, modality, cfg.seed, hidden)

    def step(_):
        out = net.forward(X)
        loss, g = nn.softmax_xent(out["logits"], train.y)
        net.backward({"logits": g})
        return loss, {"ce": loss}, out["logits"]

    history = fit(net, cfg, step, train.y)
    bundle = ModelBundle(net, f"uni{modality}", {"train": cfg.to_dict(), "hidden": hidden}, history=history)
    return _finish(bundle, train, test, started)


def _fusion_net(ds, cfg, head, hidden, aux=False):
    return LateFusionNet.create(
        ds.config.d1, ds.config.d2, ds.n_classes, cfg.seed, head=head, hidden=hidden, aux=aux
    )


def train_naive_fusion(
    ds: SyntheticDataset,
    split: SplitSpec,
    head: Head | str = Head.MLP,
    cfg: nn.TrainConfig | None = None,
    hidden: int = FUSION_ENCODER_HIDDEN,
) -> ModelBundle:
    cfg = cfg or nn.TrainConfig()
    started = time.perf_counter()
    train, test = _rows(ds, split)
    net = _fusion_net(ds, cfg, head, hidden)

    def step(_):
        out = net.forward(train.X1, train.X2)
        loss, g = nn.softmax_xent(out["logits"], train.y)
        net.backward({"logits": g})
        return loss, {"ce": loss}, out["logits"]

    history = fit(net, cfg, step, train.y)
    config = {"train": cfg.to_dict(), "head": Head(head).value, "hidden": hidden}
    return _finish(ModelBundle(net, "naive", config, history=history), train, test, started)


def train_early_fusion(
    ds: SyntheticDataset,
    split: SplitSpec,
    cfg: nn.TrainConfig | None = None,
    hidden: int = EARLY_FUSION_HIDDEN,
) -> ModelBundle:
    """Two-layer MLP on ``[X1, X2]``; the multi-modal baseline of the
    synthetic accuracy table."""
    cfg = cfg or nn.TrainConfig()
    started = time.perf_counter()
    train, test = _rows(ds, split)
    X = np.concatenate([train.X1, train.X2], axis=1)
    net = EarlyFusionNet.create(X.shape[1], ds.n_classes, seed=cfg.seed, hidden=hidden)

    def step(_):
        out = net.forward(X)
        loss, g = nn.softmax_xent(out["logits"], train.y)
        net.backward({"logits": g})
        return loss, {"ce": loss}, out["logits"]

    history = fit(net, cfg, step, train.y)
    bundle = ModelBundle(net, "early", {"train": cfg.to_dict(), "hidden": hidden}, history=history)
    return _finish(bundle, train, test, started)


@dataclass
class UMTConfig:
    lambda_task: float = 1.0
    lambda_distill: float = 50.0

    def __post_init__(self):
        if self.lambda_task < 0 or self.lambda_distill < 0:
            raise ValueError("loss weights must be non-negative")


def teacher_seed(seed: int, modality: int) -> int:
    return (seed ^ _TEACHER_STREAM) + modality


def train_teachers(ds, split, cfg: nn.TrainConfig | None = None, hidden=FUSION_ENCODER_HIDDEN):
    """Uni-modal teachers on the same split, each with its own derived seed."""
    cfg = cfg or nn.TrainConfig()
    out = []
    for m in (1, 2):
        tcfg = _with_seed(cfg, teacher_seed(cfg.seed, m))
        out.append(train_unimodal(ds, split, m, tcfg, hidden=hidden))
    return tuple(out)


def _with_seed(cfg: nn.TrainConfig, seed: int) -> nn.TrainConfig:
    d = cfg.to_dict()
    d["seed"] = seed
    return nn.TrainConfig(**d)


def train_umt(
    ds: SyntheticDataset,
    split: SplitSpec,
    teacher1: ModelBundle,
    teacher2: ModelBundle,
    umt_cfg: UMTConfig | None = None,
    cfg: nn.TrainConfig | None = None,
    head: Head | str = Head.MLP,
    hidden: int = FUSION_ENCODER_HIDDEN,
) -> ModelBundle:
    """Late fusion trained with CE plus MSE pulls of each encoder's output
    toward the frozen uni-modal teacher's encoder output."""
    umt_cfg = umt_cfg or UMTConfig()
    cfg = cfg or nn.TrainConfig()
    for m, t in ((1, teacher1), (2, teacher2)):
        if t.kind != "unimodal" or t.net.modality != m:
            raise ValueError(f"teacher{m} must be a uni-modal model of modality {m}")
        if t.net.encoder.n_out != hidden:
            raise nn.ShapeError(
                f"teacher{m} feature width {t.net.encoder.n_out} != student width {hidden}"
            )
    started = time.perf_counter()
    train, test = _rows(ds, split)
    net = _fusion_net(ds, cfg, head, hidden)
    # teachers are frozen and training is full-batch, so their taps are fixed
    t1 = teacher1.features(train.X1)
    t2 = teacher2.features(train.X2)
    lt, ld = umt_cfg.lambda_task, umt_cfg.lambda_distill
    nn_dtype = nn.DTYPE

    def step(_):
        out = net.forward(train.X1, train.X2)
        ce, g = nn.softmax_xent(out["logits"], train.y)
        grads = {"logits": g * nn_dtype(lt) if lt != 1.0 else g}
        parts = {"ce": ce}
        total = lt * ce
        if ld != 0.0:
            d1, gd1 = nn.mse(out["f1"], t1)
            d2, gd2 = nn.mse(out["f2"], t2)
            grads["f1"] = gd1 * nn_dtype(ld)
            grads["f2"] = gd2 * nn_dtype(ld)
            parts.update(distill1=d1, distill2=d2)
            total += ld * (d1 + d2)
        net.backward(grads)
        return total, parts, out["logits"]

    history = fit(net, cfg, step, train.y)
    config = {
        "train": cfg.to_dict(),
        "head": Head(head).value,
        "hidden": hidden,
        "lambda_task": lt,
        "lambda_distill": ld,
        "teacher_digests": [teacher1.digest(), teacher2.digest()],
    }
    return _finish(ModelBundle(net, "umt", config, history=history), train, test, started)


def ume_predict(bundle1, bundle2, X1, X2, weights=(0.5, 0.5)) -> np.ndarray:
    """Weighted average of the two uni-modal softmax outputs, then argmax."""
    if bundle1.n_classes != bundle2.n_classes:
        raise ValueError("uni-modal models disagree on the number of classes")
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (2,) or np.any(w < 0) or w.sum() <= 0:
        raise ValueError("weights must be two non-negative numbers, not both zero")
    w = w / w.sum()
    p1 = nn.softmax(bundle1.logits(X1, X2).astype(np.float64))
    p2 = nn.softmax(bundle2.logits(X1, X2).astype(np.float64))
    return np.argmax(w[0] * p1 + w[1] * p2, axis=1)


def train_aux_ce(
    ds: SyntheticDataset,
    split: SplitSpec,
    cfg: nn.TrainConfig | None = None,
    head: Head | str = Head.MLP,
    hidden: int = FUSION_ENCODER_HIDDEN,
) -> ModelBundle:
    cfg = cfg or nn.TrainConfig()
    started = time.perf_counter()
    train, test = _rows(ds, split)
    net = _fusion_net(ds, cfg, head, hidden, aux=True)

    def step(_):
        out = net.forward(train.X1, train.X2)
        ce, g = nn.softmax_xent(out["logits"], train.y)
        ce1, g1 = nn.softmax_xent(out["aux1"], train.y)
        ce2, g2 = nn.softmax_xent(out["aux2"], train.y)
        net.backward({"logits": g, "aux1": g1, "aux2": g2})
        return ce + ce1 + ce2, {"ce": ce, "ce_uni1": ce1, "ce_uni2": ce2}, out["logits"]

    history = fit(net, cfg, step, train.y)
    config = {"train": cfg.to_dict(), "head": Head(head).value, "hidden": hidden}
    return _finish(ModelBundle(net, "aux", config, history=history), train, test, started)


def dropout_schedule(seed: int, n_iters: int, drop_prob: float, independent: bool = False):
    """Per-iteration keep flags ``(keep1, keep2)`` for modality dropout.

    Default event model: with ``drop_prob`` one modality is dropped, chosen
    uniformly. ``independent`` drops each modality on its own coin instead
    (both may go in the same iteration).
    """
    if not 0 <= drop_prob < 1:
        raise ValueError("drop_prob must lie in [0, 1)")
    gen = rng.Xoshiro256(seed ^ _DROPOUT_STREAM)
    keep = np.ones((n_iters, 2), dtype=bool)
    for t in range(n_iters):
        if independent:
            keep[t, 0] = gen.random() >= drop_prob
            keep[t, 1] = gen.random() >= drop_prob
        elif gen.random() < drop_prob:
            keep[t, 0 if gen.random() < 0.5 else 1] = False
    return keep


def train_modality_dropout(
    ds: SyntheticDataset,
    split: SplitSpec,
    drop_prob: float = 1 / 3,
    cfg: nn.TrainConfig | None = None,
    head: Head | str = Head.MLP,
    hidden: int = FUSION_ENCODER_HIDDEN,
    independent: bool = False,
) -> ModelBundle:
    cfg = cfg or nn.TrainConfig()
    schedule = dropout_schedule(cfg.seed, cfg.max_iters, drop_prob, independent)
    started = time.perf_counter()
    train, test = _rows(ds, split)
    net = _fusion_net(ds, cfg, head, hidden)

    def step(it):
        keep = tuple(bool(k) for k in schedule[it])
        out = net.forward(train.X1, train.X2, keep=keep)
        loss, g = nn.softmax_xent(out["logits"], train.y)
        net.backward({"logits": g})
        return loss, {"ce": loss}, out["logits"]

    history = fit(net, cfg, step, train.y)
    config = {
        "train": cfg.to_dict(),
        "head": Head(head).value,
        "hidden": hidden,
        "drop_prob": drop_prob,
        "independent": independent,
        "drop_counts": schedule[: history["iterations"]].__invert__().sum(axis=0).tolist(),
    }
    return _finish(ModelBundle(net, "dropout", config, history=history), train, test, started)


# -- frozen-feature classifiers ----------------------------------------------


def train_linear_classifier(
    F_train: np.ndarray, y_train: np.ndarray, n_classes: int, cfg: nn.TrainConfig
) -> tuple[nn.Dense, dict]:
    """Fresh softmax classifier on fixed features, same SGD settings."""
    state = rng.seed_state(cfg.seed)
    clf = nn.Dense.init(F_train.shape[1], n_classes, state)
    F_train = np.ascontiguousarray(F_train, dtype=nn.DTYPE)

    class _Wrap:
        def named_layers(self):
            return [("clf", clf)]

    def step(_):
        logits = clf.forward(F_train)
        loss, g = nn.softmax_xent(logits, y_train)
        clf.backward(g)
        return loss, {"ce": loss}, logits

    history = fit(_Wrap(), cfg, step, y_train)
    return clf, history


def linear_logits(clf: nn.Dense, F: np.ndarray) -> np.ndarray:
    return F @ clf.W.T + clf.b


def split_mm_classifier(head: nn.Dense | ModelBundle, block_sizes=None) -> tuple[nn.Dense, nn.Dense]:
    """Split a linear classifier over ``[f1, f2]`` into per-modality classifiers.

    Each part keeps its column block of ``W`` and the full bias, so
    ``logits1 + logits2 - b`` reproduces the joint logits.
    """
    if isinstance(head, ModelBundle):
        if head.kind != "fusion" or head.net.head is not Head.LINEAR:
            raise ValueError("only a linear fusion head can be split")
        block_sizes = (head.net.enc1.n_out, head.net.enc2.n_out)
        head = head.net.head_layers[0]
    if not isinstance(head, nn.Dense):
        raise ValueError("only a linear head can be split")
    if block_sizes is None:
        if head.n_in % 2:
            raise ValueError("give block_sizes for an odd-width head")
        block_sizes = (head.n_in // 2, head.n_in // 2)
    k1, k2 = block_sizes
    if k1 + k2 != head.n_in:
        raise nn.ShapeError("block sizes do not cover the head input")
    return (
        nn.Dense(head.W[:, :k1].copy(), head.b.copy()),
        nn.Dense(head.W[:, k1:].copy(), head.b.copy()),
    )


@dataclass
class DecisionResult:
    recommendation: str
    mm_clf_acc: float
    avg_pred_acc: float
    uni_test_acc: tuple[float, float]
    warning: str | None = None

    def to_dict(self) -> dict:
        return {
            "recommendation": self.recommendation,
            "mm_clf_acc": self.mm_clf_acc,
            "avg_pred_acc": self.avg_pred_acc,
            "uni_test_acc": list(self.uni_test_acc),
            "warning": self.warning,
        }


def decision_trick(
    ds: SyntheticDataset,
    split: SplitSpec,
    cfg: nn.TrainConfig | None = None,
    uni_models: tuple[ModelBundle, ModelBundle] | None = None,
) -> DecisionResult:
    """UMT if a linear classifier over frozen uni-modal features strictly beats
    averaging the uni-modal predictions, UME otherwise (ties go to UME)."""
    cfg = cfg or nn.TrainConfig()
    m1, m2 = uni_models or (
        train_unimodal(ds, split, 1, cfg),
        train_unimodal(ds, split, 2, cfg),
    )
    train, test = _rows(ds, split)

    def concat(rows):
        return np.concatenate([m1.features(rows.X1), m2.features(rows.X2)], axis=1)

    clf, _ = train_linear_classifier(concat(train), train.y, ds.n_classes, cfg)
    mm_acc = _accuracy(np.argmax(linear_logits(clf, concat(test)), axis=1), test.y)
    avg_acc = _accuracy(ume_predict(m1, m2, test.X1, test.X2), test.y)
    warning = None
    if len(np.unique(ds.labels)) < 2:
        warning = "dataset has a single class; both accuracies are trivially perfect"
        logger.warning(warning)
    return DecisionResult(
        "UMT" if mm_acc > avg_acc else "UME",
        mm_acc,
        avg_acc,
        (m1.metrics.get("test_acc"), m2.metrics.get("test_acc")),
        warning,
    )
