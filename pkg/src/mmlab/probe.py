"""Linear probes on frozen encoders, confusion matrices and per-class accuracy."""

from __future__ import annotations

import csv
import hashlib
import io
from dataclasses import asdict, dataclass

import numpy as np

from mmlab import nn
from mmlab.synthgen import SplitSpec, SyntheticDataset
from mmlab.training import ModelBundle, _rows, linear_logits, train_linear_classifier


@dataclass
class ProbeReport:
    encoder_id: str
    probe_train_acc: float
    probe_test_acc: float
    seed: int
    probe_config: dict

    def __post_init__(self):
        for acc in (self.probe_train_acc, self.probe_test_acc):
            if not 0.0 <= acc <= 1.0:
                raise ValueError(f"accuracy {acc} outside [0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)


def _encoder_checksum(bundle: ModelBundle) -> str:
    h = hashlib.sha256()
    for _, layer in bundle.net.named_layers():
        for p in layer.params():
            h.update(p.tobytes())
    return h.hexdigest()


def linear_probe(
    bundle: ModelBundle,
    modality: int | None,
    ds: SyntheticDataset,
    split: SplitSpec,
    cfg: nn.TrainConfig | None = None,
) -> ProbeReport:
    """Train a fresh softmax classifier on the frozen ``modality`` tap.

    For a uni-modal model ``modality`` may be ``None`` (its own encoder).
    Raises ``KeyError`` if the model has no such tap.
    """
    cfg = cfg or nn.TrainConfig()
    before = _encoder_checksum(bundle)
    if bundle.kind == "unimodal" and modality is None:
        modality = bundle.net.modality
    train, test = _rows(ds, split)
    pick = (lambda r: r.X1) if modality == 1 else (lambda r: r.X2)
    F_train = bundle.features(pick(train), modality)
    F_test = bundle.features(pick(test), modality)
    clf, _ = train_linear_classifier(F_train, train.y, ds.n_classes, cfg)
    train_acc = float(np.mean(np.argmax(linear_logits(clf, F_train), axis=1) == train.y))
    test_acc = float(np.mean(np.argmax(linear_logits(clf, F_test), axis=1) == test.y))
    if _encoder_checksum(bundle) != before:
        raise RuntimeError("probing modified the encoder parameters")
    return ProbeReport(
        encoder_id=f"{bundle.strategy}:{bundle.digest()[:12]}:m{modality}",
        probe_train_acc=train_acc,
        probe_test_acc=test_acc,
        seed=cfg.seed,
        probe_config=cfg.to_dict(),
    )


@dataclass
class ConfusionMatrix:
    """Counts with rows = actual class and columns = predicted class."""

    counts: np.ndarray

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def row_percent(self) -> np.ndarray:
        sums = self.counts.sum(axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(sums > 0, 100.0 * self.counts / np.maximum(sums, 1), np.nan)

    @property
    def accuracy(self) -> float:
        total = self.counts.sum()
        return float(np.trace(self.counts) / total) if total else float("nan")

    def to_dict(self) -> dict:
        pct = self.row_percent
        return {
            "counts": self.counts.tolist(),
            "row_percent": [[None if np.isnan(v) else round(float(v), 4) for v in row] for row in pct],
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        k = self.n_classes
        w.writerow(["actual"] + [f"pred_{j}" for j in range(k)] + [f"pct_{j}" for j in range(k)])
        pct = self.row_percent
        for i in range(k):
            w.writerow([i, *self.counts[i].tolist(), *(f"{v:.2f}" for v in pct[i])])
        return buf.getvalue()


def _check_labels(predictions, labels, K):
    predictions = np.asarray(predictions, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if predictions.shape != labels.shape:
        raise ValueError("predictions and labels differ in length")
    for name, arr in (("label", labels), ("prediction", predictions)):
        if arr.size and (arr.min() < 0 or arr.max() >= K):
            raise ValueError(f"{name} outside [0, {K})")
    return predictions, labels


def confusion(predictions, labels, K: int) -> ConfusionMatrix:
    predictions, labels = _check_labels(predictions, labels, K)
    counts = np.zeros((K, K), dtype=np.int64)
    np.add.at(counts, (labels, predictions), 1)
    return ConfusionMatrix(counts)


def per_class_accuracy(predictions, labels, K: int) -> list[float | None]:
    """Recall of each class; ``None`` for classes with no examples."""
    cm = confusion(predictions, labels, K)
    out = []
    for i in range(K):
        n = cm.counts[i].sum()
        out.append(float(cm.counts[i, i] / n) if n else None)
    return out
