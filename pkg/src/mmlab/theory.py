"""Discrete feature-learning model behind modality laziness.

A universe is a list of abstract features. Each feature, on each data
point, agrees with the label (probability ``p``), disagrees (``eps``), or
is silent. Learned features vote; ties are coin flips. Training is greedy:
candidates are scanned in priority order (largest ``p`` first, optionally
boosted for uni-modal features) and kept only if they strictly lower the
training misclassification count.

Uni-modal ensembles run the greedy scan once per modality over that
modality's features; joint training scans all features, paired ones
included, in a single pass.

All randomness goes through explicit ``numpy.random.Generator`` objects;
Monte-Carlo helpers derive one child generator per trial batch from a
``SeedSequence``.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from statistics import NormalDist
from typing import Iterable, Sequence

import numpy as np

DEFAULT_C = 4.0
PAIRED = 0


class FeatureKind(str, enum.Enum):
    UNIMODAL = "unimodal"
    PAIRED = "paired"
    EMPTY = "empty"


class UniverseError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureSpec:
    id: str
    modality: int  # 1..T, or PAIRED (0)
    p: float
    eps: float
    custom: bool = False

    def __post_init__(self):
        if not (0 <= self.p <= 1 and 0 <= self.eps <= 1):
            raise UniverseError(f"{self.id}: probabilities must lie in [0, 1]")
        if self.p + self.eps > 1 + 1e-12:
            raise UniverseError(f"{self.id}: p + eps exceeds 1")

    @property
    def kind(self) -> FeatureKind:
        if self.p == 0 and self.eps == 0:
            return FeatureKind.EMPTY
        return FeatureKind.PAIRED if self.modality == PAIRED else FeatureKind.UNIMODAL

    @property
    def is_paired(self) -> bool:
        return self.modality == PAIRED


@dataclass(frozen=True)
class FeatureUniverse:
    features: tuple[FeatureSpec, ...]
    c: float = DEFAULT_C
    n_modalities: int = 2

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(self.features))
        if self.c <= 1:
            raise UniverseError("c must exceed 1")
        if self.n_modalities < 2:
            raise UniverseError("need at least two modalities")
        ids = [f.id for f in self.features]
        if len(set(ids)) != len(ids):
            raise UniverseError("feature ids must be unique")
        for f in self.features:
            if f.modality != PAIRED and not 1 <= f.modality <= self.n_modalities:
                raise UniverseError(f"{f.id}: modality {f.modality} out of range")
            if not f.custom and abs(f.eps - f.p / self.c) > 1e-12:
                raise UniverseError(f"{f.id}: eps must equal p / c unless marked custom")

    @classmethod
    def build(cls, rows: Iterable[tuple], c: float = DEFAULT_C, n_modalities: int = 2):
        """``rows`` of ``(id, modality, p)`` or ``(id, modality, p, eps)``."""
        feats = []
        for row in rows:
            fid, modality, p = row[:3]
            modality = _parse_modality(modality)
            if len(row) > 3 and row[3] is not None:
                eps = float(row[3])
                feats.append(FeatureSpec(fid, modality, p, eps, custom=abs(eps - p / c) > 1e-12))
            else:
                feats.append(FeatureSpec(fid, modality, p, p / c))
        return cls(tuple(feats), c, n_modalities)

    @property
    def ids(self) -> list[str]:
        return [f.id for f in self.features]

    def index(self, fid: str) -> int:
        try:
            return self.ids.index(fid)
        except ValueError:
            raise KeyError(f"unknown feature id {fid!r}") from None

    def feature(self, fid: str) -> FeatureSpec:
        return self.features[self.index(fid)]

    def of_modality(self, m: int) -> list[FeatureSpec]:
        return [f for f in self.features if f.modality == m]

    @property
    def paired(self) -> list[FeatureSpec]:
        return self.of_modality(PAIRED)

    @property
    def unimodal(self) -> list[FeatureSpec]:
        return [f for f in self.features if not f.is_paired]

    def without(self, *ids: str) -> "FeatureUniverse":
        return FeatureUniverse(
            tuple(f for f in self.features if f.id not in ids), self.c, self.n_modalities
        )

    def restrict(self, ids: Sequence[str]) -> "FeatureUniverse":
        keep = set(ids)
        return FeatureUniverse(
            tuple(f for f in self.features if f.id in keep), self.c, self.n_modalities
        )

    @property
    def p(self) -> np.ndarray:
        return np.array([f.p for f in self.features])

    @property
    def eps(self) -> np.ndarray:
        return np.array([f.eps for f in self.features])

    def to_dict(self) -> dict:
        out = []
        for f in self.features:
            row = {"id": f.id, "modality": "paired" if f.is_paired else f.modality, "p": f.p}
            if f.custom:
                row["eps"] = f.eps
            out.append(row)
        return {"c": self.c, "n_modalities": self.n_modalities, "features": out}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureUniverse":
        rows = [(r["id"], r["modality"], float(r["p"]), r.get("eps")) for r in d["features"]]
        return cls.build(rows, c=float(d.get("c", DEFAULT_C)), n_modalities=int(d.get("n_modalities", 2)))

    @classmethod
    def load(cls, path: str | Path) -> "FeatureUniverse":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _parse_modality(m) -> int:
    if isinstance(m, str):
        s = m.strip().upper()
        if s == "PAIRED":
            return PAIRED
        return int(s[1:] if s.startswith("M") else s)
    return int(m)


def example_universe(with_paired: bool = True, c: float = DEFAULT_C) -> FeatureUniverse:
    """f1..f3 on modality 1, g1..g3 on modality 2, paired h (p = 0.28)."""
    rows = [
        ("f1", 1, 0.20), ("f2", 1, 0.10), ("f3", 1, 0.05),
        ("g1", 2, 0.15), ("g2", 2, 0.08), ("g3", 2, 0.02),
    ]
    if with_paired:
        rows.append(("h", "paired", 0.28))
    return FeatureUniverse.build(rows, c=c)


# raw feature signs and labels of the four worked points; column order f1 f2 f3 g1 g2 g3 h
EXAMPLE_POINTS = {
    "a": ((+1, +1, +1, +1, -1, +1, +1), +1),
    "b": ((0, +1, 0, +1, +1, -1, +1), +1),
    "c": ((+1, +1, 0, -1, +1, +1, 0), -1),
    "d": ((+1, -1, +1, +1, +1, 0, +1), -1),
}
EXAMPLE_IDS = ("f1", "f2", "f3", "g1", "g2", "g3", "h")


# -- data points -------------------------------------------------------------


@dataclass
class Realization:
    """One labelled point: ``signs`` are the raw feature signs (sign of r),
    in universe order; agreement with the label is ``y * signs``."""

    y: int
    signs: np.ndarray
    ids: tuple[str, ...]

    def sign(self, fid: str) -> int:
        try:
            return int(self.signs[self.ids.index(fid)])
        except ValueError:
            raise KeyError(f"unknown feature id {fid!r}") from None

    def as_dict(self) -> dict[str, int]:
        return dict(zip(self.ids, (int(s) for s in self.signs)))

    @classmethod
    def from_signs(cls, signs: dict[str, int], y: int) -> "Realization":
        ids = tuple(signs)
        return cls(int(y), np.array([signs[i] for i in ids], dtype=np.int8), ids)


@dataclass
class PointBatch:
    """Many realizations at once: ``y`` (n,), ``signs`` (n, F)."""

    y: np.ndarray
    signs: np.ndarray
    ids: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.y)

    @property
    def agreement(self) -> np.ndarray:
        return self.signs * self.y[:, None]

    def column(self, fid: str) -> int:
        try:
            return self.ids.index(fid)
        except ValueError:
            raise KeyError(f"unknown feature id {fid!r}") from None

    def __getitem__(self, i: int) -> Realization:
        return Realization(int(self.y[i]), self.signs[i].copy(), self.ids)

    @classmethod
    def from_points(cls, points: Sequence[Realization]) -> "PointBatch":
        if not points:
            return cls(np.zeros(0, dtype=np.int8), np.zeros((0, 0), dtype=np.int8), ())
        ids = points[0].ids
        return cls(
            np.array([p.y for p in points], dtype=np.int8),
            np.stack([p.signs for p in points]).astype(np.int8),
            ids,
        )


def sample_points(universe: FeatureUniverse, n: int, rng: np.random.Generator) -> PointBatch:
    y = np.where(rng.random(n) < 0.5, -1, 1).astype(np.int8)
    u = rng.random((n, len(universe.features)))
    p, eps = universe.p, universe.eps
    agree = np.where(u < p, 1, np.where(u < p + eps, -1, 0)).astype(np.int8)
    return PointBatch(y, agree * y[:, None], tuple(universe.ids))


def sample_realization(universe: FeatureUniverse, rng: np.random.Generator) -> Realization:
    return sample_points(universe, 1, rng)[0]


# -- evaluation ---------------------------------------------------------------


@dataclass
class LearnedSet:
    ids: list[str]
    counts: dict[str, int] = field(default_factory=dict)
    train_error: float | None = None

    @classmethod
    def of(cls, universe: FeatureUniverse, ids: Sequence[str], train_error=None) -> "LearnedSet":
        counts = {f"m{m}": 0 for m in range(1, universe.n_modalities + 1)}
        counts["paired"] = 0
        for fid in ids:
            f = universe.feature(fid)
            counts["paired" if f.is_paired else f"m{f.modality}"] += 1
        return cls(list(ids), counts, train_error)

    def __contains__(self, fid) -> bool:
        return fid in self.ids

    def __len__(self) -> int:
        return len(self.ids)

    def union(self, other: "LearnedSet", universe: FeatureUniverse) -> "LearnedSet":
        ids = self.ids + [i for i in other.ids if i not in self.ids]
        return LearnedSet.of(universe, ids)


def _columns(ids: Sequence[str], point_ids: Sequence[str]) -> list[int]:
    cols = []
    for fid in ids:
        try:
            cols.append(point_ids.index(fid))
        except ValueError:
            raise KeyError(f"unknown feature id {fid!r}") from None
    return cols


def vote_predict(learned: LearnedSet | Sequence[str], point: Realization, rng: np.random.Generator) -> int:
    ids = learned.ids if isinstance(learned, LearnedSet) else list(learned)
    s = point.signs[_columns(ids, list(point.ids))]
    pos, neg = int(np.sum(s > 0)), int(np.sum(s < 0))
    if pos == neg:
        return 1 if rng.random() < 0.5 else -1
    return 1 if pos > neg else -1


def vote_batch(ids: Sequence[str], batch: PointBatch, rng: np.random.Generator) -> np.ndarray:
    s = batch.signs[:, _columns(ids, list(batch.ids))]
    pos = (s > 0).sum(axis=1)
    neg = (s < 0).sum(axis=1)
    guess = np.where(rng.random(len(batch)) < 0.5, -1, 1)
    return np.where(pos == neg, guess, np.where(pos > neg, 1, -1))


def accuracy(ids: Sequence[str], batch: PointBatch, rng: np.random.Generator) -> float:
    return float(np.mean(vote_batch(ids, batch, rng) == batch.y))


def point_error(learned: LearnedSet | Sequence[str], point: Realization) -> int:
    """(# learned features disagreeing with y) - (# agreeing)."""
    ids = learned.ids if isinstance(learned, LearnedSet) else list(learned)
    a = point.signs[_columns(ids, list(point.ids))] * point.y
    return int(np.sum(a < 0) - np.sum(a > 0))


def misclassification(margin: np.ndarray) -> float:
    """Training error with vote ties scored at their expected cost, 0.5."""
    return float(np.sum(margin < 0) + 0.5 * np.sum(margin == 0))


# -- training dynamics -------------------------------------------------------


def effective_priority(
    universe: FeatureUniverse, boosted: Iterable[str] = (), p0: float = 0.0
) -> list[str]:
    """Feature ids by descending ``p + p0 * [id in boosted]``.

    Ties fall back to modality index (paired last), then declaration order.
    """
    if p0 < 0:
        raise ValueError("p0 must be non-negative")
    boosted = set(boosted)
    unknown = boosted - set(universe.ids)
    if unknown:
        raise KeyError(f"unknown feature ids {sorted(unknown)}")
    T = universe.n_modalities

    def key(item):
        pos, f = item
        boost = p0 if f.id in boosted else 0.0
        return (-(f.p + boost), T + 1 if f.is_paired else f.modality, pos)

    return [f.id for _, f in sorted(enumerate(universe.features), key=key)]


def greedy_learn(
    universe: FeatureUniverse,
    train: PointBatch | Sequence[Realization],
    candidates: Sequence[str],
    budget: int | None = None,
) -> LearnedSet:
    """Scan ``candidates`` in order, keeping each one that strictly lowers the
    training misclassification count; stop at zero error, at ``budget``
    learned features, or when candidates run out."""
    if not isinstance(train, PointBatch):
        train = PointBatch.from_points(list(train))
    if len(train) == 0:
        raise ValueError("greedy_learn needs at least one training point")
    agree = train.agreement
    margin = np.zeros(len(train), dtype=np.int64)
    err = misclassification(margin)
    learned = []
    for fid in candidates:
        if err == 0 or (budget is not None and len(learned) >= budget):
            break
        trial = margin + agree[:, train.column(fid)]
        trial_err = misclassification(trial)
        if trial_err < err:
            learned.append(fid)
            margin, err = trial, trial_err
    return LearnedSet.of(universe, learned, err)


class Strategy(str, enum.Enum):
    UNI_ENSEMBLE = "uni_ensemble"
    JOINT = "joint"
    JOINT_BOOSTED = "joint_boosted"


@dataclass
class StrategyResult:
    strategy: Strategy
    learned: LearnedSet
    per_modality: dict[int, LearnedSet] | None
    accuracy: float
    modality_accuracy: dict[int, float]


def _learn(universe, strategy, train, p0):
    if strategy is Strategy.UNI_ENSEMBLE:
        per = {}
        for m in range(1, universe.n_modalities + 1):
            sub = universe.restrict([f.id for f in universe.of_modality(m)])
            per[m] = greedy_learn(universe, train, effective_priority(sub))
        union = LearnedSet.of(universe, [i for m in sorted(per) for i in per[m].ids])
        return union, per
    boosted = [f.id for f in universe.unimodal] if strategy is Strategy.JOINT_BOOSTED else []
    order = effective_priority(universe, boosted, p0 if strategy is Strategy.JOINT_BOOSTED else 0.0)
    return greedy_learn(universe, train, order), None


def run_strategy(
    universe: FeatureUniverse,
    strategy: Strategy | str,
    n_train: int,
    n_test: int,
    seed: int,
    p0: float = 0.0,
) -> StrategyResult:
    """Train on ``n_train`` sampled points, score by voting on ``n_test`` fresh ones.

    Train points, test points and tie-break coins come from fixed children of
    ``seed``, so different strategies at the same seed see identical data.
    """
    strategy = Strategy(strategy)
    if n_train < 1 or n_test < 1:
        raise ValueError("n_train and n_test must be at least 1")
    train_ss, test_ss, vote_ss = np.random.SeedSequence(seed).spawn(3)
    train = sample_points(universe, n_train, np.random.default_rng(train_ss))
    test = sample_points(universe, n_test, np.random.default_rng(test_ss))
    learned, per = _learn(universe, strategy, train, p0)
    acc = accuracy(learned.ids, test, np.random.default_rng(vote_ss))
    mod_acc = {}
    for m in range(1, universe.n_modalities + 1):
        ids = [i for i in learned.ids if universe.feature(i).modality == m]
        mod_acc[m] = accuracy(ids, test, np.random.default_rng(vote_ss))
    return StrategyResult(strategy, learned, per, acc, mod_acc)


# -- theorem checks ------------------------------------------------------------


@dataclass
class Theorem1cResult:
    margin: float
    lhs: float
    rhs: float
    inequality_holds: bool
    radicand: float
    index_range: tuple[int, int]


def theorem1c_check(
    k_pa: int,
    k_counts: Sequence[int],
    b_counts: Sequence[int],
    p_paired: Sequence[float],
    p_sorted: Sequence[float],
    delta: float,
) -> Theorem1cResult:
    """Performance-laziness test: sum of learned paired ``p`` against the tail
    of the sorted uni-modal ``p`` list plus the Hoeffding margin.

    With two modalities the tail is positions ``b1+1 .. b1+b2`` (1-based);
    with more it is ``min(b)+1 .. sum(b)``.
    """
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    if len(k_counts) != len(b_counts) or len(b_counts) < 2:
        raise ValueError("need matching per-modality k and b counts")
    if k_pa < 0 or min(k_counts) < 0 or min(b_counts) < 0:
        raise ValueError("counts must be non-negative")
    if any(b < k for b, k in zip(b_counts, k_counts)):
        raise ValueError("uni-modal training must learn at least as many features (b >= k)")
    if len(p_paired) != k_pa:
        raise ValueError("need one paired probability per learned paired feature")
    gaps = sum(b - k for b, k in zip(b_counts, k_counts))
    radicand = 8 * (k_pa + gaps) * math.log(1 / delta)
    margin = math.sqrt(radicand)
    lo = b_counts[0] if len(b_counts) == 2 else min(b_counts)
    hi = sum(b_counts)
    ordered = sorted(p_sorted, reverse=True)
    if hi > len(ordered):
        raise ValueError(f"need at least {hi} sorted uni-modal probabilities")
    lhs = math.fsum(p_paired)
    rhs = math.fsum(ordered[lo:hi]) + margin
    return Theorem1cResult(margin, lhs, rhs, lhs <= rhs, radicand, (lo + 1, hi))


@dataclass
class LemmaResult:
    p_plus: float
    p_minus: float
    ratio: float | None
    ci_low: float | None
    ci_high: float | None
    c: float
    trials: int
    inconclusive: bool

    def to_dict(self) -> dict:
        return asdict(self)


def lemma_complementary_check(
    universe: FeatureUniverse, n_trials: int = 10**6, seed: int = 0, chunk: int = 250_000
) -> LemmaResult:
    """Monte-Carlo ratio P(sum y*r = 1) / P(sum y*r = -1), expected to equal c.

    The 99% interval uses the delta method on the log ratio, whose variance
    for multinomial counts A, B is approximately 1/A + 1/B.
    """
    if any(f.custom for f in universe.features):
        raise UniverseError("the lemma needs eps = p / c for every feature")
    n_chunks = max(1, math.ceil(n_trials / chunk))
    children = np.random.SeedSequence(seed).spawn(n_chunks)
    p, eps = universe.p, universe.eps
    plus = minus = 0
    remaining = n_trials
    for ss in children:
        n = min(chunk, remaining)
        remaining -= n
        u = np.random.default_rng(ss).random((n, len(p)))
        total = (u < p).sum(axis=1) - ((u >= p) & (u < p + eps)).sum(axis=1)
        plus += int(np.sum(total == 1))
        minus += int(np.sum(total == -1))
    if plus == 0 or minus == 0:
        return LemmaResult(plus / n_trials, minus / n_trials, None, None, None, universe.c, n_trials, True)
    ratio = plus / minus
    z = NormalDist().inv_cdf(0.995)
    half = z * math.sqrt(1 / plus + 1 / minus)
    return LemmaResult(
        plus / n_trials, minus / n_trials, ratio,
        ratio * math.exp(-half), ratio * math.exp(half), universe.c, n_trials, False,
    )


@dataclass
class Theorem2Seed:
    seed: int
    boosted_ids: list[str]
    joint_ids: list[str]
    ensemble_ids: list[str]
    superset: bool
    boosted_acc: float
    joint_acc: float
    ensemble_acc: float


@dataclass
class Theorem2Report:
    p0: float
    S: list[str]
    per_seed: list[Theorem2Seed]

    @property
    def superset_rate(self) -> float:
        return float(np.mean([s.superset for s in self.per_seed])) if self.per_seed else float("nan")

    def to_dict(self) -> dict:
        return {
            "p0": self.p0,
            "S": self.S,
            "S_empty": not self.S,
            "superset_rate": self.superset_rate,
            "mean_acc_gain_vs_joint": float(np.mean([s.boosted_acc - s.joint_acc for s in self.per_seed])),
            "mean_acc_gain_vs_ensemble": float(np.mean([s.boosted_acc - s.ensemble_acc for s in self.per_seed])),
            "per_seed": [asdict(s) for s in self.per_seed],
        }


def theorem2_check(
    universe: FeatureUniverse, p0: float, n_train: int, n_test: int, seeds: Iterable[int]
) -> Theorem2Report:
    """Does boosting uni-modal priority by ``p0`` learn everything the
    ensemble learns plus every paired feature with ``p > p0``?"""
    if p0 <= 0:
        raise ValueError("p0 must be positive")
    S = [f.id for f in universe.paired if f.p > p0]
    rows = []
    for seed in seeds:
        ens = run_strategy(universe, Strategy.UNI_ENSEMBLE, n_train, n_test, seed)
        joint = run_strategy(universe, Strategy.JOINT, n_train, n_test, seed)
        boosted = run_strategy(universe, Strategy.JOINT_BOOSTED, n_train, n_test, seed, p0=p0)
        need = set(ens.learned.ids) | set(S)
        rows.append(
            Theorem2Seed(
                seed, boosted.learned.ids, joint.learned.ids, ens.learned.ids,
                need <= set(boosted.learned.ids),
                boosted.accuracy, joint.accuracy, ens.accuracy,
            )
        )
    return Theorem2Report(p0, S, rows)


# -- laziness report -----------------------------------------------------------


@dataclass
class LazinessReport:
    b_counts: list[int]
    k_counts: list[int]
    k_pa: int
    ens_acc: float
    joint_acc: float
    boosted_acc: float
    delta: float
    margin: float
    lhs: float
    rhs: float
    inequality_holds: bool
    quantity_laziness_holds: bool
    trials: int
    per_seed: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def laziness_report(
    universe: FeatureUniverse,
    n_train: int,
    n_test: int,
    seeds: Sequence[int],
    delta: float = 0.05,
    p0: float = 0.15,
) -> LazinessReport:
    """Uni-modal ensemble vs joint vs boosted joint over several seeds.

    Headline counts come from the first seed; accuracies are seed means.
    """
    if not seeds:
        raise ValueError("need at least one seed")
    T = universe.n_modalities
    per_seed = []
    for seed in seeds:
        ens = run_strategy(universe, Strategy.UNI_ENSEMBLE, n_train, n_test, seed)
        joint = run_strategy(universe, Strategy.JOINT, n_train, n_test, seed)
        boosted = run_strategy(universe, Strategy.JOINT_BOOSTED, n_train, n_test, seed, p0=p0)
        b = [len(ens.per_modality[m]) for m in range(1, T + 1)]
        k = [joint.learned.counts[f"m{m}"] for m in range(1, T + 1)]
        k_pa = joint.learned.counts["paired"]
        per_seed.append(
            {
                "seed": seed,
                "b_counts": b,
                "k_counts": k,
                "k_pa": k_pa,
                "ensemble_ids": ens.learned.ids,
                "joint_ids": joint.learned.ids,
                "boosted_ids": boosted.learned.ids,
                "ens_acc": ens.accuracy,
                "joint_acc": joint.accuracy,
                "boosted_acc": boosted.accuracy,
                "quantity_laziness": sum(k) + k_pa <= min(b),
            }
        )
    first = per_seed[0]
    b, k, k_pa = first["b_counts"], first["k_counts"], first["k_pa"]
    p_sorted = sorted((f.p for f in universe.unimodal), reverse=True)
    p_h = [universe.feature(i).p for i in first["joint_ids"] if universe.feature(i).is_paired]
    consistent = all(bb >= kk for bb, kk in zip(b, k))
    if consistent:
        res = theorem1c_check(k_pa, k, b, p_h, p_sorted, delta)
        margin, lhs, rhs, holds = res.margin, res.lhs, res.rhs, res.inequality_holds
    else:
        margin, lhs, rhs, holds = float("nan"), float("nan"), float("nan"), False
    return LazinessReport(
        b_counts=b,
        k_counts=k,
        k_pa=k_pa,
        ens_acc=float(np.mean([r["ens_acc"] for r in per_seed])),
        joint_acc=float(np.mean([r["joint_acc"] for r in per_seed])),
        boosted_acc=float(np.mean([r["boosted_acc"] for r in per_seed])),
        delta=delta,
        margin=margin,
        lhs=lhs,
        rhs=rhs,
        inequality_holds=holds,
        quantity_laziness_holds=first["quantity_laziness"],
        trials=len(per_seed),
        per_seed=per_seed,
    )


def random_universe(
    rng: np.random.Generator,
    c: float = DEFAULT_C,
    p_range: tuple[float, float] = (0.02, 0.4),
    per_modality: tuple[int, int] = (5, 10),
    paired: tuple[int, int] = (0, 3),
) -> FeatureUniverse:
    rows = []
    for m, prefix in ((1, "f"), (2, "g")):
        for i in range(int(rng.integers(per_modality[0], per_modality[1] + 1))):
            rows.append((f"{prefix}{i + 1}", m, float(rng.uniform(*p_range))))
    for i in range(int(rng.integers(paired[0], paired[1] + 1))):
        rows.append((f"h{i + 1}", "paired", float(rng.uniform(*p_range))))
    return FeatureUniverse.build(rows, c=c)


def laziness_survey(
    n_universes: int = 100, n_train: int = 20, n_test: int = 2000, seed: int = 0
) -> dict:
    """Quantity and uni-modal laziness over random universes (diagnostic only)."""
    ss = np.random.SeedSequence(seed)
    rows = []
    for child in ss.spawn(n_universes):
        u_rng = np.random.default_rng(child)
        universe = random_universe(u_rng)
        run_seed = int(u_rng.integers(2**32))
        ens = run_strategy(universe, Strategy.UNI_ENSEMBLE, n_train, n_test, run_seed)
        joint = run_strategy(universe, Strategy.JOINT, n_train, n_test, run_seed)
        b = [len(ens.per_modality[m]) for m in (1, 2)]
        k = [joint.learned.counts["m1"], joint.learned.counts["m2"]]
        k_pa = joint.learned.counts["paired"]
        uni_mod_acc = {m: accuracy(ens.per_modality[m].ids, *_fresh(universe, n_test, run_seed)) for m in (1, 2)}
        rows.append(
            {
                "b": b,
                "k": k,
                "k_pa": k_pa,
                "quantity_laziness": sum(k) + k_pa <= min(b),
                "joint_modality_acc": [joint.modality_accuracy[1], joint.modality_accuracy[2]],
                "uni_modality_acc": [uni_mod_acc[1], uni_mod_acc[2]],
            }
        )
    viol = float(np.mean([not r["quantity_laziness"] for r in rows]))
    return {
        "n_universes": n_universes,
        "n_train": n_train,
        "quantity_laziness_violation_rate": viol,
        "rows": rows,
    }


def _fresh(universe, n_test, run_seed):
    # the same test points and coins run_strategy uses for this seed
    _, test_ss, vote_ss = np.random.SeedSequence(run_seed).spawn(3)
    return sample_points(universe, n_test, np.random.default_rng(test_ss)), np.random.default_rng(vote_ss)
