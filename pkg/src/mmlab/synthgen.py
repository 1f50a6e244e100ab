"""Synthetic two-modality datasets (alpha, beta, gamma).

Each dataset is built from a shared pair of random projections ``P1``
(d1 x d) and ``P2`` (d2 x d) applied to unit-norm latent vectors:

* alpha: one latent ``x`` per sample, label from which side of a random
  hyperplane ``z`` it falls on (margin 0.1). Both views carry the label.
* beta: two independent latents; label from the sign of ``x1 . x2``
  (margin 0.25). Neither view alone is informative.
* gamma: 2500 alpha-style class-0 points, then 5000 beta-style points
  drawn from the far side of ``z`` and labelled 1 or 2. By default
  classes 1 and 2 are filled to 2500 each; draws for a full class are
  discarded.

Draw order from the xoshiro256** stream is part of the file contract:
P1 row-major, P2 row-major, z (alpha/gamma), then per-sample latents in
the order they are tested.
"""

from __future__ import annotations

import enum
import json
import logging
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from mmlab import rng

logger = logging.getLogger(__name__)

GENERATOR_VERSION = "mmlab-synthgen/1"
GAMMA_CLASS0 = 2500
GAMMA_TOTAL = 7500
ALPHA_MAX_TRIES_PER_SAMPLE = 10**7
PAIRED_MAX_TOTAL_DRAWS = 10**8

DATA_MAGIC = b"MMLZ"
SPLIT_MAGIC = b"MMSP"
FORMAT_VERSION = 1
_DATA_HEADER = struct.Struct("<4sIBIIIIQ")
_SPLIT_HEADER = struct.Struct("<4sIII")


class Variant(enum.IntEnum):
    ALPHA = 0
    BETA = 1
    GAMMA = 2

    @classmethod
    def parse(cls, name: str | int | "Variant") -> "Variant":
        if isinstance(name, cls):
            return name
        if isinstance(name, int):
            return cls(name)
        return cls[name.upper()]

    @property
    def n_classes(self) -> int:
        return 3 if self is Variant.GAMMA else 2


class DatasetFormatError(ValueError):
    """Base class for on-disk dataset problems."""


class BadMagicError(DatasetFormatError):
    pass


class TruncatedFileError(DatasetFormatError):
    pass


class InvariantError(DatasetFormatError):
    pass


class RejectionCapError(RuntimeError):
    """Rejection sampling ran past its draw budget."""


@dataclass(frozen=True)
class GenConfig:
    variant: Variant = Variant.ALPHA
    d1: int = 200
    d2: int = 100
    d: int = 50
    N: int = 5000
    seed: int = 0
    # gamma only: cap classes 1 and 2 at 2500 rows each
    gamma_balanced: bool = True

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant.parse(self.variant))
        for name in ("d1", "d2", "d", "N"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.variant is Variant.GAMMA and self.N != GAMMA_TOTAL:
            logger.warning("gamma has a fixed size of %d samples; ignoring N=%d", GAMMA_TOTAL, self.N)
            object.__setattr__(self, "N", GAMMA_TOTAL)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["variant"] = self.variant.name.lower()
        return d


@dataclass
class SyntheticDataset:
    X1: np.ndarray
    X2: np.ndarray
    labels: np.ndarray
    config: GenConfig
    version: str = GENERATOR_VERSION
    stats: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    @property
    def n_classes(self) -> int:
        return self.config.variant.n_classes

    def __len__(self) -> int:
        return len(self.labels)

    def view(self, modality: int) -> np.ndarray:
        if modality == 1:
            return self.X1
        if modality == 2:
            return self.X2
        raise ValueError(f"modality must be 1 or 2, got {modality}")

    def validate(self) -> None:
        n = len(self.labels)
        if self.X1.shape[0] != n or self.X2.shape[0] != n:
            raise InvariantError("row counts of X1, X2 and labels differ")
        if self.X1.shape[1] != self.config.d1 or self.X2.shape[1] != self.config.d2:
            raise InvariantError("feature widths do not match the config")
        if n and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise InvariantError("label outside the declared class range")
        if not (np.isfinite(self.X1).all() and np.isfinite(self.X2).all()):
            raise InvariantError("non-finite feature values")
        if self.config.variant is Variant.GAMMA:
            zeros = int(np.sum(self.labels == 0))
            if n != GAMMA_TOTAL or zeros != GAMMA_CLASS0:
                raise InvariantError(
                    f"gamma needs {GAMMA_CLASS0} class-0 rows out of {GAMMA_TOTAL}, "
                    f"got {zeros} of {n}"
                )

    def equals(self, other: "SyntheticDataset") -> bool:
        return (
            self.config == other.config
            and np.array_equal(self.X1, other.X1)
            and np.array_equal(self.X2, other.X2)
            and np.array_equal(self.labels, other.labels)
        )


@dataclass(frozen=True)
class SplitSpec:
    test_indices: np.ndarray
    n_total: int
    train_fraction: float = 0.8

    @property
    def train_indices(self) -> np.ndarray:
        mask = np.ones(self.n_total, dtype=bool)
        mask[self.test_indices] = False
        return np.flatnonzero(mask)

    def validate(self) -> None:
        t = self.test_indices
        if t.size and (t.min() < 0 or t.max() >= self.n_total):
            raise InvariantError("split index out of range")
        if np.any(np.diff(t) <= 0):
            raise InvariantError("split indices must be sorted and unique")


# -- generation kernels ------------------------------------------------------


@njit(cache=True)
def _dot(a, b):
    # sequential sum; np.dot would defer to BLAS and its reduction order
    acc = 0.0
    for i in range(a.size):
        acc += a[i] * b[i]
    return acc


@njit(cache=True)
def _unit_gaussian(state, out):
    rng.fill_gaussian(state, out)
    norm = np.sqrt(_dot(out, out))
    for i in range(out.size):
        out[i] /= norm


@njit(cache=True)
def _alpha_latents(state, z, n, max_tries):
    d = z.size
    lat = np.empty((n, d))
    y = np.empty(n, dtype=np.int64)
    x = np.empty(d)
    draws = 0
    for i in range(n):
        tries = 0
        while True:
            _unit_gaussian(state, x)
            draws += 1
            tries += 1
            dot = _dot(x, z)
            if abs(dot) > 0.1:
                break
            if tries >= max_tries:
                return lat, y, draws, i
        lat[i] = x
        y[i] = 1 if dot > 0.1 else 0
    return lat, y, draws, n


@njit(cache=True)
def _beta_latents(state, d, n, max_draws):
    lat1 = np.empty((n, d))
    lat2 = np.empty((n, d))
    y = np.empty(n, dtype=np.int64)
    x1 = np.empty(d)
    x2 = np.empty(d)
    draws = 0
    for i in range(n):
        while True:
            _unit_gaussian(state, x1)
            _unit_gaussian(state, x2)
            draws += 1
            dot = _dot(x1, x2)
            if abs(dot) > 0.25:
                break
            if draws >= max_draws:
                return lat1, lat2, y, draws, i
        lat1[i] = x1
        lat2[i] = x2
        y[i] = 1 if dot > 0.25 else 0
    return lat1, lat2, y, draws, n


@njit(cache=True)
def _gamma_latents(state, z, n0, n_total, quota, max_draws):
    d = z.size
    lat1 = np.empty((n_total, d))
    lat2 = np.empty((n_total, d))
    y = np.empty(n_total, dtype=np.int64)
    x1 = np.empty(d)
    x2 = np.empty(d)
    draws0 = 0
    count = 0
    while count < n0:
        _unit_gaussian(state, x1)
        draws0 += 1
        if _dot(x1, z) >= 0.1:
            lat1[count] = x1
            lat2[count] = x1
            y[count] = 0
            count += 1
        elif draws0 >= max_draws:
            return lat1, lat2, y, draws0, 0, count
    draws1 = 0
    filled = np.zeros(3, dtype=np.int64)
    while count < n_total:
        _unit_gaussian(state, x1)
        _unit_gaussian(state, x2)
        draws1 += 1
        if draws1 >= max_draws:
            return lat1, lat2, y, draws0, draws1, count
        if _dot(x1, z) > -0.1 or _dot(x2, z) > -0.1:
            continue
        dot = _dot(x1, x2)
        if abs(dot) <= 0.25:
            continue
        label = 2 if dot > 0.25 else 1
        if filled[label] >= quota:
            continue
        filled[label] += 1
        lat1[count] = x1
        lat2[count] = x2
        y[count] = label
        count += 1
    return lat1, lat2, y, draws0, draws1, count


@njit(cache=True)
def _project(P, lat):
    # fixed summation order so bytes do not depend on the BLAS build
    n, d = lat.shape
    m = P.shape[0]
    out = np.empty((n, m), dtype=np.float32)
    for i in range(n):
        for r in range(m):
            acc = 0.0
            for k in range(d):
                acc += P[r, k] * lat[i, k]
            out[i, r] = np.float32(acc)
    return out


def _projections(state, cfg: GenConfig) -> tuple[np.ndarray, np.ndarray]:
    P1 = np.empty((cfg.d1, cfg.d))
    P2 = np.empty((cfg.d2, cfg.d))
    rng.fill_uniform(state, P1, -0.5, 0.5)
    rng.fill_uniform(state, P2, -0.5, 0.5)
    return P1, P2


def _hyperplane(state, d: int) -> np.ndarray:
    z = np.empty(d)
    _unit_gaussian(state, z)
    return z


def _check_norms(*lats: np.ndarray) -> None:
    for lat in lats:
        norms = np.linalg.norm(lat, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            raise AssertionError("latent vector not unit length")


def gen_alpha(cfg: GenConfig) -> SyntheticDataset:
    if cfg.variant is not Variant.ALPHA:
        raise ValueError("gen_alpha needs an ALPHA config")
    state = rng.seed_state(cfg.seed)
    P1, P2 = _projections(state, cfg)
    z = _hyperplane(state, cfg.d)
    lat, y, draws, done = _alpha_latents(state, z, cfg.N, ALPHA_MAX_TRIES_PER_SAMPLE)
    if done < cfg.N:
        raise RejectionCapError(
            f"alpha: sample {done} exceeded {ALPHA_MAX_TRIES_PER_SAMPLE} rejections"
        )
    _check_norms(lat)
    dots = lat @ z
    assert np.all(np.abs(dots) > 0.1) and np.array_equal(y, (dots > 0.1).astype(np.int64))
    stats = {"draws": int(draws), "acceptance_rate": cfg.N / draws}
    return SyntheticDataset(_project(P1, lat), _project(P2, lat), y, cfg, stats=stats)


def gen_beta(cfg: GenConfig) -> SyntheticDataset:
    if cfg.variant is not Variant.BETA:
        raise ValueError("gen_beta needs a BETA config")
    state = rng.seed_state(cfg.seed)
    P1, P2 = _projections(state, cfg)
    lat1, lat2, y, draws, done = _beta_latents(state, cfg.d, cfg.N, PAIRED_MAX_TOTAL_DRAWS)
    if done < cfg.N:
        raise RejectionCapError(
            f"beta: {draws} draws produced only {done}/{cfg.N} samples"
        )
    _check_norms(lat1, lat2)
    dots = np.einsum("ij,ij->i", lat1, lat2)
    assert np.all(np.abs(dots) > 0.25) and np.array_equal(y, (dots > 0.25).astype(np.int64))
    stats = {"draws": int(draws), "acceptance_rate": cfg.N / draws}
    return SyntheticDataset(_project(P1, lat1), _project(P2, lat2), y, cfg, stats=stats)


def gen_gamma(cfg: GenConfig) -> SyntheticDataset:
    if cfg.variant is not Variant.GAMMA:
        raise ValueError("gen_gamma needs a GAMMA config")
    state = rng.seed_state(cfg.seed)
    P1, P2 = _projections(state, cfg)
    z = _hyperplane(state, cfg.d)
    n_paired = GAMMA_TOTAL - GAMMA_CLASS0
    quota = n_paired // 2 if cfg.gamma_balanced else n_paired
    lat1, lat2, y, draws0, draws1, done = _gamma_latents(
        state, z, GAMMA_CLASS0, GAMMA_TOTAL, quota, PAIRED_MAX_TOTAL_DRAWS
    )
    if done < GAMMA_TOTAL:
        raise RejectionCapError(
            f"gamma: draw cap hit after {done}/{GAMMA_TOTAL} samples"
        )
    _check_norms(lat1, lat2)
    head, tail = slice(0, GAMMA_CLASS0), slice(GAMMA_CLASS0, GAMMA_TOTAL)
    assert np.all(lat1[head] @ z >= 0.1)
    assert np.all(lat1[tail] @ z <= -0.1) and np.all(lat2[tail] @ z <= -0.1)
    dots = np.einsum("ij,ij->i", lat1[tail], lat2[tail])
    assert np.all(np.abs(dots) > 0.25)
    assert np.array_equal(y[tail], np.where(dots > 0.25, 2, 1))
    stats = {
        "draws": int(draws0 + draws1),
        "acceptance_rate_class0": GAMMA_CLASS0 / draws0,
        "acceptance_rate_paired": (GAMMA_TOTAL - GAMMA_CLASS0) / draws1,
    }
    return SyntheticDataset(_project(P1, lat1), _project(P2, lat2), y, cfg, stats=stats)


def generate(cfg: GenConfig) -> SyntheticDataset:
    return {Variant.ALPHA: gen_alpha, Variant.BETA: gen_beta, Variant.GAMMA: gen_gamma}[
        cfg.variant
    ](cfg)


def split(
    ds: SyntheticDataset | int,
    train_fraction: float = 0.8,
    seed: int = 0,
    stratify: bool = False,
) -> SplitSpec:
    """Random train/test split; the first ceil(fraction * N) permuted rows train.

    With ``stratify`` the same rule is applied within each class.
    """
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must lie strictly between 0 and 1")
    n = ds if isinstance(ds, int) else len(ds)
    gen = rng.Xoshiro256(seed)
    if stratify and not isinstance(ds, int):
        test = []
        for k in range(ds.n_classes):
            members = np.flatnonzero(ds.labels == k)
            perm = gen.permutation(len(members))
            n_train = _n_train(len(members), train_fraction)
            test.append(members[perm[n_train:]])
        test_idx = np.sort(np.concatenate(test))
    else:
        perm = gen.permutation(n)
        test_idx = np.sort(perm[_n_train(n, train_fraction):])
    spec = SplitSpec(test_idx.astype(np.int64), n, train_fraction)
    spec.validate()
    return spec


def _n_train(n: int, fraction: float) -> int:
    # round first so 0.8 * 5000 = 4000.000...01 does not ceil to 4001
    return math.ceil(round(fraction * n, 9))


# -- file format -------------------------------------------------------------


def save(ds: SyntheticDataset, path: str | Path, split_spec: SplitSpec | None = None) -> None:
    """Write the binary dataset, plus ``<path>.split`` and ``<path>.json`` sidecars."""
    path = Path(path)
    cfg = ds.config
    n = len(ds)
    header = _DATA_HEADER.pack(
        DATA_MAGIC, FORMAT_VERSION, int(cfg.variant), ds.n_classes, n, cfg.d1, cfg.d2, cfg.seed
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(ds.X1, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(ds.X2, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(ds.labels, dtype="<u4").tobytes())
    if split_spec is not None:
        save_split(split_spec, split_path(path))
    sidecar = {
        "config": cfg.to_dict(),
        "n_classes": ds.n_classes,
        "n_samples": n,
        "generator_version": ds.version,
        "stats": ds.stats,
    }
    if split_spec is not None:
        sidecar["split"] = {
            "train_fraction": split_spec.train_fraction,
            "n_test": int(split_spec.test_indices.size),
        }
    Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")


def split_path(path: str | Path) -> Path:
    return Path(str(path) + ".split")


def save_split(spec: SplitSpec, path: str | Path) -> None:
    with open(path, "wb") as fh:
        fh.write(_SPLIT_HEADER.pack(SPLIT_MAGIC, FORMAT_VERSION, spec.n_total, spec.test_indices.size))
        fh.write(spec.test_indices.astype("<u4").tobytes())


def load_split(path: str | Path) -> SplitSpec:
    raw = Path(path).read_bytes()
    if len(raw) < _SPLIT_HEADER.size:
        raise TruncatedFileError(f"{path}: truncated file (header)")
    magic, version, n, n_test = _SPLIT_HEADER.unpack_from(raw)
    if magic != SPLIT_MAGIC:
        raise BadMagicError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise DatasetFormatError(f"{path}: unsupported version {version}")
    body = raw[_SPLIT_HEADER.size:]
    if len(body) != 4 * n_test:
        raise TruncatedFileError(f"{path}: truncated file (test indices)")
    idx = np.frombuffer(body, dtype="<u4").astype(np.int64)
    train_fraction = round(1 - n_test / n, 6) if n else 0.8
    spec = SplitSpec(idx, n, train_fraction)
    spec.validate()
    return spec


def load(path: str | Path, with_split: bool = False):
    """Read a dataset file; with ``with_split`` also return its split sidecar."""
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise TruncatedFileError(f"{path}: truncated file (header)")
    if raw[:4] != DATA_MAGIC:
        raise BadMagicError(f"{path}: bad magic {raw[:4]!r}")
    if len(raw) < _DATA_HEADER.size:
        raise TruncatedFileError(f"{path}: truncated file (header)")
    _, version, variant, n_classes, n, d1, d2, seed = _DATA_HEADER.unpack_from(raw)
    if version != FORMAT_VERSION:
        raise DatasetFormatError(f"{path}: unsupported version {version}")
    try:
        variant = Variant(variant)
    except ValueError as exc:
        raise InvariantError(f"{path}: unknown variant code {variant}") from exc
    if n_classes != variant.n_classes:
        raise InvariantError(f"{path}: {variant.name} must have {variant.n_classes} classes")

    offset = _DATA_HEADER.size
    blocks = []
    for count, dtype, what in ((n * d1, "<f4", "X1"), (n * d2, "<f4", "X2"), (n, "<u4", "label")):
        nbytes = 4 * count
        if len(raw) < offset + nbytes:
            raise TruncatedFileError(f"{path}: truncated file ({what} block)")
        blocks.append(np.frombuffer(raw, dtype=dtype, count=count, offset=offset))
        offset += nbytes
    if len(raw) != offset:
        raise DatasetFormatError(f"{path}: {len(raw) - offset} trailing bytes")

    sidecar = Path(str(path) + ".json")
    meta = json.loads(sidecar.read_text())["config"] if sidecar.exists() else {}
    cfg = GenConfig(
        variant=variant, d1=d1, d2=d2, d=meta.get("d", 50), N=n, seed=seed,
        gamma_balanced=meta.get("gamma_balanced", True),
    )
    ds = SyntheticDataset(
        X1=blocks[0].reshape(n, d1).astype(np.float32),
        X2=blocks[1].reshape(n, d2).astype(np.float32),
        labels=blocks[2].astype(np.int64),
        config=cfg,
    )
    if not with_split:
        return ds
    sp = split_path(path)
    spec = load_split(sp) if sp.exists() else None
    if spec is not None and spec.n_total != n:
        raise InvariantError(f"{sp}: split covers {spec.n_total} rows, dataset has {n}")
    return ds, spec
