"""Run manifests, per-run result records and the aggregate report."""

from __future__ import annotations

import hashlib
import json
import logging
import platform
import statistics
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from mmlab import __version__, targets
from mmlab.probe import confusion
from mmlab.synthgen import SplitSpec, SyntheticDataset
from mmlab.training import ModelBundle

logger = logging.getLogger(__name__)

RESULT_SUFFIX = ".result.json"


def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    config: dict
    seeds: dict
    inputs: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    tool_version: str = __version__
    python: str = field(default_factory=platform.python_version)
    wall_time: float = 0.0

    def add_input(self, path: str | Path) -> None:
        self.inputs[str(path)] = file_digest(path)

    def verify_inputs(self) -> list[str]:
        """Paths whose current digest no longer matches the recorded one."""
        bad = []
        for path, digest in self.inputs.items():
            if not Path(path).exists() or file_digest(path) != digest:
                bad.append(path)
        return bad

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunManifest":
        return cls(**d)


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start


def run_result(bundle: ModelBundle, ds: SyntheticDataset, split: SplitSpec) -> dict:
    """Result record for one trained model: accuracies plus test confusion."""
    idx = split.test_indices
    pred = bundle.predict(ds.X1[idx], ds.X2[idx])
    cm = confusion(pred, ds.labels[idx], ds.n_classes)
    return {
        "kind": "train",
        "strategy": bundle.strategy,
        "variant": ds.config.variant.name.lower(),
        "data_seed": ds.config.seed,
        "train_seed": bundle.config.get("train", {}).get("seed"),
        "metrics": bundle.metrics,
        "confusion": cm.to_dict(),
        "model_digest": bundle.digest(),
    }


def write_result(record: dict, manifest: RunManifest, path: str | Path) -> None:
    record = dict(record, manifest=manifest.to_dict())
    Path(path).write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")


def load_results(root: str | Path) -> list[dict]:
    out = []
    for path in sorted(Path(root).rglob(f"*{RESULT_SUFFIX}")):
        try:
            out.append(json.loads(path.read_text()))
        except json.JSONDecodeError:
            logger.warning("skipping unreadable result file %s", path)
    return out


def _median(values):
    return statistics.median(values) if values else None


def build_report(results: list[dict]) -> dict:
    """Aggregate run records into the accuracy-table and confusion summaries."""
    if not results:
        logger.warning("no run results found; the report is empty")
        return {"accuracy": {}, "confusion": {}, "n_results": 0, "warning": "no results"}
    acc: dict[tuple[str, str], list[float]] = {}
    conf: dict[tuple[str, str], list] = {}
    for r in results:
        if r.get("kind") != "train":
            continue
        key = (r["variant"], r["strategy"])
        acc.setdefault(key, []).append(100.0 * r["metrics"]["test_acc"])
        if r.get("confusion"):
            conf.setdefault(key, []).append(r["confusion"]["row_percent"])

    accuracy = {}
    for variant, reference in targets.ACCURACY_REFERENCE.items():
        columns = {"uni1": "uni1", "uni2": "uni2", "multi": targets.ACCURACY_MULTI_STRATEGY}
        row = {}
        for col, strategy in columns.items():
            values = acc.get((variant, strategy), [])
            med = _median(values)
            band = targets.ACCURACY_BANDS[variant][col]
            row[col] = {
                "strategy": strategy,
                "median": med,
                "runs": values,
                "reference": reference[("uni1", "uni2", "multi").index(col)],
                "band": list(band),
                "pass": None if med is None else targets.in_band(med, band),
            }
        late = acc.get((variant, "naive"))
        if late:
            row["late_fusion"] = {"median": _median(late), "runs": late}
        if any(v["median"] is not None for k, v in row.items() if k in columns):
            accuracy[variant] = row

    confusion_summary = {}
    for strategy in ("uni1", "uni2"):
        mats = conf.get(("gamma", strategy))
        if not mats:
            continue
        med = np.median(np.array(mats, dtype=np.float64), axis=0)
        checks = targets.confusion_checks(med)
        confusion_summary[strategy] = {
            "row_percent": med.round(2).tolist(),
            "reference": [list(r) for r in targets.CONFUSION_REFERENCE],
            "checks": checks,
            "pass": all(checks.values()),
            "n_runs": len(mats),
        }
    return {"accuracy": accuracy, "confusion": confusion_summary, "n_results": len(results)}


def format_report(report: dict) -> str:
    lines = []
    if report.get("warning"):
        lines.append(f"warning: {report['warning']}")
    if report["accuracy"]:
        lines.append("accuracy (median %, reference in brackets)")
        lines.append(f"{'dataset':8} {'uni1':>16} {'uni2':>16} {'multi':>16}")
        for variant, row in report["accuracy"].items():
            cells = []
            for col in ("uni1", "uni2", "multi"):
                c = row[col]
                if c["median"] is None:
                    cells.append(f"{'-':>16}")
                else:
                    flag = "ok" if c["pass"] else "FAIL"
                    cells.append(f"{c['median']:6.1f} [{c['reference']:5.1f}] {flag:4}")
            lines.append(f"{variant:8} " + " ".join(cells))
    for strategy, t in report["confusion"].items():
        lines.append(f"gamma {strategy} confusion (row %, reference in brackets)")
        for row, reference in zip(t["row_percent"], t["reference"]):
            lines.append("  " + "  ".join(f"{v:6.1f} [{p:5.1f}]" for v, p in zip(row, reference)))
        lines.append(f"  {'pass' if t['pass'] else 'FAIL'}: {t['checks']}")
    return "\n".join(lines)
