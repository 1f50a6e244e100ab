"""``mmlab`` command line: generate data, train, probe, simulate, report."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from mmlab import __version__, nn, probe, report, synthgen, theory
from mmlab import training as tr

logger = logging.getLogger("mmlab")

MODES = ("uni1", "uni2", "naive", "early", "umt", "aux", "dropout")
TRAIN_KEYS = ("lr", "max_iters", "seed", "early_stop_patience", "log_every")


class CLIError(Exception):
    """A user-facing failure; reported on stderr with exit code 1."""


def _emit(args, payload: dict, text: str) -> None:
    """JSON with ``--json``, the human summary otherwise."""
    if args.json:
        print(json.dumps(payload, indent=2, sort_keys=True, default=_jsonable))
    else:
        print(text)


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _load_data(path: str):
    ds, spec = synthgen.load(path, with_split=True)
    if spec is None:
        logger.warning("%s has no split sidecar; using the default seed-0 split", path)
        spec = synthgen.split(ds, seed=0)
    return ds, spec


def _train_cfg(args, file_cfg: dict) -> nn.TrainConfig:
    values = {k: file_cfg[k] for k in TRAIN_KEYS if k in file_cfg}
    for key in TRAIN_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    return nn.TrainConfig(**values)


def _read_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CLIError(f"cannot read config {path}: {exc}") from exc


def _option(args, cfg: dict, name: str, default):
    value = getattr(args, name, None)
    if value is not None:
        return value
    return cfg.get(name, default)


# -- commands ----------------------------------------------------------------


def cmd_gen(args) -> tuple[dict, str]:
    cfg = synthgen.GenConfig(
        variant=args.variant, d1=args.d1, d2=args.d2, d=args.d, N=args.n, seed=args.seed,
        gamma_balanced=not args.literal_gamma,
    )
    manifest = report.RunManifest("gen", cfg.to_dict(), {"data": args.seed, "split": args.split_seed})
    with report.Timer() as t:
        ds = synthgen.generate(cfg)
        spec = synthgen.split(ds, args.train_fraction, seed=args.split_seed)
    out = Path(args.out)
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        synthgen.save(ds, out, spec)
    except OSError as exc:
        raise CLIError(f"cannot write {out}: {exc}") from exc
    manifest.wall_time = t.elapsed
    manifest.outputs = [str(out), str(synthgen.split_path(out)), f"{out}.json"]
    _write_manifest(manifest, Path(f"{out}.manifest.json"))
    payload = {
        "path": str(out),
        "digest": report.file_digest(out),
        "n": len(ds),
        "class_counts": np.bincount(ds.labels, minlength=ds.n_classes).tolist(),
        "stats": ds.stats,
    }
    rates = ", ".join(f"{k}={v:.4g}" for k, v in ds.stats.items() if "rate" in k)
    text = f"wrote {out} ({len(ds)} rows, classes {payload['class_counts']}); acceptance: {rates}"
    return payload, text


def _write_manifest(manifest: report.RunManifest, path: Path) -> None:
    path.write_text(json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n")


def _teachers(args, ds, spec, cfg: nn.TrainConfig, hidden: int, manifest):
    if args.teacher1 and args.teacher2:
        out = []
        for path in (args.teacher1, args.teacher2):
            manifest.add_input(path)
            out.append(tr.ModelBundle.load(path))
        return tuple(out)
    if args.teacher1 or args.teacher2:
        raise CLIError("give both --teacher1 and --teacher2, or neither with --auto-teachers")
    if not args.auto_teachers:
        raise CLIError("umt needs --teacher1/--teacher2 or --auto-teachers")
    return tr.train_teachers(ds, spec, cfg, hidden=hidden)


def cmd_train(args) -> tuple[dict, str]:
    file_cfg = _read_config(args.config)
    cfg = _train_cfg(args, file_cfg)
    ds, spec = _load_data(args.data)
    head = _option(args, file_cfg, "head", "mlp")
    mode = args.mode
    default_hidden = {"uni1": tr.UNI_HIDDEN, "uni2": tr.UNI_HIDDEN, "early": tr.EARLY_FUSION_HIDDEN}
    hidden = _option(args, file_cfg, "hidden", default_hidden.get(mode, tr.FUSION_ENCODER_HIDDEN))
    manifest = report.RunManifest(f"train --mode {mode}", {}, {"train": cfg.seed, "data": ds.config.seed})
    manifest.add_input(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with report.Timer() as t:
        if mode in ("uni1", "uni2"):
            bundle = tr.train_unimodal(ds, spec, int(mode[-1]), cfg, hidden=hidden)
        elif mode == "naive":
            bundle = tr.train_naive_fusion(ds, spec, head, cfg, hidden=hidden)
        elif mode == "early":
            bundle = tr.train_early_fusion(ds, spec, cfg, hidden=hidden)
        elif mode == "umt":
            umt_cfg = tr.UMTConfig(
                _option(args, file_cfg, "lambda_task", 1.0),
                _option(args, file_cfg, "lambda_distill", 50.0),
            )
            t1, t2 = _teachers(args, ds, spec, cfg, hidden, manifest)
            bundle = tr.train_umt(ds, spec, t1, t2, umt_cfg, cfg, head, hidden)
        elif mode == "aux":
            bundle = tr.train_aux_ce(ds, spec, cfg, head, hidden)
        else:
            bundle = tr.train_modality_dropout(
                ds, spec, _option(args, file_cfg, "drop_prob", 1 / 3), cfg, head, hidden,
                independent=bool(file_cfg.get("independent_drops", False)),
            )
    manifest.config = bundle.config
    manifest.wall_time = t.elapsed
    model_path = out / "model.json"
    result_path = out / f"{mode}{report.RESULT_SUFFIX}"
    bundle.save(model_path)
    manifest.outputs = [str(model_path), str(result_path)]
    record = report.run_result(bundle, ds, spec)
    report.write_result(record, manifest, result_path)
    m = bundle.metrics
    text = (
        f"{mode}: train acc {m['train_acc']:.4f}, test acc {m['test_acc']:.4f}, "
        f"{m['iterations']} iterations, {m['wall_time']:.1f}s -> {model_path}"
    )
    return {**record, "model_path": str(model_path), "result_path": str(result_path)}, text


def cmd_probe(args) -> tuple[dict, str]:
    bundle = tr.ModelBundle.load(args.model)
    ds, spec = _load_data(args.data)
    reports = []
    for k in range(args.seeds):
        cfg = nn.TrainConfig(max_iters=args.max_iters, seed=args.seed + k, lr=args.lr)
        try:
            reports.append(probe.linear_probe(bundle, args.modality, ds, spec, cfg))
        except KeyError as exc:
            raise CLIError(f"model has no tap for modality {args.modality}: {exc}") from exc
    accs = [r.probe_test_acc for r in reports]
    payload = {
        "reports": [r.to_dict() for r in reports],
        "median": float(np.median(accs)),
        "min": float(np.min(accs)),
        "max": float(np.max(accs)),
    }
    text = (
        f"probe {reports[0].encoder_id}: median {payload['median']:.4f} "
        f"(min {payload['min']:.4f}, max {payload['max']:.4f}) over {len(accs)} seeds"
    )
    return payload, text


def cmd_ume(args) -> tuple[dict, str]:
    b1, b2 = tr.ModelBundle.load(args.model1), tr.ModelBundle.load(args.model2)
    ds, spec = _load_data(args.data)
    try:
        weights = tuple(float(w) for w in args.weights.split(","))
    except ValueError as exc:
        raise CLIError(f"bad --weights {args.weights!r}") from exc
    idx = spec.test_indices
    try:
        pred = tr.ume_predict(b1, b2, ds.X1[idx], ds.X2[idx], weights)
    except ValueError as exc:
        raise CLIError(str(exc)) from exc
    cm = probe.confusion(pred, ds.labels[idx], ds.n_classes)
    payload = {"accuracy": cm.accuracy, "weights": list(weights), "confusion": cm.to_dict()}
    return payload, f"UME test accuracy {cm.accuracy:.4f}\n{cm.to_csv()}"


def cmd_decide(args) -> tuple[dict, str]:
    ds, spec = _load_data(args.data)
    cfg = nn.TrainConfig(max_iters=args.max_iters, seed=args.seed)
    res = tr.decision_trick(ds, spec, cfg)
    text = (
        f"MM Clf {res.mm_clf_acc:.4f}  Avg Preds {res.avg_pred_acc:.4f}  ->  {res.recommendation}"
    )
    if res.warning:
        text += f"\nwarning: {res.warning}"
    return res.to_dict(), text


def cmd_theory(args) -> tuple[dict, str]:
    try:
        universe = (
            theory.FeatureUniverse.load(args.universe) if args.universe else theory.example_universe()
        )
    except (OSError, json.JSONDecodeError, KeyError, theory.UniverseError) as exc:
        raise CLIError(f"bad universe: {exc}") from exc
    seeds = range(args.seed, args.seed + args.trials)
    lazy = theory.laziness_report(universe, args.n_train, args.n_test, list(seeds), args.delta, args.boost)
    t2 = theory.theorem2_check(universe, args.boost, args.n_train, args.n_test, seeds)
    payload = {"laziness": lazy.to_dict(), "theorem2": t2.to_dict()}
    lines = [
        f"ensemble b={lazy.b_counts}  joint k={lazy.k_counts} k_pa={lazy.k_pa}",
        f"accuracy: ensemble {lazy.ens_acc:.4f}  joint {lazy.joint_acc:.4f}  boosted {lazy.boosted_acc:.4f}",
        f"performance bound: lhs {lazy.lhs:.4f} <= rhs {lazy.rhs:.4f} ({lazy.inequality_holds})",
        f"boost p0={args.boost}: S={t2.S}",
    ]
    # the ratio identity assumes eps = p / c for every feature
    if not any(f.custom for f in universe.features):
        lemma = theory.lemma_complementary_check(universe, args.lemma_trials, seed=args.seed)
        payload["lemma"] = lemma.to_dict()
        lines.append(
            f"complementary ratio {lemma.ratio:.4f} (c={universe.c}), "
            f"99% CI [{lemma.ci_low:.4f}, {lemma.ci_high:.4f}]"
        )
    return payload, "\n".join(lines)


def cmd_report(args) -> tuple[dict, str]:
    root = Path(getattr(args, "in"))
    if not root.is_dir():
        raise CLIError(f"{root} is not a directory")
    rep = report.build_report(report.load_results(root))
    if args.out:
        Path(args.out).write_text(json.dumps(rep, indent=2, sort_keys=True) + "\n")
    return rep, report.format_report(rep) or "empty report"


# -- parser ------------------------------------------------------------------


def _add_train_flags(p):
    p.add_argument("--seed", type=int, help="training seed (overrides the config file)")
    p.add_argument("--max-iters", dest="max_iters", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--early-stop-patience", dest="early_stop_patience", type=int)
    p.add_argument("--log-every", dest="log_every", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mmlab", description=__doc__)
    parser.add_argument("--version", action="version", version=f"mmlab {__version__}")
    parser.add_argument("--json", action="store_true", help="machine-readable JSON on stdout")
    parser.add_argument("--log-level", default="WARNING")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic dataset")
    p.add_argument("--variant", choices=("alpha", "beta", "gamma"), required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--d1", type=int, default=200)
    p.add_argument("--d2", type=int, default=100)
    p.add_argument("--d", type=int, default=50)
    p.add_argument("--n", type=int, default=5000)
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--train-fraction", type=float, default=0.8)
    p.add_argument("--literal-gamma", action="store_true",
                   help="do not balance gamma classes 1 and 2")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train one strategy")
    p.add_argument("--mode", choices=MODES, required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--config", help="JSON training config")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--head", choices=("linear", "mlp"))
    p.add_argument("--hidden", type=int)
    p.add_argument("--lambda-task", dest="lambda_task", type=float)
    p.add_argument("--lambda-distill", dest="lambda_distill", type=float)
    p.add_argument("--drop-prob", dest="drop_prob", type=float)
    p.add_argument("--teacher1")
    p.add_argument("--teacher2")
    p.add_argument("--auto-teachers", action="store_true", help="train umt teachers on the fly")
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("probe", help="linear probe of a frozen encoder")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--modality", type=int, choices=(1, 2), required=True)
    p.add_argument("--seeds", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iters", dest="max_iters", type=int, default=3000)
    p.add_argument("--lr", type=float, default=0.2)
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("ume", help="average two uni-modal models")
    p.add_argument("--model1", required=True)
    p.add_argument("--model2", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--weights", default="0.5,0.5")
    p.set_defaults(func=cmd_ume)

    p = sub.add_parser("decide", help="choose between UMT and UME")
    p.add_argument("--data", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iters", dest="max_iters", type=int, default=3000)
    p.set_defaults(func=cmd_decide)

    p = sub.add_parser("theory", help="feature-learning simulations and bound checks")
    p.add_argument("--universe", help="universe JSON; defaults to the worked example")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--boost", type=float, default=0.15)
    p.add_argument("--n-train", dest="n_train", type=int, default=10)
    p.add_argument("--n-test", dest="n_test", type=int, default=2000)
    p.add_argument("--lemma-trials", dest="lemma_trials", type=int, default=10**5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_theory)

    p = sub.add_parser("report", help="aggregate run results")
    p.add_argument("--in", required=True, help="directory searched for *.result.json")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return parser


def _thread_limit():
    value = os.environ.get("MMLAB_THREADS")
    if not value:
        return nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=max(1, int(value)))


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    try:
        with _thread_limit():
            payload, text = args.func(args)
    except (CLIError, synthgen.DatasetFormatError, synthgen.RejectionCapError, FileNotFoundError, ValueError) as exc:
        print(f"mmlab {args.command}: error: {exc}", file=sys.stderr)
        return 1
    _emit(args, payload, text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
