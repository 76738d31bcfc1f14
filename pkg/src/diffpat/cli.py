"""Command-line pipeline: generate, train, extract, eval, bench.

Every command writes its primary artifacts plus a JSON manifest recording
the resolved configuration, seed, input hashes, and timings. Reruns with
the same flags and seed are byte-identical except for the clearly marked
timing fields of the manifest.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time
from dataclasses import asdict

import numpy as np

from . import __version__
from .data import load_sparse, save_sparse, DataError
from .model import load_checkpoint, save_checkpoint
from .train import TrainConfig, TrainError, train
from .extract import DifferentialPatterns, default_grid, grid_search_thresholds
from .evaluate import summarize
from .synth import GroundTruth, SpecError, SyntheticSpec, generate


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _atomic_write(path, text: str) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_manifest(out_dir, command, config: dict, seed, inputs: dict,
                   timings: dict) -> None:
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "input_hashes": {k: _sha256(v) for k, v in inputs.items()},
        "version": __version__,
        "timings_seconds": timings,  # run-dependent; excluded from identity checks
    }
    _atomic_write(os.path.join(out_dir, f"{command}.manifest.json"),
                  json.dumps(manifest, indent=2) + "\n")


def _parse_grid(text: str | None) -> list[float] | None:
    if text is None:
        return None
    return [float(t) for t in text.split(",") if t.strip()]


def _load_config_file(path) -> dict:
    """Plain key=value lines; '#' starts a comment."""
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise DataError(f"{path}: expected key=value at line {lineno}")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key] = value
    return out


def build_train_config(args) -> TrainConfig:
    cfg = TrainConfig()
    file_values = _load_config_file(args.config) if args.config else {}
    for key, value in file_values.items():
        if not hasattr(cfg, key):
            raise TrainError(f"unknown config key {key!r}")
        current = getattr(cfg, key)
        setattr(cfg, key, type(current)(value) if not isinstance(current, str) else value)
    for key in ("h", "lambda_c", "kappa0", "lambda0", "sched_gamma", "lr",
                "batch_size", "epochs", "seed", "init_lo", "init_hi", "optimizer"):
        flag = getattr(args, key, None)
        if flag is not None:
            setattr(cfg, key, flag)
    cfg.validate()
    return cfg


def cmd_generate(args) -> int:
    spec = SyntheticSpec(
        n_per_class=args.n_per_class, m=args.m, K=args.classes,
        additive_flips=args.additive, destructive_prob=args.destructive,
        label_fidelity=args.label_fidelity, seed=args.seed,
    )
    if args.low_dim:
        from .synth import low_dim_variant
        spec = low_dim_variant(spec)
    t0 = time.perf_counter()
    D, truth = generate(spec, workers=args.workers)
    os.makedirs(args.out, exist_ok=True)
    data_path = os.path.join(args.out, "data.txt")
    label_path = os.path.join(args.out, "labels.txt")
    save_sparse(D, data_path, label_path)
    _atomic_write(os.path.join(args.out, "ground_truth.json"),
                  truth.to_json(spec) + "\n")
    write_manifest(args.out, "generate", asdict(spec), args.seed, {},
                   {"generate": time.perf_counter() - t0})
    print(f"wrote {D.n} rows x {D.m} features, K={D.K} -> {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = build_train_config(args)
    D = load_sparse(args.data, args.labels, m=args.features)
    initial = load_checkpoint(args.resume) if args.resume else None
    t0 = time.perf_counter()
    params, report = train(D, cfg, initial=initial)
    elapsed = time.perf_counter() - t0
    os.makedirs(args.out, exist_ok=True)
    ckpt = os.path.join(args.out, "model.ckpt")
    save_checkpoint(params, ckpt)
    report.write_csv(os.path.join(args.out, "train_report.csv"))
    _atomic_write(os.path.join(args.out, "train_report.json"), report.to_json() + "\n")
    inputs = {"data": args.data, "labels": args.labels}
    if args.resume:
        inputs["resume"] = args.resume
    write_manifest(args.out, "train", asdict(cfg), cfg.seed, inputs,
                   {"train": elapsed})
    last = report.epochs[-1] if report.epochs else None
    if last:
        print(f"epoch {last.epoch}: recon {last.recon_loss:.4f} "
              f"class {last.class_loss:.4f} ({elapsed:.1f}s)")
    return 0


def cmd_extract(args) -> int:
    params = load_checkpoint(args.checkpoint)
    D = load_sparse(args.data, args.labels, m=args.features)
    if params.m != D.m:
        raise DataError(f"checkpoint has m={params.m} but dataset has m={D.m}")
    t0 = time.perf_counter()
    te, tc, patterns = grid_search_thresholds(
        params, D, _parse_grid(args.grid_e), _parse_grid(args.grid_c),
        lambda_c=args.lambda_c)
    os.makedirs(args.out, exist_ok=True)
    _atomic_write(os.path.join(args.out, "patterns.json"), patterns.to_json() + "\n")
    _atomic_write(os.path.join(args.out, "patterns.txt"), patterns.to_text())
    write_manifest(args.out, "extract",
                   {"tau_e": te, "tau_c": tc, "lambda_c": args.lambda_c,
                    "grid_e": _parse_grid(args.grid_e) or default_grid(),
                    "grid_c": _parse_grid(args.grid_c) or default_grid()},
                   None, {"checkpoint": args.checkpoint, "data": args.data,
                          "labels": args.labels},
                   {"extract": time.perf_counter() - t0})
    print(f"tau_e={te} tau_c={tc}: {patterns.total_patterns()} patterns, "
          f"{len(patterns.orphans)} orphans")
    return 0


def cmd_eval(args) -> int:
    with open(args.patterns, "r", encoding="utf-8") as fh:
        patterns = DifferentialPatterns.from_json(fh.read())
    D = load_sparse(args.data, args.labels, m=args.features)
    truth = None
    if args.truth:
        with open(args.truth, "r", encoding="utf-8") as fh:
            truth = GroundTruth.from_json(fh.read())
    t0 = time.perf_counter()
    report = summarize(patterns, D, truth)
    os.makedirs(args.out, exist_ok=True)
    _atomic_write(os.path.join(args.out, "eval_report.json"), report.to_json() + "\n")
    report.write_curve_csv(os.path.join(args.out, "curve.csv"))
    inputs = {"patterns": args.patterns, "data": args.data, "labels": args.labels}
    if args.truth:
        inputs["truth"] = args.truth
    write_manifest(args.out, "eval", {}, None, inputs,
                   {"eval": time.perf_counter() - t0})
    line = f"#P={report.pattern_count} auc={report.auc:.3f}"
    if report.soft_f1 is not None:
        line += f" soft_f1={report.soft_f1:.3f}"
    print(line)
    return 0


def derive_seed(master_seed: int, axis: str, value, rep: int) -> int:
    """Stable per-grid-point seed: sha256 over (master seed, axis, value, rep)."""
    key = f"{master_seed}|{axis}|{value}|{rep}".encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "little")


def run_bench_point(axis: str, value, rep: int, args) -> dict:
    seed = derive_seed(args.seed, axis, value, rep)
    spec = SyntheticSpec(n_per_class=args.n_per_class, m=args.m, K=args.classes,
                         seed=seed)
    if axis == "features":
        spec.m = int(value)
    elif axis == "classes":
        spec.K = int(value)
    elif axis == "additive":
        spec.additive_flips = int(value)
    elif axis == "destructive":
        spec.destructive_prob = float(value)
    else:
        raise ValueError(f"unknown sweep axis {axis!r}")
    D, truth = generate(spec)
    cfg = TrainConfig(h=args.h, lambda_c=args.lambda_c, epochs=args.epochs,
                      batch_size=args.batch_size, lr=args.lr, seed=seed)
    t0 = time.perf_counter()
    params, _ = train(D, cfg)
    train_seconds = time.perf_counter() - t0
    _, _, patterns = grid_search_thresholds(params, D, lambda_c=cfg.lambda_c)
    report = summarize(patterns, D, truth)
    return {"axis_value": value, "rep": rep, "soft_f1": report.soft_f1,
            "auc": report.auc, "train_seconds": train_seconds, "error": ""}


def cmd_bench(args) -> int:
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    rows = []
    for value in values:
        for rep in range(args.reps):
            try:
                rows.append(run_bench_point(args.axis, value, rep, args))
            except (DataError, SpecError, TrainError, ValueError) as exc:
                rows.append({"axis_value": value, "rep": rep, "soft_f1": "",
                             "auc": "", "train_seconds": "", "error": str(exc)})
    os.makedirs(args.out, exist_ok=True)
    sweep_path = os.path.join(args.out, "sweep.csv")
    with open(sweep_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=["axis_value", "rep", "soft_f1", "auc",
                                           "train_seconds", "error"],
                           lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    write_manifest(args.out, "bench",
                   {"axis": args.axis, "values": values, "reps": args.reps},
                   args.seed, {}, {})
    print(f"wrote {len(rows)} sweep rows -> {sweep_path}")
    return 0


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--h", type=int, default=None, help="hidden width")
    p.add_argument("--lambda-c", dest="lambda_c", type=float, default=None)
    p.add_argument("--kappa0", type=float, default=None)
    p.add_argument("--lambda0", type=float, default=None)
    p.add_argument("--sched-gamma", dest="sched_gamma", type=float, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--init-lo", dest="init_lo", type=float, default=None)
    p.add_argument("--init-hi", dest="init_hi", type=float, default=None)
    p.add_argument("--optimizer", choices=["sgd", "adam"], default=None)


def _add_data_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=True, help="sparse data file")
    p.add_argument("--labels", required=True, help="label file")
    p.add_argument("--features", type=int, default=None,
                   help="override the inferred feature count")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="diffpat",
        description="Learn and score class-differential conjunctive patterns "
                    "from labeled binary data.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("generate", help="synthesize a planted-pattern dataset")
    g.add_argument("--m", type=int, required=True)
    g.add_argument("--classes", type=int, default=2)
    g.add_argument("--n-per-class", dest="n_per_class", type=int, default=1000)
    g.add_argument("--additive", type=int, default=10)
    g.add_argument("--destructive", type=float, default=0.025)
    g.add_argument("--label-fidelity", dest="label_fidelity", type=float, default=0.9)
    g.add_argument("--low-dim", action="store_true",
                   help="use the low-dimensional generation regime")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--workers", type=int, default=1,
                   help="row-generation processes; output is identical at any count")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train the model on a dataset")
    _add_data_flags(t)
    _add_train_flags(t)
    t.add_argument("--config", default=None, help="key=value config file")
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--resume", default=None, help="checkpoint to continue from")
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("extract", help="extract patterns from a checkpoint")
    e.add_argument("--checkpoint", required=True)
    _add_data_flags(e)
    e.add_argument("--grid-e", dest="grid_e", default=None,
                   help="comma-separated encoder thresholds")
    e.add_argument("--grid-c", dest="grid_c", default=None,
                   help="comma-separated classifier thresholds")
    e.add_argument("--lambda-c", dest="lambda_c", type=float, default=1.0)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_extract)

    v = sub.add_parser("eval", help="score a pattern file against a dataset")
    v.add_argument("--patterns", required=True)
    _add_data_flags(v)
    v.add_argument("--truth", default=None, help="ground-truth JSON")
    v.add_argument("--out", required=True)
    v.set_defaults(func=cmd_eval)

    b = sub.add_parser("bench", help="generate/train/extract/eval sweep")
    b.add_argument("--axis", required=True,
                   choices=["features", "classes", "additive", "destructive"])
    b.add_argument("--values", required=True, help="comma-separated axis values")
    b.add_argument("--reps", type=int, default=1)
    b.add_argument("--m", type=int, default=1000)
    b.add_argument("--classes", type=int, default=2)
    b.add_argument("--n-per-class", dest="n_per_class", type=int, default=1000)
    b.add_argument("--h", type=int, default=100)
    b.add_argument("--lambda-c", dest="lambda_c", type=float, default=1.0)
    b.add_argument("--epochs", type=int, default=25)
    b.add_argument("--batch-size", dest="batch_size", type=int, default=64)
    b.add_argument("--lr", type=float, default=0.005)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (DataError, SpecError, TrainError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
