"""Command-line entry point: ``vagcn <command> [--config FILE] [--key value ...]``.

Settings come from command defaults, then an optional ``key = value`` config
file, then command-line flags. Exit codes: 0 success, 2 usage, 3 numeric
failure, 4 artifact mismatch, 5 gradient check failure.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_ARTIFACT, EXIT_GRADCHECK = 0, 2, 3, 4, 5


class UsageError(Exception):
    pass


class ArtifactError(Exception):
    pass


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _default_threads() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)


# key -> (default, parser, help); the same table drives flags, config files and --print-config
COMMON = {
    "seed": (0, int, "random seed"),
    "threads": (None, int, "BLAS thread count (default: available cores)"),
}
COMMANDS = {
    "gen-data": {
        "classes": ("sphere,cube,cylinder,cone,torus,pyramid,capsule,disk", str,
                    "comma-separated primitives (or part categories with --task part_segmentation)"),
        "per_class": (50, int, "samples per class"),
        "points": (256, int, "points per sample"),
        "task": ("classification", str, "classification or part_segmentation"),
        "orientation": ("upright", str, "upright (spin about z) or full (any rotation)"),
        "out": ("data.vapc", str, "output container path"),
    },
    "train": {
        "data": ("", str, "training container (required)"),
        "test_data": ("", str, "evaluation container (default: the training set)"),
        "epochs": (60, int, "training epochs"),
        "batch_size": (16, int, "mini-batch size"),
        "lr": (1e-3, float, "initial learning rate"),
        "weight_decay": (1e-4, float, "decoupled weight decay"),
        "augment": (True, _bool, "random scale/jitter/shift during training"),
        "variant": ("v3", str, "parallel layout v0..v3"),
        "channels": ("dual", str, "edgeconv_only, vaconv_only or dual"),
        "agg": ("sum", str, "local aggregation: sum or weighted_max"),
        "angular": ("cos_of_ratio", str, "angular factor: cos_of_ratio or ratio"),
        "graph_space": ("coords", str, "EdgeConv graphs in coords or features space"),
        "k": (8, int, "neighbors per point"),
        "radii": ("0.1,0.2;0.3,0.4;0.6,0.8", str, "layer1;layer2;fusion radius pairs"),
        "full_scale": (False, _bool, "use full-size widths instead of the desk schedule"),
        "out": ("model.vagw", str, "checkpoint path (config sidecar at <out>.json)"),
        "metrics": ("metrics.jsonl", str, "JSON-lines metrics path"),
    },
    "eval": {
        "data": ("", str, "container to score (required)"),
        "checkpoint": ("model.vagw", str, "weights written by train"),
        "msi": (0, int, "multi-sample inference repeats (0 disables)"),
        "msi_size": (0, int, "points per MSI subsample (0: model input size)"),
        "batch_size": (50, int, "evaluation batch size"),
    },
    "gradcheck": {
        "only": ("", str, "comma-separated subset of checks"),
        "eps": (1e-6, float, "finite-difference step"),
    },
    "bench": {
        "ops": ("knn_bruteforce,knn_grid,vaconv_forward", str, "operations to time"),
        "n": ("256,1024,4096", str, "point counts"),
        "k": ("8,20", str, "neighbor counts"),
        "r": (0.2, float, "radius for the grid search and VAConv"),
        "reps": (5, int, "repetitions per cell (at least 5)"),
        "width": (32, int, "VAConv channel width"),
    },
}


def _table(command: str) -> dict:
    return {**COMMANDS[command], **COMMON}


def parse_config_file(path) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def resolve(command: str, file_values: dict, flag_values: dict) -> dict:
    """Defaults < config file < flags; unknown keys are usage errors."""
    table = _table(command)
    unknown = sorted(set(file_values) - set(table))
    if unknown:
        raise UsageError(f"unknown config key(s) for {command}: {', '.join(unknown)}")
    cfg = {key: default for key, (default, _, _) in table.items()}
    for source in (file_values, flag_values):
        for key, value in source.items():
            if value is None:
                continue
            try:
                cfg[key] = table[key][1](value)
            except ValueError as exc:
                raise UsageError(f"bad value for {key}: {exc}") from None
    if cfg["threads"] is None:
        cfg["threads"] = _default_threads()
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vagcn", description="VA-GCN point-cloud toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        p = sub.add_parser(command)
        p.add_argument("--config", help="key = value settings file")
        p.add_argument("--print-config", action="store_true", help="print resolved settings and exit")
        for key, (default, _, help_text) in _table(command).items():
            flag = "--" + key.replace("_", "-")
            names = [flag] if flag == "--" + key else [flag, "--" + key]
            p.add_argument(*names, dest=key, default=None, help=f"{help_text} [default: {default}]")
    return parser


# ---------------------------------------------------------------- commands

def _split(text: str, cast=str) -> list:
    return [cast(s.strip()) for s in str(text).split(",") if s.strip()]


def _parse_radii(text: str) -> tuple:
    groups = [g for g in text.split(";")]
    if len(groups) != 3:
        raise UsageError("radii needs three ';'-separated pairs: layer1;layer2;fusion")
    try:
        pairs = tuple(tuple(float(v) for v in g.split(",")) for g in groups)
    except ValueError:
        raise UsageError(f"radii must be numbers, got {text!r}") from None
    if any(len(p) != 2 for p in pairs):
        raise UsageError("each radius group needs exactly two values")
    return pairs


def _read_dataset(path):
    from .data.container import read_container
    from .errors import FormatError
    if not path:
        raise UsageError("--data is required")
    try:
        return read_container(path)
    except FileNotFoundError:
        raise UsageError(f"no such dataset: {path}") from None
    except FormatError as exc:
        raise ArtifactError(f"{path}: {exc}") from None


def cmd_gen_data(cfg: dict, out=sys.stdout) -> int:
    from .data.container import write_container
    from .data.synth import PART_CATEGORIES, SHAPES, synth_parts, synth_shapes

    names = _split(cfg["classes"])
    if cfg["orientation"] not in ("upright", "full"):
        raise UsageError("orientation must be upright or full")
    if cfg["task"] == "classification":
        bad = [c for c in names if c not in SHAPES]
        if bad or len(names) < 2:
            raise UsageError(f"unknown or too few classes {bad or names}; choose from {', '.join(SHAPES)}")
        ds = synth_shapes(names, cfg["per_class"], cfg["points"], cfg["seed"], cfg["orientation"])
    elif cfg["task"] == "part_segmentation":
        if cfg["classes"] == COMMANDS["gen-data"]["classes"][0]:
            names = list(PART_CATEGORIES)
        bad = [c for c in names if c not in PART_CATEGORIES]
        if bad:
            raise UsageError(f"unknown part categories {bad}; choose from {', '.join(PART_CATEGORIES)}")
        ds = synth_parts(names, cfg["per_class"], cfg["points"], cfg["seed"], cfg["orientation"])
    else:
        raise UsageError("task must be classification or part_segmentation")
    write_container(cfg["out"], ds)
    counts = ", ".join(f"{n}={int(np.sum((ds.categories if ds.segmentation else ds.labels) == i))}"
                       for i, n in enumerate(names))
    print(f"wrote {ds.num_samples} samples x {ds.num_points} points to {cfg['out']} ({counts})", file=out)
    return EXIT_OK


def _model_config(cfg: dict, ds):
    from .model import ModelConfig
    r1, r2, rf = _parse_radii(cfg["radii"])
    kw = dict(task="part_segmentation" if ds.segmentation else "classification",
              num_classes=ds.num_classes, points_per_sample=ds.num_points,
              extra_channels=ds.num_extras, k=cfg["k"], radii1=r1, radii2=r2, radii_fusion=rf,
              parallel_variant=cfg["variant"], channel_variant=cfg["channels"],
              aggregation_mode=cfg["agg"], angular_mode=cfg["angular"], graph_space=cfg["graph_space"],
              seed=cfg["seed"])
    if ds.segmentation:
        kw["num_categories"] = max(int(ds.categories.max()) + 1, 1)
    return (ModelConfig.full_scale(**kw) if cfg["full_scale"] else ModelConfig(**kw)).validate()


def cmd_train(cfg: dict, out=sys.stdout) -> int:
    from .autodiff import set_default_dtype
    from .errors import ConfigError
    from .model import build_model
    from .training import TrainConfig, train

    ds = _read_dataset(cfg["data"])
    test = _read_dataset(cfg["test_data"]) if cfg["test_data"] else None
    try:
        mcfg = _model_config(cfg, ds)
        tc = TrainConfig(batch_size=cfg["batch_size"], lr0=cfg["lr"], weight_decay=cfg["weight_decay"],
                         epochs=cfg["epochs"], seed=cfg["seed"], augment=cfg["augment"],
                         checkpoint=cfg["out"], metrics=cfg["metrics"]).validate()
    except ConfigError as exc:
        raise UsageError(str(exc)) from None
    if test is not None and (test.num_points != ds.num_points or test.num_classes != ds.num_classes):
        raise ArtifactError("test data does not match the training data layout")
    set_default_dtype(np.float32)
    model = build_model(mcfg)

    def log(record):
        print(json.dumps(record, sort_keys=True), file=out, flush=True)

    result = train(model, ds, tc, test, header={"command": "train", "settings": cfg, "threads": cfg["threads"]},
                   log=log)
    print(json.dumps({"best": result.best, "checkpoint": cfg["out"]}, sort_keys=True), file=out)
    return EXIT_OK


def cmd_eval(cfg: dict, out=sys.stdout) -> int:
    from .autodiff import set_default_dtype
    from .errors import FormatError
    from .training import evaluate, load_checkpoint, msi_evaluate

    ds = _read_dataset(cfg["data"])
    set_default_dtype(np.float32)
    try:
        model = load_checkpoint(cfg["checkpoint"])
    except FileNotFoundError as exc:
        raise UsageError(f"missing checkpoint file: {exc.filename}") from None
    except (FormatError, KeyError, ValueError) as exc:
        raise ArtifactError(f"checkpoint {cfg['checkpoint']} is unusable: {exc}") from None
    mc = model.cfg
    size = cfg["msi_size"] or mc.points_per_sample
    if ds.num_extras != mc.extra_channels or ds.num_classes != mc.num_classes or ds.segmentation != (
            mc.task == "part_segmentation"):
        raise ArtifactError("dataset does not match the checkpoint's model config "
                            f"(classes {ds.num_classes} vs {mc.num_classes}, extras {ds.num_extras} vs "
                            f"{mc.extra_channels})")
    if cfg["msi"] > 0:
        if ds.segmentation:
            raise UsageError("--msi applies to classification only")
        if size != mc.points_per_sample or ds.num_points < size:
            raise ArtifactError(f"MSI subsamples need {mc.points_per_sample} of at most {ds.num_points} points")
        metrics = msi_evaluate(model, ds, cfg["msi"], cfg["seed"], size)
        metrics["msi"] = cfg["msi"]
    else:
        if ds.num_points != mc.points_per_sample:
            raise ArtifactError(f"dataset has {ds.num_points} points per sample, model expects "
                                f"{mc.points_per_sample}")
        metrics = evaluate(model, ds, cfg["batch_size"])
    print(json.dumps(metrics, sort_keys=True), file=out)
    return EXIT_OK


def cmd_gradcheck(cfg: dict, out=sys.stdout) -> int:
    from .checks import CHECKS, TOLERANCE, run_suite
    names = _split(cfg["only"]) or list(CHECKS)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise UsageError(f"unknown check(s) {unknown}; available: {', '.join(CHECKS)}")
    results = run_suite(names, cfg["eps"], cfg["seed"])
    for name, err in results.items():
        status = "ok" if err < TOLERANCE else "FAIL"
        print(f"{name:28s} {err:.3e}  {status}", file=out)
    worst = max(results, key=results.get)
    if results[worst] >= TOLERANCE:
        print(f"gradcheck failed: worst offender {worst} at {results[worst]:.3e}", file=out)
        return EXIT_GRADCHECK
    print(f"all {len(results)} checks below {TOLERANCE:g}", file=out)
    return EXIT_OK


def cmd_bench(cfg: dict, out=sys.stdout) -> int:
    from .autodiff import set_default_dtype
    from .geometry import edge_geometry
    from .layers import VAConv, vaconv_forward
    from .spatial import knn_bruteforce, knn_grid

    if cfg["reps"] < 5:
        raise UsageError("bench needs at least 5 repetitions")
    set_default_dtype(np.float32)
    ops = _split(cfg["ops"])
    known = ("knn_bruteforce", "knn_grid", "vaconv_forward")
    if any(op not in known for op in ops):
        raise UsageError(f"ops must come from {', '.join(known)}")
    rng = np.random.default_rng(cfg["seed"])
    print("op,n,k,median_us,min_us", file=out)
    for n in _split(cfg["n"], int):
        pts = rng.standard_normal((n, 3))
        pts /= np.linalg.norm(pts, axis=1).max()
        for k in _split(cfg["k"], int):
            graph = knn_grid(pts, k, cfg["r"])
            layer = VAConv(cfg["width"], cfg["width"], rng, k, cfg["r"])
            x = rng.standard_normal((n, cfg["width"])).astype(np.float32)
            geo = edge_geometry(pts.astype(np.float32), graph)
            calls = {
                "knn_bruteforce": lambda: knn_bruteforce(pts, k, cfg["r"]),
                "knn_grid": lambda: knn_grid(pts, k, cfg["r"]),
                "vaconv_forward": lambda: vaconv_forward(x, pts, graph, layer, False, geo),
            }
            for op in ops:
                times = []
                for _ in range(cfg["reps"]):
                    t0 = time.perf_counter()
                    calls[op]()
                    times.append((time.perf_counter() - t0) * 1e6)
                print(f"{op},{n},{k},{np.median(times):.1f},{min(times):.1f}", file=out, flush=True)
    return EXIT_OK


HANDLERS = {"gen-data": cmd_gen_data, "train": cmd_train, "eval": cmd_eval,
            "gradcheck": cmd_gradcheck, "bench": cmd_bench}


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    from .errors import ConfigError, NumericError
    try:
        file_values = parse_config_file(args.config) if args.config else {}
        flags = {key: getattr(args, key) for key in _table(args.command)}
        cfg = resolve(args.command, file_values, flags)
        if args.print_config:
            for key in sorted(cfg):
                print(f"{key} = {cfg[key]}", file=out)
            return EXIT_OK
        from threadpoolctl import threadpool_limits
        with threadpool_limits(limits=cfg["threads"]):
            return HANDLERS[args.command](cfg, out)
    except (UsageError, ConfigError, FileNotFoundError) as exc:
        print(f"vagcn {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"vagcn {args.command}: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ArtifactError as exc:
        print(f"vagcn {args.command}: {exc}", file=sys.stderr)
        return EXIT_ARTIFACT


if __name__ == "__main__":
    sys.exit(main())
