"""Command-line interface: ``simulate``, ``fit-predict`` and ``graph-stats``."""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import math
import os
import sys

import jsonschema
import numpy as np

from . import io
from .errors import ConfigError, FrechetError
from .manifold_graph import FeatureMatrix, KnnGraph, NeighborGraph, RGraph, build_graph
from .regression import (
    K_GRID,
    METHODS,
    NW,
    SEMI,
    GraphParams,
    LabeledSet,
    RegressorSpec,
    build_context,
    fit,
    fit_cv,
)
from .simulation import ExperimentConfig, resolve_metadata, run_experiment

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["setting", "n", "m", "n_test", "seed"],
    "additionalProperties": False,
    "properties": {
        "setting": {"enum": ["I", "II", "III", "IV"]},
        "ambient": {"enum": ["R3", "R6"]},
        "n": {"type": "integer", "minimum": 2},
        "m": {
            "oneOf": [
                {"type": "integer", "minimum": 0},
                {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 0}},
            ]
        },
        "n_test": {"type": "integer", "minimum": 1},
        "snr": {"type": "number", "exclusiveMinimum": 0},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1},
        "realizations": {"type": "integer", "minimum": 1},
        "latent": {"enum": ["uniform", "truncated"]},
        "methods": {"type": "array", "minItems": 1, "items": {"enum": list(METHODS)}},
        "k_grid": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 1}},
        "graph": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "rule": {"enum": ["r", "knn"]},
                "radius": {"oneOf": [{"const": "auto"}, {"type": "number", "exclusiveMinimum": 0}]},
                "k": {"type": "integer", "minimum": 1},
                "fermat_s": {"type": "number", "minimum": 1},
            },
        },
    },
}

CONFIG_HELP = """\
config keys: setting (I|II|III|IV), ambient (R3|R6, default R3), n, m (int or
list), n_test, snr (settings I/II), seed, realizations (default 1), latent
(uniform|truncated), methods (subset of nw, knn, semi-nw, semi-knn), k_grid
(default 1..10), graph {rule: r|knn, radius: auto|float, k: int, fermat_s: float}
"""


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    problems = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if problems:
        lines = [f"/{'/'.join(map(str, e.absolute_path))}: {e.message}" for e in problems]
        raise ConfigError("invalid config:\n  " + "\n  ".join(lines))
    raw = dict(raw)
    graph = dict(raw.pop("graph", {}))
    if graph.get("radius") == "auto":
        graph["radius"] = None
    return ExperimentConfig(graph=GraphParams(**graph), **raw)


def _threads(args) -> int:
    if args.threads is not None:
        return args.threads
    env = os.environ.get("FRECHET_THREADS")
    return int(env) if env else 1


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")
    return str(v)


def _open_csv(path, deterministic: bool):
    fh = open(path, "w", newline="")
    if not deterministic:
        fh.write(f"# generated {_dt.datetime.now().isoformat(timespec='seconds')}\n")
    return fh


def cmd_simulate(args) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config = ExperimentConfig(**{**config.__dict__, "seed": args.seed})
    if args.dry_run:
        resolved = {"config": config.to_dict(), "resolved": resolve_metadata(config)}
        print(json.dumps(resolved, indent=2, sort_keys=True))
        return 0
    result = run_experiment(config, threads=_threads(args))
    out = io.ensure_dir(args.out_dir)
    with _open_csv(out / "trials.csv", args.deterministic) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["realization", "method", "m", "mse", "hyperparam", "seconds", "n_failed", "error"])
        for t in result.trials:
            seconds = "" if args.deterministic else f"{t.seconds:.4f}"
            w.writerow([t.realization, t.method, t.m, _fmt(t.mse), _fmt(t.hyperparam),
                        seconds, t.n_failed, t.error])
    with _open_csv(out / "summary.csv", args.deterministic) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "m", "amse", "se"])
        for row in result.summary():
            w.writerow([row["method"], row["m"], _fmt(row["amse"]), _fmt(row["se"])])
    with open(out / "metadata.json", "w") as fh:
        json.dump({"config": config.to_dict(), **result.metadata}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for row in result.summary():
        print(f"{row['method']:>9}  m={row['m']:<5d} amse={row['amse']:.6g}  se={row['se']:.3g}")
    return 0


def _graph_params(args) -> GraphParams:
    radius = None if args.radius in (None, "auto") else float(args.radius)
    return GraphParams(rule=args.graph, radius=radius, k=args.graph_k, fermat_s=args.fermat_s)


def cmd_fit_predict(args) -> int:
    x, y = io.read_labeled(args.train, args.space)
    labeled = LabeledSet(x, y, args.space)
    unlabeled = io.read_features(args.unlabeled) if args.unlabeled else None
    queries = io.read_features(args.query)
    ids = io.read_query_ids(args.query)
    if queries.shape[1] != x.shape[1] or (unlabeled is not None and unlabeled.shape[1] != x.shape[1]):
        raise ConfigError("feature dimensions differ between train, unlabeled and query files")

    bandwidth = None if args.bandwidth == "cv" else float(args.bandwidth)
    k = None if args.k == "cv" else int(args.k)
    spec = RegressorSpec.from_method(args.method, bandwidth=bandwidth, k=k, graph=_graph_params(args))
    context = build_context(spec, labeled, unlabeled) if spec.mode == SEMI else None
    tuned = bandwidth is None if spec.family == NW else k is None
    if tuned:
        fitted = fit_cv(spec, labeled, context=context, k_grid=K_GRID)
    else:
        fitted = fit(spec, labeled, context=context)

    preds, errors = [], []
    for q in queries:
        try:
            preds.append(fitted.predict(q))
            errors.append("")
        except FrechetError as exc:
            preds.append(None)
            errors.append(f"{type(exc).__name__}: {exc}")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            io.write_predictions(fh, ids, preds, errors)
    else:
        io.write_predictions(sys.stdout, ids, preds, errors)
    print(f"# {fitted.spec.method} hyperparam={_fmt(fitted.spec.hyperparam)}", file=sys.stderr)
    return 0


def graph_stats(features: np.ndarray, params: GraphParams) -> tuple[dict, NeighborGraph]:
    fm = FeatureMatrix(features, features.shape[0])
    rule = params.resolve(fm)
    graph = build_graph(fm, rule, params.fermat_s)
    deg = graph.degrees()
    stats = {
        "vertices": graph.n_vertices,
        "edges": graph.n_edges,
        "components": graph.n_components(),
        "rule": "r" if isinstance(rule, RGraph) else "knn",
        "radius": rule.r if isinstance(rule, RGraph) else "",
        "graph_k": rule.k if isinstance(rule, KnnGraph) else "",
        "fermat_s": params.fermat_s,
        "degree_min": int(deg.min()) if deg.size else 0,
        "degree_mean": float(deg.mean()) if deg.size else 0.0,
        "degree_max": int(deg.max()) if deg.size else 0,
        "isolated": int(np.sum(deg == 0)),
    }
    return stats, graph


def cmd_graph_stats(args) -> int:
    features = io.read_features(args.features)
    stats, graph = graph_stats(features, _graph_params(args))
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["stat", "value"])
        for key, value in stats.items():
            w.writerow([key, _fmt(value)])
    finally:
        if args.out:
            out.close()
    if args.edges_out:
        with open(args.edges_out, "w", newline="") as fh:
            graph.write_edge_csv(fh)
    return 0


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _int_or_cv(text: str):
    return text if text == "cv" else _positive_int(text)


def _float_or(word: str):
    def parse(text: str):
        if text == word:
            return text
        v = float(text)
        if not v > 0:
            raise argparse.ArgumentTypeError("must be positive")
        return v
    return parse


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ssfrechet", description="Semi-supervised Fréchet regression.")
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--seed", type=int, default=None, help="override the config seed")
    shared.add_argument("--threads", type=_positive_int, default=None,
                        help="worker processes (default: $FRECHET_THREADS or 1)")
    shared.add_argument("--deterministic", action="store_true",
                        help="omit timestamp header lines and wall-clock columns")

    graph = argparse.ArgumentParser(add_help=False)
    graph.add_argument("--graph", choices=["r", "knn"], default="r")
    graph.add_argument("--radius", type=_float_or("auto"), default="auto")
    graph.add_argument("--graph-k", type=_positive_int, default=4)
    graph.add_argument("--fermat-s", type=float, default=1.0)

    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", parents=[shared], help="run a Monte-Carlo AMSE experiment",
                         epilog=CONFIG_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    sim.add_argument("config", help="experiment config JSON")
    sim.add_argument("--out-dir", default="results")
    sim.add_argument("--dry-run", action="store_true", help="print the resolved config and exit")
    sim.set_defaults(func=cmd_simulate)

    fp = sub.add_parser("fit-predict", parents=[shared, graph], help="fit on CSV data and predict queries")
    fp.add_argument("--train", required=True, help="CSV with x1..xp and response columns")
    fp.add_argument("--unlabeled", help="CSV with x1..xp")
    fp.add_argument("--query", required=True, help="CSV with x1..xp (optional query_id)")
    fp.add_argument("--space", choices=["euclidean", "sphere", "spd"], default="euclidean")
    fp.add_argument("--method", choices=list(METHODS), default="semi-nw")
    fp.add_argument("--bandwidth", type=_float_or("cv"), default="cv")
    fp.add_argument("--k", type=_int_or_cv, default="cv")
    fp.add_argument("--out", help="predictions CSV (default stdout)")
    fp.set_defaults(func=cmd_fit_predict)

    gs = sub.add_parser("graph-stats", parents=[shared, graph], help="neighbor-graph diagnostics")
    gs.add_argument("features", help="CSV with x1..xp")
    gs.add_argument("--out", help="report CSV (default stdout)")
    gs.add_argument("--edges-out", help="write the edge list as src,dst,weight")
    gs.set_defaults(func=cmd_graph_stats)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FrechetError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
