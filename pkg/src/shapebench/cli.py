"""Command-line driver.

Every subcommand resolves its configuration as defaults < --config file <
flags, then calls the service through ServiceClient (in-process by default,
remote with --server). Exit codes: 0 success, 1 usage error, 2 data error,
3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import MODEL_CONTAINER_VERSION, VXBG_FORMAT_VERSION, __version__
from .client import ServiceClient
from .errors import DataError, InvariantError, UsageError


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would sys.exit(2); keep codes uniform
        raise UsageError(message)


def _comma_list(cast):
    def parse(text: str):
        items = [part.strip() for part in text.split(",") if part.strip()]
        if not items:
            raise argparse.ArgumentTypeError("expected a comma-separated list")
        try:
            return [cast(part) for part in items]
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from exc
    return parse


_CONFIG_FLAGS = (
    # (flag, dest, type, help)
    ("--root", "root", str, "dataset root directory"),
    ("--out-dir", "out_dir", str, "output directory for models/predictions/reports"),
    ("--frame", "frame", str, "grid frame: object or viewer"),
    ("--resolution", "resolution", int, "ground-truth grid resolution"),
    ("--low-resolution", "low_resolution", int, "clustering/retrieval grid resolution"),
    ("--poses-per-shape", "poses_per_shape", int, "poses per shape in viewer frame"),
    ("--per-class", "per_class", int, "shapes generated per class"),
    ("--classes", "classes", _comma_list(str), "comma-separated class names"),
    ("--contamination", "contamination", float,
     "fraction of test shapes duplicated from training (0..1)"),
    ("--ratios", "ratios", _comma_list(float), "train,val,test ratios"),
    ("--seed", "seed", int, "run seed"),
    ("--workers", "workers", int, "worker count for materialize/eval"),
    ("--k", "k", int, "number of clusters"),
    ("--dim", "dim", int, "embedding dimension"),
    ("--tau-grid", "tau_grid", _comma_list(float), "threshold grid for mean shapes"),
    ("--similarity-mode", "similarity_mode", str, "retrieval mode: cosine or euclidean"),
    ("--d", "d", float, "F-score distance threshold (fraction of side length)"),
    ("--sample-count", "sample_count", int, "surface sample count per shape"),
    ("--cd-clamp", "cd_clamp", float, "optional Chamfer distance clamp"),
    ("--sweep", "sweep", _comma_list(float), "F-score sweep thresholds"),
    ("--bins", "bins", int, "histogram bin count"),
    ("--alpha", "alpha", float, "KS significance level"),
)


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    for flag, dest, cast, help_text in _CONFIG_FLAGS:
        parser.add_argument(flag, dest=dest, type=cast, default=None, help=help_text)


def _config_payload(args: argparse.Namespace) -> dict:
    payload: dict = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                loaded = json.load(fh)
        except OSError as exc:
            raise UsageError(f"cannot read config file: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(loaded, dict):
            raise UsageError("config file must contain a JSON object")
        payload.update(loaded)
    for _flag, dest, _cast, _help in _CONFIG_FLAGS:
        value = getattr(args, dest, None)
        if value is not None:
            payload[dest] = value
    return payload


def build_parser() -> _Parser:
    parser = _Parser(prog="shapebench",
                     description="Shape reconstruction baselines, metrics, and statistics.")
    parser.add_argument("--version", action="version",
                        version=(f"shapebench {__version__} "
                                 f"(vxbg format {VXBG_FORMAT_VERSION}, "
                                 f"model container {MODEL_CONTAINER_VERSION})"))
    parser.add_argument("--config", default=None, help="JSON config file; flags override it")
    parser.add_argument("--server", default=None,
                        help="base URL of a running service (default: run in-process)")

    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    def command(name, help_text):
        p = sub.add_parser(name, help=help_text)
        _add_config_flags(p)
        return p

    command("gen", "generate the synthetic dataset manifest")
    command("split", "split the manifest into train/val/test")
    command("materialize", "voxelize every shape into stored grids")

    fit = sub.add_parser("fit", help="fit a baseline model")
    fit_sub = fit.add_subparsers(dest="fit_kind", metavar="kind")
    fit_sub.required = True
    for kind in ("cluster", "retrieval"):
        _add_config_flags(fit_sub.add_parser(kind, help=f"fit the {kind} baseline"))

    predict = command("predict", "write predicted grids for the test set")
    predict.add_argument("--methods", type=_comma_list(str), default=None,
                         help="subset of: cluster,retrieval,oracle_nn")

    evaluate = command("eval", "score predictions and export report artifacts")
    evaluate.add_argument("--methods", type=_comma_list(str), default=None)
    evaluate.add_argument("--report-metric", default="iou",
                          help="metric for per-class/histogram/KS artifacts")

    stats_p = sub.add_parser("stats", help="statistics over a persisted report")
    stats_sub = stats_p.add_subparsers(dest="stats_kind", metavar="kind")
    stats_sub.required = True
    ks = stats_sub.add_parser("ks", help="pairwise KS heatmap")
    _add_config_flags(ks)
    ks.add_argument("--metric", default="iou")
    ks.add_argument("--binned", action="store_true",
                    help="run KS on 50-bin snapped values instead of raw")
    _add_config_flags(stats_sub.add_parser("sweep", help="F-score threshold sweep table"))
    corr = stats_sub.add_parser("corr", help="class size vs. mean metric correlation")
    _add_config_flags(corr)
    corr.add_argument("--metric", default="iou")
    _add_config_flags(stats_sub.add_parser("cutoff", help="cutoff survival curves"))

    viz = sub.add_parser("viz", help="visual exports")
    viz_sub = viz.add_subparsers(dest="viz_kind", metavar="kind")
    viz_sub.required = True
    pr = viz_sub.add_parser("pr", help="colorized precision/recall point clouds")
    _add_config_flags(pr)
    pr.add_argument("--method", required=True)
    pr.add_argument("--key", required=True, help="grid key, e.g. box_003 or box_003_2")
    pr.add_argument("--prefix", default=None, help="output path prefix for the PLY pair")

    serve = sub.add_parser("serve", help="run the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)

    return parser


def _dispatch(args: argparse.Namespace, client: ServiceClient) -> None:
    payload = _config_payload(args)

    if args.command == "gen":
        doc = client.post("/dataset/gen", payload)
        print(f"generated {doc['shapes']} shapes across {len(doc['classes'])} classes "
              f"-> {doc['manifest_path']}")
    elif args.command == "split":
        doc = client.post("/dataset/split", payload)
        print(f"split train={doc['train']} val={doc['val']} test={doc['test']} "
              f"-> {doc['split_path']}")
    elif args.command == "materialize":
        doc = client.post("/dataset/materialize", payload)
        print(f"materialized {doc['grids']} grids at {doc['resolution']}^3 "
              f"({doc['frame']} frame)")
    elif args.command == "fit":
        doc = client.post(f"/fit/{args.fit_kind}", payload)
        print(f"fitted {doc['kind']} model -> {doc['model_path']}")
    elif args.command == "predict":
        if args.methods:
            payload["methods"] = args.methods
        doc = client.post("/predict", payload)
        total = sum(doc["written"].values())
        detail = ", ".join(f"{m}={n}" for m, n in sorted(doc["written"].items()))
        print(f"wrote {total} predictions ({detail})")
    elif args.command == "eval":
        if args.methods:
            payload["methods"] = args.methods
        payload["report_metric"] = args.report_metric
        doc = client.post("/eval", payload)
        print(f"report: {doc['entries']} entries, {doc['skips']} skips "
              f"-> {doc['report_path']}")
        for path in doc["files"]:
            print(f"  wrote {path}")
    elif args.command == "stats":
        _dispatch_stats(args, client, payload)
    elif args.command == "viz":
        payload.update({"method": args.method, "key": args.key})
        if args.prefix:
            payload["prefix"] = args.prefix
        doc = client.post("/viz/pr", payload)
        for path in doc["files"]:
            print(f"wrote {path}")
    else:  # pragma: no cover - argparse enforces the choices
        raise UsageError(f"unknown command {args.command!r}")


def _dispatch_stats(args: argparse.Namespace, client: ServiceClient, payload: dict) -> None:
    if args.stats_kind == "ks":
        payload.update({"metric": args.metric, "binned": args.binned})
        doc = client.post("/stats/ks", payload)
        methods, counts = doc["methods"], doc["counts"]
        width = max(len(m) for m in methods) + 2
        print(f"KS heatmap ({args.metric}, alpha={doc['alpha']:g}): "
              f"cells = classes not distinguished")
        print(" " * width + "".join(m.rjust(width) for m in methods))
        for m, row in zip(methods, counts):
            print(m.rjust(width) + "".join(str(c).rjust(width) for c in row))
    elif args.stats_kind == "sweep":
        doc = client.post("/stats/sweep", payload)
        print("method         d   mean_precision  mean_recall  mean_fscore")
        for r in doc["rows"]:
            print(f"{r['method']:<12} {r['d']:<5g} {r['mean_precision']:>14.2f} "
                  f"{r['mean_recall']:>12.2f} {r['mean_fscore']:>12.2f}")
    elif args.stats_kind == "corr":
        payload["metric"] = args.metric
        doc = client.post("/stats/corr", payload)
        for method, r in sorted(doc["correlations"].items()):
            shown = "undefined (constant class sizes)" if r is None else f"{r:+.4f}"
            print(f"{method}: pearson r = {shown}")
    elif args.stats_kind == "cutoff":
        doc = client.post("/stats/cutoff", payload)
        print(f"wrote {len(doc['rows'])} cutoff-curve rows")
    else:  # pragma: no cover
        raise UsageError(f"unknown stats subcommand {args.stats_kind!r}")


def main(argv=None) -> int:
    try:
        parser = build_parser()
        args = parser.parse_args(argv)
        if args.command == "serve":
            import uvicorn

            from .service import create_app

            uvicorn.run(create_app(), host=args.host, port=args.port)
            return 0
        with ServiceClient(args.server) as client:
            _dispatch(args, client)
        return 0
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except InvariantError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
