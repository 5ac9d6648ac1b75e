"""Command-line entry point.

Artifacts go to ``--out`` (or standard output when omitted); logs and
errors go to standard error.  Exit status: 0 success, 1 runtime error
(one ``error <CODE>: <message>`` line), 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from calibrax import __version__
from calibrax.bench import BenchmarkConfig, parse_sizes, run_benchmark
from calibrax.calibrators import CalibrationMap, apply_map, fit_map
from calibrax.data import Dataset, atomic_write_text, dump_logits, ingest_logits, load_logits, load_pairs
from calibrax.errors import CalibraxError, ConfigError, InputFileError
from calibrax.estimator import EstimatorConfig, estimate_curve
from calibrax.metrics import METRIC_NAMES, MetricConfig, compute_metric
from calibrax.prior_curve import BUILTIN_SPECS, PriorCurveParams, TrueDistributionSpec, builtin_spec, g_eval
from calibrax.simulator import simulate_spec

log = logging.getLogger("calibrax")

SCHEMA_VERSION = 1
METHOD_ALIASES = {"tpm": "tpm", "hb": "histogram", "histogram": "histogram", "temp": "temperature",
                  "temperature": "temperature", "platt": "platt", "isotonic": "isotonic"}


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def _emit(text: str, out: str | None) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        try:
            atomic_write_text(out, text)
        except OSError as exc:
            raise InputFileError(f"cannot write {out}: {exc.strerror}") from None
        log.info("wrote %s", out)


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False, allow_nan=False) + "\n"


def _is_logit_file(path: str) -> bool:
    return Path(path).suffix.lower() in (".jsonl", ".json", ".ndjson")


def _load_dataset(path: str) -> Dataset:
    return ingest_logits(load_logits(path)) if _is_logit_file(path) else load_pairs(path)


def _read_json(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise InputFileError(f"no such file: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None


def load_curve(path: str) -> PriorCurveParams:
    obj = _read_json(path)
    try:
        return PriorCurveParams(float(obj["alpha"]), float(obj["beta"]), float(obj["c"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: invalid curve file ({exc})") from None


def _load_spec(text: str) -> TrueDistributionSpec:
    if text.upper() in BUILTIN_SPECS:
        return builtin_spec(text)
    return TrueDistributionSpec.from_dict(_read_json(text))


# ---------------------------------------------------------------------------
# subcommands


def cmd_ingest_logits(args) -> None:
    _emit(ingest_logits(load_logits(args.input)).to_csv(), args.out)


def cmd_simulate(args) -> None:
    spec = _load_spec(args.dist)
    _emit(simulate_spec(spec, args.n, args.seed).to_csv(), args.out)


def _estimator_config(args) -> EstimatorConfig:
    counts = None
    if args.schemes != "auto":
        try:
            counts = tuple(int(b) for b in args.schemes.split(","))
        except ValueError:
            raise ConfigError(f"--schemes expects 'auto' or comma-separated integers, got {args.schemes!r}") from None
    return EstimatorConfig(scheme_counts=counts, max_iterations=args.max_iterations, restarts=args.restarts)


def cmd_estimate(args) -> None:
    data = _load_dataset(args.input)
    est = estimate_curve(data, _estimator_config(args))
    for w in est.warnings:
        log.warning(w)
    report = {"schema_version": SCHEMA_VERSION, "kind": "curve", **est.to_dict()}
    report["diagnostics"]["n"] = len(data)
    report["diagnostics"]["config"] = _estimator_config(args).to_dict()
    _emit(_dump_json(report), args.out)


def cmd_metrics(args) -> None:
    data = _load_dataset(args.input)
    names = [m.strip() for m in args.metrics.split(",") if m.strip()]
    for m in names:
        if m not in METRIC_NAMES:
            raise ConfigError(f"unknown metric {m!r}; choose from {', '.join(METRIC_NAMES)}")
    cfg = MetricConfig(bins=args.bins, p=args.p, binning=args.binning)
    est_cfg = _estimator_config(args)
    values, errors = {}, {}
    for m in names:
        try:
            values[m] = compute_metric(m, data, cfg, est_cfg)
        except CalibraxError as exc:
            values[m] = None
            errors[m] = f"{exc.code}: {exc}"
            log.warning("metric %s failed: %s", m, exc)
    if args.format == "csv":
        lines = ["metric,value"] + [f"{m},{'' if v is None else format(v, '.17g')}" for m, v in values.items()]
        _emit("\n".join(lines) + "\n", args.out)
        return
    report = {
        "schema_version": SCHEMA_VERSION,
        "kind": "metrics",
        "input": args.input,
        "n": len(data),
        "metrics": values,
        "errors": errors,
        "config": {**cfg.to_dict(), "estimator": est_cfg.to_dict(),
                   "notes": ["p for the binned baseline metrics is assumed, not given by the method's source"]},
    }
    _emit(_dump_json(report), args.out)


def cmd_calibrate(args) -> None:
    kind = METHOD_ALIASES[args.method]
    if kind == "temperature":
        train = load_logits(args.train)
        target = load_logits(args.apply)
    else:
        train = _load_dataset(args.train)
        target = _load_dataset(args.apply)
    cmap = fit_map(kind, train, bins=args.bins, est_config=_estimator_config(args))
    for flag in cmap.flags:
        log.warning("calibration map flag: %s", flag)
    if args.map_out:
        _emit(_dump_json({"schema_version": SCHEMA_VERSION, **cmap.to_dict()}), args.map_out)
    _emit(apply_map(cmap, target).to_csv(), args.out)


def cmd_benchmark(args) -> None:
    names = [d.strip() for d in args.dists.split(",") if d.strip()]
    specs = {name: _load_spec(name) for name in names}
    sizes = parse_sizes(args.sizes)
    runs = args.runs
    if args.full_protocol:
        sizes, runs = tuple(range(500, 5001, 500)), 100
    metrics = tuple(m.strip() for m in args.metrics.split(",") if m.strip())
    config = BenchmarkConfig(specs=specs, sizes=sizes, runs=runs, base_seed=args.seed, metrics=metrics,
                             bins=args.bins, p=args.p, estimator=_estimator_config(args))
    report = run_benchmark(args.kind, config)
    if args.per_trial:
        _emit(report.trials_csv(), args.per_trial)
    _emit(_dump_json(report.to_dict()), args.out)


def cmd_curve_eval(args) -> None:
    params = load_curve(args.curve)
    s = np.linspace(0.0, 1.0, args.grid + 1)
    g = g_eval(params, s)
    lines = ["s,g"] + [f"{a:.17g},{b:.17g}" for a, b in zip(s.tolist(), g.tolist())]
    _emit("\n".join(lines) + "\n", args.out)


# ---------------------------------------------------------------------------
# parser


def _add_common(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--seed", type=int, default=d(0), help="random seed (default 0)")
    p.add_argument("--quiet", action="store_true", default=d(False), help="only log errors")
    p.add_argument("--format", choices=("json", "csv"), default=d("json"), help="report format")


def _add_estimator(p: argparse.ArgumentParser) -> None:
    p.add_argument("--schemes", default="auto", help="'auto' or comma-separated equal-mass bin counts")
    p.add_argument("--max-iterations", type=_positive_int, default=2000)
    p.add_argument("--restarts", type=int, default=2)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="calibrax", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _add_common(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text)
        _add_common(p, suppress=True)
        p.set_defaults(func=func)
        return p

    p = add("ingest-logits", cmd_ingest_logits, "convert logit JSON-lines to a confidence,hit CSV")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out")

    p = add("simulate", cmd_simulate, "sample a dataset from a known calibration curve")
    p.add_argument("--dist", required=True, help="D1..D5 or a distribution spec JSON file")
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--out")

    p = add("estimate", cmd_estimate, "fit the calibration curve")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out")
    _add_estimator(p)

    p = add("metrics", cmd_metrics, "compute calibration metrics")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--metrics", default=",".join(METRIC_NAMES))
    p.add_argument("--bins", type=_positive_int, default=15)
    p.add_argument("--p", type=_positive_int, default=1)
    p.add_argument("--binning", choices=("equal-mass", "equal-width"), default="equal-mass")
    p.add_argument("--out")
    _add_estimator(p)

    p = add("calibrate", cmd_calibrate, "fit a calibration map and apply it")
    p.add_argument("--method", choices=sorted(METHOD_ALIASES), required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--apply", required=True)
    p.add_argument("--bins", type=_positive_int, default=15, help="histogram binning bins")
    p.add_argument("--map-out", help="also write the fitted map as JSON")
    p.add_argument("--out")
    _add_estimator(p)

    p = add("benchmark", cmd_benchmark, "Monte Carlo benchmark against the exact TCE")
    p.add_argument("--kind", choices=("metrics", "ead"), required=True)
    p.add_argument("--dists", default=",".join(BUILTIN_SPECS))
    p.add_argument("--sizes", default="500:5000:500")
    p.add_argument("--runs", type=_positive_int, default=20)
    p.add_argument("--full-protocol", action="store_true", help="100 runs at sizes 500..5000 step 500")
    p.add_argument("--metrics", default=",".join(METRIC_NAMES))
    p.add_argument("--bins", type=_positive_int, default=15)
    p.add_argument("--p", type=_positive_int, default=1)
    p.add_argument("--per-trial", help="write per-trial values as CSV")
    p.add_argument("--out")
    _add_estimator(p)

    p = add("curve-eval", cmd_curve_eval, "tabulate a fitted curve on a uniform grid")
    p.add_argument("--curve", required=True)
    p.add_argument("--grid", type=_positive_int, default=1000)
    p.add_argument("--out")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s", force=True)
    try:
        args.func(args)
    except CalibraxError as exc:
        print(f"error {exc.code}: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error E_RUNTIME: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
