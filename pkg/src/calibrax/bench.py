"""Monte Carlo benchmarks against exactly known calibration error.

Each trial is identified by (spec index, size index, run index); its seed is
a fixed 64-bit scramble of those indices and the base seed, so any cell can
be re-run alone and serial and parallel runs agree.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, NamedTuple, Sequence

import numpy as np

from calibrax.calibrators import fit_histogram_binning
from calibrax.errors import CalibraxError, ConfigError, StatisticalTestError
from calibrax.estimator import EstimatorConfig, estimate_curve
from calibrax.metrics import EAD_GRID, METRIC_NAMES, MetricConfig, compute_metric, ead, tce_exact
from calibrax.prior_curve import BUILTIN_SPECS, TrueDistributionSpec, link_eval
from calibrax.rng import derive_seed
from calibrax.simulator import simulate_spec

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
HIST_BIN_RANGE = (10, 50)
EXACT_LIMIT = 12
MIN_NONZERO = 5


# ---------------------------------------------------------------------------
# Wilcoxon signed-rank test


class WilcoxonResult(NamedTuple):
    statistic: float  # sum of ranks of positive differences
    pvalue: float
    n: int
    method: str


def _midranks(a: np.ndarray) -> np.ndarray:
    order = np.argsort(a, kind="stable")
    ranks = np.empty(a.size)
    sa = a[order]
    i = 0
    while i < a.size:
        j = i
        while j + 1 < a.size and sa[j + 1] == sa[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def wilcoxon_signed_rank(xs: Sequence[float], ys: Sequence[float]) -> WilcoxonResult:
    """Two-sided Wilcoxon signed-rank test of paired samples.

    Zero differences are dropped.  With at most 12 remaining pairs the null
    distribution is enumerated over all sign assignments of the (mid)ranks;
    above that a normal approximation with tie and continuity correction is
    used.
    """
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape:
        raise StatisticalTestError(f"length mismatch: {x.size} vs {y.size}")
    d = x - y
    d = d[d != 0]
    n = int(d.size)
    if n == 0:
        raise StatisticalTestError("all differences zero")
    if n < MIN_NONZERO:
        raise StatisticalTestError(f"insufficient n: {n} nonzero differences, need {MIN_NONZERO}")
    ranks = _midranks(np.abs(d))
    w = float(ranks[d > 0].sum())
    if n <= EXACT_LIMIT:
        # ranks are multiples of 1/2; work in integers
        r2 = np.rint(2 * ranks).astype(np.int64)
        masks = np.arange(1 << n)[:, None] >> np.arange(n) & 1
        dist = masks @ r2
        w2 = int(round(2 * w))
        lower = np.count_nonzero(dist <= w2) / dist.size
        upper = np.count_nonzero(dist >= w2) / dist.size
        return WilcoxonResult(w, min(1.0, 2.0 * min(lower, upper)), n, "exact")
    mean = n * (n + 1) / 4.0
    _, tie_counts = np.unique(np.abs(d), return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - float(np.sum(tie_counts ** 3 - tie_counts)) / 48.0
    z = max(abs(w - mean) - 0.5, 0.0) / math.sqrt(var)
    return WilcoxonResult(w, min(1.0, math.erfc(z / math.sqrt(2.0))), n, "normal")


# ---------------------------------------------------------------------------
# configuration and report


def parse_sizes(text: str) -> tuple[int, ...]:
    """``"500:5000:500"`` (inclusive range) or ``"500,1000"``."""
    try:
        if ":" in text:
            parts = [int(p) for p in text.split(":")]
            if len(parts) == 2:
                parts.append(1)
            lo, hi, step = parts
            if step < 1:
                raise ValueError
            sizes = tuple(range(lo, hi + 1, step))
        else:
            sizes = tuple(int(p) for p in text.split(",") if p.strip())
    except ValueError:
        raise ConfigError(f"cannot parse sizes {text!r}") from None
    if not sizes or min(sizes) < 1:
        raise ConfigError(f"sizes must be positive, got {text!r}")
    return sizes


@dataclass(frozen=True)
class BenchmarkConfig:
    specs: dict[str, TrueDistributionSpec] = field(default_factory=lambda: dict(BUILTIN_SPECS))
    sizes: tuple[int, ...] = tuple(range(500, 5001, 500))
    runs: int = 100
    base_seed: int = 0
    metrics: tuple[str, ...] = METRIC_NAMES
    bins: int = 15
    p: int = 1
    estimator: EstimatorConfig = EstimatorConfig()

    def __post_init__(self):
        if self.runs < 1:
            raise ConfigError("runs must be >= 1")
        if not self.sizes or min(self.sizes) < 1:
            raise ConfigError("sizes must be a nonempty list of positive integers")
        if not self.specs:
            raise ConfigError("at least one distribution spec is required")
        unknown = set(self.metrics) - set(METRIC_NAMES)
        if unknown:
            raise ConfigError(f"unknown metrics: {', '.join(sorted(unknown))}")

    @property
    def metric_config(self) -> MetricConfig:
        return MetricConfig(bins=self.bins, p=self.p)

    def to_dict(self) -> dict:
        return {
            "specs": {k: v.to_dict() for k, v in self.specs.items()},
            "sizes": list(self.sizes),
            "runs": self.runs,
            "base_seed": self.base_seed,
            "metrics": list(self.metrics),
            "bins": self.bins,
            "p": self.p,
            "estimator": self.estimator.to_dict(),
            "histogram_bins": list(HIST_BIN_RANGE),
            "seed_derivation": "splitmix64 chain over (base_seed, spec_index, size_index, run_index)",
        }


@dataclass
class BenchmarkReport:
    kind: str
    config: dict
    tce: dict[str, float]
    cells: list[dict]
    trials: list[dict]

    def to_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "kind": self.kind, "config": self.config,
                "tce": self.tce, "cells": self.cells, "trials": self.trials}

    def cell(self, spec: str, n: int, metric: str | None = None) -> dict:
        for c in self.cells:
            if c["spec"] == spec and c["n"] == n and (metric is None or c.get("metric") == metric):
                return c
        raise KeyError((spec, n, metric))

    def trials_csv(self) -> str:
        cols = ["spec", "n", "run", "seed", "quantity", "value", "error"]
        lines = [",".join(cols)]
        for t in self.trials:
            value = "" if t["value"] is None else f"{t['value']:.17g}"
            err = (t["error"] or "").replace(",", ";").replace("\n", " ")
            lines.append(f"{t['spec']},{t['n']},{t['run']},{t['seed']},{t['quantity']},{value},{err}")
        return "\n".join(lines) + "\n"


def _summary(values: list[float]) -> tuple[float | None, float | None]:
    if not values:
        return None, None
    arr = np.array(values)
    return float(arr.mean()), float(arr.std(ddof=1)) if arr.size > 1 else 0.0


def _threads() -> int:
    raw = os.environ.get("CALIBRAX_THREADS", "1")
    try:
        k = int(raw)
    except ValueError:
        raise ConfigError(f"CALIBRAX_THREADS must be an integer, got {raw!r}") from None
    return os.cpu_count() or 1 if k <= 0 else k


def _run_tasks(fn: Callable, tasks: list) -> list:
    threads = min(_threads(), len(tasks))
    if threads <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * threads))))


def _trial_cells(config: BenchmarkConfig):
    for si, name in enumerate(config.specs):
        for zi, n in enumerate(config.sizes):
            for run in range(config.runs):
                yield name, n, run, derive_seed(config.base_seed, si, zi, run)


# ---------------------------------------------------------------------------
# metric benchmark


def _metric_trial(task) -> list[dict]:
    config, name, n, run, seed = task
    data = simulate_spec(config.specs[name], n, seed)
    rows = []
    for metric in config.metrics:
        try:
            value, error = compute_metric(metric, data, config.metric_config, config.estimator), None
        except CalibraxError as exc:
            value, error = None, f"{exc.code}: {exc}"
        rows.append({"spec": name, "n": n, "run": run, "seed": seed, "quantity": metric,
                     "value": value, "error": error})
    return rows


def run_metric_benchmark(config: BenchmarkConfig) -> BenchmarkReport:
    """Simulate every (spec, size, run) cell and score each metric against the exact TCE."""
    tce = {name: tce_exact(spec, config.p) for name, spec in config.specs.items()}
    tasks = [(config, *cell) for cell in _trial_cells(config)]
    trials = [row for rows in _run_tasks(_metric_trial, tasks) for row in rows]
    trials.sort(key=lambda t: (list(config.specs).index(t["spec"]), t["n"], t["run"],
                               config.metrics.index(t["quantity"])))
    cells = []
    for name in config.specs:
        for n in config.sizes:
            for metric in config.metrics:
                rows = [t for t in trials if t["spec"] == name and t["n"] == n and t["quantity"] == metric]
                ok = [t["value"] for t in rows if t["error"] is None]
                mean, std = _summary(ok)
                cells.append({"spec": name, "n": n, "metric": metric, "mean": mean, "std": std,
                              "gap": None if mean is None else abs(mean - tce[name]),
                              "trials": len(ok), "failures": len(rows) - len(ok)})
    return BenchmarkReport("metrics", config.to_dict(), tce, cells, trials)


# ---------------------------------------------------------------------------
# curve-recovery benchmark


def histogram_mean_curve(data, bin_range: tuple[int, int] = HIST_BIN_RANGE) -> np.ndarray:
    """Pointwise mean over equal-mass histogram curves with 10..50 bins, on the EAD grid."""
    counts = [b for b in range(bin_range[0], bin_range[1] + 1) if b <= len(data)] or [len(data)]
    return np.mean([fit_histogram_binning(data, b)(EAD_GRID) for b in counts], axis=0)


def _ead_trial(task) -> list[dict]:
    config, name, n, run, seed = task
    spec = config.specs[name]
    data = simulate_spec(spec, n, seed)
    truth = link_eval(spec, EAD_GRID)
    rows = []
    base = {"spec": name, "n": n, "run": run, "seed": seed}
    try:
        est = estimate_curve(data, config.estimator)
        rows.append({**base, "quantity": "ours", "value": ead(est.params, lambda _: truth), "error": None})
    except CalibraxError as exc:
        rows.append({**base, "quantity": "ours", "value": None, "error": f"{exc.code}: {exc}"})
    hist = histogram_mean_curve(data)
    rows.append({**base, "quantity": "histogram", "value": ead(lambda _: hist, lambda _: truth), "error": None})
    return rows


def run_ead_benchmark(config: BenchmarkConfig) -> BenchmarkReport:
    """Curve-recovery error of the estimator versus averaged histogram binning.

    Paired per-run EADs are compared with a Wilcoxon signed-rank test; the
    p-value is ``None`` with a flag when the test is not applicable.
    """
    tce = {name: tce_exact(spec, config.p) for name, spec in config.specs.items()}
    tasks = [(config, *cell) for cell in _trial_cells(config)]
    trials = [row for rows in _run_tasks(_ead_trial, tasks) for row in rows]
    trials.sort(key=lambda t: (list(config.specs).index(t["spec"]), t["n"], t["run"], t["quantity"] != "ours"))
    cells = []
    for name in config.specs:
        for n in config.sizes:
            by_run: dict[int, dict[str, Any]] = {}
            for t in trials:
                if t["spec"] == name and t["n"] == n:
                    by_run.setdefault(t["run"], {})[t["quantity"]] = t["value"]
            paired = [(r["ours"], r["histogram"]) for _, r in sorted(by_run.items())
                      if r.get("ours") is not None and r.get("histogram") is not None]
            ours = [a for a, _ in paired]
            hist = [b for _, b in paired]
            om, osd = _summary(ours)
            hm, hsd = _summary(hist)
            try:
                test = wilcoxon_signed_rank(ours, hist)
                pvalue, flag = test.pvalue, None
            except StatisticalTestError as exc:
                pvalue, flag = None, str(exc)
            cells.append({"spec": name, "n": n, "ours_mean": om, "ours_std": osd, "histogram_mean": hm,
                          "histogram_std": hsd, "p_value": pvalue, "p_flag": flag,
                          "trials": len(paired), "failures": len(by_run) - len(paired)})
    return BenchmarkReport("ead", config.to_dict(), tce, cells, trials)


def run_benchmark(kind: str, config: BenchmarkConfig) -> BenchmarkReport:
    if kind == "metrics":
        return run_metric_benchmark(config)
    if kind == "ead":
        return run_ead_benchmark(config)
    raise ConfigError(f"unknown benchmark kind {kind!r}")
