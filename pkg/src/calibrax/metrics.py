"""Calibration metrics.

TCE_bpm integrates the gap between a fitted curve and the diagonal against a
moment-fitted beta density.  The binned metrics (ECE, debiased ECE, sweep
ECE), the KS error and the curve distance EAD work directly on samples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Literal

import numpy as np

from calibrax.binning import BinKind, bin_arrays, equal_mass_bins, equal_mass_offsets, make_bins, sort_order
from calibrax.data import Dataset
from calibrax.errors import ConfigError, DataError
from calibrax.estimator import CurveEstimate, EstimatorConfig, estimate_curve
from calibrax.prior_curve import BetaParams, TrueDistributionSpec, beta_moment_fit, g_eval, link_eval

EAD_GRID = np.linspace(0.0, 1.0, 1001)


@dataclass(frozen=True)
class MetricConfig:
    bins: int = 15
    p: int = 1
    binning: BinKind = "equal-mass"
    quadrature_points: int = 20000

    def __post_init__(self):
        if self.bins < 1:
            raise ConfigError("bins must be >= 1")
        if self.p < 1:
            raise ConfigError("p must be >= 1")
        if self.binning not in ("equal-mass", "equal-width"):
            raise ConfigError(f"unknown binning {self.binning!r}")
        if self.quadrature_points < 1:
            raise ConfigError("quadrature_points must be >= 1")

    def to_dict(self) -> dict:
        return {"bins": self.bins, "p": self.p, "binning": self.binning,
                "quadrature_points": self.quadrature_points}


# ---------------------------------------------------------------------------
# quadrature


def integrate(f: Callable[[np.ndarray], np.ndarray], lo: float, hi: float, points: int = 20000) -> float:
    """Composite midpoint rule on ``points`` equal subintervals.

    ``f`` receives the whole node array.  Endpoints are never evaluated.
    """
    if not lo < hi:
        raise ConfigError(f"need lo < hi, got [{lo}, {hi}]")
    if points < 1:
        raise ConfigError("points must be >= 1")
    h = (hi - lo) / points
    nodes = lo + h * (np.arange(points) + 0.5)
    vals = np.asarray(f(nodes), dtype=np.float64)
    if not np.isfinite(vals).all():
        raise DataError("integrand non-finite at an interior node")
    return float(vals.sum() * h)


def beta_expectation(f: Callable[[np.ndarray], np.ndarray], params: BetaParams, points: int = 20000) -> float:
    """E[f(S)] for S ~ Beta(a1, a2), robust to endpoint singularities of the density.

    The interval is split at 1/2.  On the left half ``s = u**(1/a1)`` absorbs
    ``s**(a1-1) ds`` into ``du / a1``; on the right half ``1 - s = u**(1/a2)``
    does the same for ``(1-s)**(a2-1)``.  Both transformed integrands are
    bounded, so the midpoint rule converges even for shapes far below 1.
    """
    a1, a2 = params.a1, params.a2
    half = points // 2 or 1

    def left(u):
        s = u ** (1.0 / a1)
        return f(s) * np.exp((a2 - 1.0) * np.log1p(-s)) / a1

    def right(u):
        t = u ** (1.0 / a2)
        return f(1.0 - t) * np.exp((a1 - 1.0) * np.log1p(-t)) / a2

    total = integrate(left, 0.0, 0.5 ** a1, half) + integrate(right, 0.0, 0.5 ** a2, max(points - half, 1))
    return total / math.exp(params.log_norm())


# ---------------------------------------------------------------------------
# true calibration error


def tce_exact(spec: TrueDistributionSpec, p: int = 1, points: int = 20000) -> float:
    """(E|curve(S) - S|**p)**(1/p) under the distribution's own confidence density."""
    return beta_expectation(lambda s: np.abs(link_eval(spec, s) - s) ** p, spec.confidence, points) ** (1.0 / p)


@dataclass(frozen=True)
class TceBpmResult:
    value: float
    curve: CurveEstimate
    density: BetaParams


def tce_bpm_details(dataset: Dataset, est_config: EstimatorConfig = EstimatorConfig(),
                    metric_config: MetricConfig = MetricConfig()) -> TceBpmResult:
    # the density fit runs first: it is cheap and its degeneracy is the common failure
    density = beta_moment_fit(dataset.confidences)
    curve = estimate_curve(dataset, est_config)
    p = metric_config.p
    value = beta_expectation(lambda s: np.abs(g_eval(curve.params, s) - s) ** p, density,
                             metric_config.quadrature_points) ** (1.0 / p)
    return TceBpmResult(value, curve, density)


def tce_bpm(dataset: Dataset, est_config: EstimatorConfig = EstimatorConfig(),
            metric_config: MetricConfig = MetricConfig()) -> float:
    """Estimated true calibration error from the fitted curve and a moment-fitted beta density."""
    return tce_bpm_details(dataset, est_config, metric_config).value


# ---------------------------------------------------------------------------
# binned metrics


def _ece_from_bins(conf_means, counts, pos, n: int, p: int) -> float:
    gaps = np.abs(pos / counts - conf_means)
    return float(np.sum(counts / n * gaps ** p) ** (1.0 / p))


def ece_bin(dataset: Dataset, config: MetricConfig = MetricConfig()) -> float:
    dataset.require()
    if config.binning == "equal-mass" and config.bins > len(dataset):
        raise ConfigError(f"{config.bins} bins exceed dataset size {len(dataset)}")
    scheme = make_bins(dataset, config.bins, config.binning)
    return _ece_from_bins(*bin_arrays(dataset, scheme), len(dataset), config.p)


def ece_debiased(dataset: Dataset, config: MetricConfig = MetricConfig()) -> float:
    """Binned squared calibration error with the per-bin jackknife bias removed.

    sqrt(max(0, sum_i w_i [(acc_i - conf_i)**2 - acc_i (1 - acc_i) / (n_i - 1)]))
    """
    dataset.require()
    if config.binning == "equal-mass" and config.bins > len(dataset):
        raise ConfigError(f"{config.bins} bins exceed dataset size {len(dataset)}")
    means, counts, pos = bin_arrays(dataset, make_bins(dataset, config.bins, config.binning))
    if counts.min() < 2:
        raise DataError("debiased ECE needs at least 2 samples in every bin")
    acc = pos / counts
    terms = (acc - means) ** 2 - acc * (1.0 - acc) / (counts - 1)
    return math.sqrt(max(0.0, float(np.sum(counts / len(dataset) * terms))))


def sweep_bin_count(dataset: Dataset) -> int:
    """Largest equal-mass bin count reached by sweeping upward from 1 while
    per-bin accuracies stay non-decreasing."""
    dataset.require()
    n = len(dataset)
    order = sort_order(dataset)
    hits = dataset.hits[order].astype(np.int64)
    best = 1
    for b in range(2, n + 1):
        offsets = equal_mass_offsets(n, b)
        counts = np.diff(offsets)
        acc = np.add.reduceat(hits, offsets[:-1]) / counts
        if np.any(np.diff(acc) < 0):
            break
        best = b
    return best


def ece_sweep(dataset: Dataset, p: int = 1) -> float:
    b = sweep_bin_count(dataset)
    scheme = equal_mass_bins(dataset, b)
    return _ece_from_bins(*bin_arrays(dataset, scheme), len(dataset), p)


def ks_error(dataset: Dataset) -> float:
    """Largest absolute cumulative gap between hits and confidences.

    Prefix sums are taken in confidence order and read only at the end of
    each group of equal confidences, which keeps the value independent of
    sample order.
    """
    dataset.require()
    order = sort_order(dataset)
    s = dataset.confidences[order]
    cum = np.cumsum(dataset.hits[order] - s) / len(dataset)
    group_end = np.append(s[1:] != s[:-1], True)
    return float(np.max(np.abs(cum[group_end])))


def ead(curve_a: Callable, curve_b: Callable) -> float:
    """(1/1000) * sum over i = 0..1000 of |a(i/1000) - b(i/1000)|."""
    a = np.asarray(curve_a(EAD_GRID), dtype=np.float64)
    b = np.asarray(curve_b(EAD_GRID), dtype=np.float64)
    if not (np.isfinite(a).all() and np.isfinite(b).all()):
        raise DataError("curve non-finite on the EAD grid")
    return float(np.abs(a - b).sum() / 1000.0)


MetricName = Literal["ece", "debiased", "sweep", "ks", "tcebpm"]
METRIC_NAMES: tuple[str, ...] = ("ece", "debiased", "sweep", "ks", "tcebpm")


def compute_metric(name: str, dataset: Dataset, config: MetricConfig = MetricConfig(),
                   est_config: EstimatorConfig = EstimatorConfig()) -> float:
    if name == "ece":
        return ece_bin(dataset, config)
    if name == "debiased":
        return ece_debiased(dataset, config)
    if name == "sweep":
        return ece_sweep(dataset, config.p)
    if name == "ks":
        return ks_error(dataset)
    if name == "tcebpm":
        return tce_bpm(dataset, est_config, config)
    raise ConfigError(f"unknown metric {name!r}; choose from {', '.join(METRIC_NAMES)}")
