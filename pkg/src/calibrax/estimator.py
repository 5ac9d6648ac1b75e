"""Continuous calibration-curve estimation by binomial-process likelihood.

For every equal-mass binning ``B`` in the scheme space and every bin ``b``
the estimator compares the curve at the bin's mean confidence with the
bin's hit rate.  The Bayesian-averaged objective

    sum_B P(B) sum_b P(b) * exp((g(S_b) - Npos_b / N_b) ** 2)

(uniform ``P(B)``, ``P(b) = |b| / |D|``) is minimised over the prior
family parameters with Nelder-Mead.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from calibrax.binning import BinningScheme, bin_arrays, equal_mass_bins, scheme_space, sort_order
from calibrax.data import Dataset
from calibrax.errors import ConfigError, DataError, DegenerateFitError, OptimizationError
from calibrax.optimize import nelder_mead
from calibrax.prior_curve import IDENTITY, PriorCurveParams, g_logodds_neg, logistic_neg

log = logging.getLogger(__name__)

RESTART_SHIFT = 0.5


@dataclass(frozen=True)
class EstimatorConfig:
    scheme_counts: tuple[int, ...] | None = None  # None: derived from N
    init: PriorCurveParams = IDENTITY
    max_iterations: int = 2000
    tolerance: float = 1e-8
    restarts: int = 2
    step: float = 0.5

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be >= 1")
        if not self.tolerance > 0:
            raise ConfigError("tolerance must be > 0")
        if self.restarts < 0:
            raise ConfigError("restarts must be >= 0")
        if self.scheme_counts is not None:
            counts = tuple(int(b) for b in self.scheme_counts)
            if not counts or min(counts) < 1:
                raise ConfigError("scheme_counts must be a nonempty list of positive integers")
            object.__setattr__(self, "scheme_counts", counts)

    def to_dict(self) -> dict:
        return {
            "scheme_counts": list(self.scheme_counts) if self.scheme_counts else "auto",
            "init": self.init.to_dict(),
            "max_iterations": self.max_iterations,
            "tolerance": self.tolerance,
            "restarts": self.restarts,
            "step": self.step,
        }


class BinnedObjective:
    """Cached per-bin statistics of a set of schemes, flattened into one weighted sum.

    Bins of every scheme are stacked; each carries weight
    ``P(B) * |b| / N``, so a single vectorised pass evaluates the double sum.
    """

    def __init__(self, dataset: Dataset, schemes: Sequence[BinningScheme]):
        if len(schemes) == 0:
            raise ConfigError("objective needs at least one binning scheme")
        dataset.require()
        n = len(dataset)
        means, rates, weights = [], [], []
        for scheme in schemes:
            m, counts, pos = bin_arrays(dataset, scheme)
            means.append(m)
            rates.append(pos / counts)
            weights.append(counts / (n * len(schemes)))
        self.bin_means = np.concatenate(means)
        self.hit_rates = np.concatenate(rates)
        self.weights = np.concatenate(weights)
        with np.errstate(divide="ignore"):
            self._log_s = np.log(self.bin_means)
            self._log_1ms = np.log1p(-self.bin_means)

    def curve(self, alpha: float, beta: float, c: float) -> np.ndarray:
        return logistic_neg(g_logodds_neg(alpha, beta, c, self._log_s, self._log_1ms))

    def value(self, params: PriorCurveParams) -> float:
        r = self.curve(params.alpha, params.beta, params.c) - self.hit_rates
        return float(np.dot(self.weights, np.exp(r * r)))

    def __call__(self, x) -> float:
        # negative alpha/beta are clamped to the monotone boundary
        alpha = x[0] if x[0] > 0.0 else 0.0
        beta = x[1] if x[1] > 0.0 else 0.0
        r = self.curve(alpha, beta, x[2]) - self.hit_rates
        return float(np.dot(self.weights, np.exp(r * r)))


def build_schemes(dataset: Dataset, counts: Sequence[int]) -> list[BinningScheme]:
    order = sort_order(dataset)
    return [equal_mass_bins(dataset, b, order) for b in counts]


def objective(dataset: Dataset, schemes: Sequence[BinningScheme], params: PriorCurveParams) -> float:
    """Value of the averaged objective; lies in [1, e]."""
    return BinnedObjective(dataset, schemes).value(params)


@dataclass(frozen=True)
class CurveEstimate:
    params: PriorCurveParams
    objective: float
    iterations: int
    evaluations: int
    scheme_counts: tuple[int, ...]
    converged: bool
    warnings: tuple[str, ...] = field(default=())

    def __call__(self, s):
        return self.params(s)

    def to_dict(self) -> dict:
        return {
            **self.params.to_dict(),
            "diagnostics": {
                "objective": self.objective,
                "iterations": self.iterations,
                "evaluations": self.evaluations,
                "converged": self.converged,
                "scheme_counts": list(self.scheme_counts),
                "warnings": list(self.warnings),
            },
        }


def _restart_points(init: np.ndarray, restarts: int) -> list[np.ndarray]:
    points = [init]
    for r in range(restarts):
        x = init.copy()
        x[r % 3] += RESTART_SHIFT
        points.append(x)
    return points


def estimate_curve(dataset: Dataset, config: EstimatorConfig = EstimatorConfig()) -> CurveEstimate:
    """Fit the prior-family calibration curve to ``dataset``.

    The optimiser runs from ``config.init`` and from ``config.restarts``
    perturbed copies of it; the lowest objective wins.  Negative alpha or
    beta are clamped to zero both inside the objective and in the result.

    Raises
    ------
    DegenerateFitError
        When every confidence and every hit is identical.
    """
    dataset.require()
    conf, hits = dataset.confidences, dataset.hits
    if np.all(conf == conf[0]) and np.all(hits == hits[0]):
        raise DegenerateFitError("no curve information: all confidences and all hits identical")

    warnings: list[str] = []
    if config.scheme_counts is None:
        space = scheme_space(len(dataset))
        counts = space.counts
        if space.warning:
            warnings.append(space.warning)
            log.warning(space.warning)
    else:
        counts = config.scheme_counts
        if max(counts) > len(dataset):
            raise ConfigError(f"bin count {max(counts)} exceeds dataset size {len(dataset)}")

    obj = BinnedObjective(dataset, build_schemes(dataset, counts))
    best = None
    iterations = evaluations = 0
    for start in _restart_points(config.init.as_vector(), config.restarts):
        try:
            res = nelder_mead(obj, start, max_iterations=config.max_iterations,
                              tolerance=config.tolerance, step=config.step)
        except OptimizationError:
            continue
        iterations += res.iterations
        evaluations += res.evaluations
        if best is None or res.fun < best.fun:
            best = res
    if best is None:
        raise OptimizationError("objective non-finite from every starting point")
    params = PriorCurveParams.clamped(*best.x)
    return CurveEstimate(params, obj.value(params), iterations, evaluations, tuple(counts),
                         best.converged, tuple(warnings))
