"""Derivative-free simplex minimisation."""

from __future__ import annotations

import math
from typing import Callable, NamedTuple

import numpy as np

from calibrax.errors import ConfigError, OptimizationError

REFLECT = 1.0
EXPAND = 2.0
CONTRACT = 0.5
SHRINK = 0.5


class OptimizeResult(NamedTuple):
    x: np.ndarray
    fun: float
    iterations: int
    evaluations: int
    converged: bool


def nelder_mead(
    f: Callable[[np.ndarray], float],
    x0,
    *,
    max_iterations: int = 2000,
    tolerance: float = 1e-8,
    step: float = 0.5,
) -> OptimizeResult:
    """Minimise ``f`` with the Nelder-Mead simplex method.

    The initial simplex is ``x0`` plus ``step`` along each axis.  Iteration
    stops once the spread of objective values over the simplex drops below
    ``tolerance`` or after ``max_iterations``.  Non-finite objective values
    are treated as +inf.

    Returns
    -------
    OptimizeResult
        Best vertex, its value, iteration and evaluation counts, and whether
        the spread criterion was met.
    """
    if max_iterations < 1:
        raise ConfigError("max_iterations must be >= 1")
    if not tolerance > 0:
        raise ConfigError("tolerance must be > 0")
    x0 = np.atleast_1d(np.asarray(x0, dtype=np.float64)).copy()
    dim = x0.size
    evaluations = 0

    def fx(x):
        nonlocal evaluations
        evaluations += 1
        v = float(f(x))
        return v if math.isfinite(v) else math.inf

    simplex = [x0]
    for i in range(dim):
        x = x0.copy()
        x[i] += step
        simplex.append(x)
    values = [fx(x) for x in simplex]
    if all(math.isinf(v) for v in values):
        raise OptimizationError("objective is non-finite on the whole initial simplex")

    iterations = 0
    converged = False
    while True:
        # stable sort: on ties earlier vertices (x0 first) stay in front
        idx = sorted(range(dim + 1), key=values.__getitem__)
        simplex = [simplex[i] for i in idx]
        values = [values[i] for i in idx]
        if values[-1] - values[0] < tolerance:
            converged = True
            break
        if iterations >= max_iterations:
            break
        iterations += 1

        centroid = np.mean(simplex[:-1], axis=0)
        worst = simplex[-1]
        xr = centroid + REFLECT * (centroid - worst)
        fr = fx(xr)
        if values[0] <= fr < values[-2]:
            simplex[-1], values[-1] = xr, fr
            continue
        if fr < values[0]:
            xe = centroid + EXPAND * (xr - centroid)
            fe = fx(xe)
            if fe < fr:
                simplex[-1], values[-1] = xe, fe
            else:
                simplex[-1], values[-1] = xr, fr
            continue
        if fr < values[-1]:
            xc = centroid + CONTRACT * (xr - centroid)
            fc = fx(xc)
            if fc <= fr:
                simplex[-1], values[-1] = xc, fc
                continue
        else:
            xc = centroid + CONTRACT * (worst - centroid)
            fc = fx(xc)
            if fc < values[-1]:
                simplex[-1], values[-1] = xc, fc
                continue
        best = simplex[0]
        for i in range(1, dim + 1):
            simplex[i] = best + SHRINK * (simplex[i] - best)
            values[i] = fx(simplex[i])

    return OptimizeResult(simplex[0].copy(), values[0], iterations, evaluations, converged)
