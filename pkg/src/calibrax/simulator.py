"""Sampling calibration datasets from a known curve and confidence density."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from calibrax.data import Dataset
from calibrax.errors import ConfigError
from calibrax.prior_curve import TrueDistributionSpec, link_eval
from calibrax.rng import RandomStream


@dataclass(frozen=True)
class SimulationRequest:
    spec: TrueDistributionSpec
    n: int
    seed: int

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError(f"n must be >= 1, got {self.n}")


def simulate(request: SimulationRequest) -> Dataset:
    """Draw ``n`` samples: confidence from the beta density, then a Bernoulli hit.

    A single stream is consumed in a fixed order (beta draw, then hit draw,
    per sample), so the seed determines the dataset exactly.
    """
    spec = request.spec
    rng = RandomStream(request.seed)
    a1, a2 = spec.confidence.a1, spec.confidence.a2
    curve = spec.curve
    conf = np.empty(request.n)
    hits = np.empty(request.n, dtype=np.int8)
    buf = np.empty(1)
    for i in range(request.n):
        s = rng.beta(a1, a2)
        buf[0] = s
        p = float(curve(buf)[0])
        conf[i] = s
        hits[i] = rng.bernoulli(p)
    return Dataset(conf, hits)


def simulate_spec(spec: TrueDistributionSpec, n: int, seed: int) -> Dataset:
    return simulate(SimulationRequest(spec, n, seed))
