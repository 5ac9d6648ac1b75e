"""Equal-mass / equal-width binnings and per-bin statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from calibrax.data import Dataset
from calibrax.errors import ConfigError, DataError

BinKind = Literal["equal-mass", "equal-width"]

MIN_PER_BIN = 20
MAX_PER_BIN = 100


@dataclass(frozen=True, eq=False)
class BinningScheme:
    """A partition of a dataset into bins that are contiguous in confidence order.

    ``order`` is the stable sort permutation (confidence, then original
    index); bin ``b`` holds ``order[offsets[b]:offsets[b + 1]]``.  Equal-width
    schemes also keep their ``edges`` and may contain empty bins.
    """

    kind: BinKind
    bin_count: int
    order: np.ndarray
    offsets: np.ndarray
    edges: np.ndarray | None = None

    @property
    def n(self) -> int:
        return int(self.order.size)

    def sizes(self) -> np.ndarray:
        return np.diff(self.offsets)

    def members(self, b: int) -> np.ndarray:
        return self.order[self.offsets[b]:self.offsets[b + 1]]


@dataclass(frozen=True)
class BinStats:
    mean_confidence: float
    count: int
    positives: int
    weight: float

    @property
    def accuracy(self) -> float:
        return self.positives / self.count


def sort_order(dataset: Dataset) -> np.ndarray:
    return np.argsort(dataset.confidences, kind="stable")


def equal_mass_offsets(n: int, bins: int) -> np.ndarray:
    base, extra = divmod(n, bins)
    sizes = np.full(bins, base, dtype=np.int64)
    sizes[:extra] += 1
    return np.concatenate(([0], np.cumsum(sizes)))


def equal_mass_bins(dataset: Dataset, bins: int, order: np.ndarray | None = None) -> BinningScheme:
    """Split the confidence-sorted samples into ``bins`` runs of near-equal size.

    Sizes are ``N // bins``; the first ``N % bins`` bins take one extra sample.
    """
    n = len(dataset)
    if bins < 1:
        raise ConfigError(f"bin count must be positive, got {bins}")
    if bins > n:
        raise ConfigError(f"cannot make {bins} equal-mass bins from {n} samples")
    if order is None:
        order = sort_order(dataset)
    return BinningScheme("equal-mass", bins, order, equal_mass_offsets(n, bins))


def equal_width_bins(dataset: Dataset, bins: int) -> BinningScheme:
    """Bins ``[k/B, (k+1)/B)``, the last one closed at 1."""
    if bins < 1:
        raise ConfigError(f"bin count must be positive, got {bins}")
    dataset.require()
    order = sort_order(dataset)
    idx = np.minimum((dataset.confidences[order] * bins).astype(np.int64), bins - 1)
    offsets = np.searchsorted(idx, np.arange(bins + 1), side="left")
    return BinningScheme("equal-width", bins, order, offsets, edges=np.linspace(0.0, 1.0, bins + 1))


def make_bins(dataset: Dataset, bins: int, kind: BinKind = "equal-mass") -> BinningScheme:
    if kind == "equal-mass":
        return equal_mass_bins(dataset, bins)
    if kind == "equal-width":
        return equal_width_bins(dataset, bins)
    raise ConfigError(f"unknown binning kind {kind!r}")


def bin_arrays(dataset: Dataset, scheme: BinningScheme) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorised per-bin (mean confidence, count, positives), empty bins dropped."""
    if scheme.n != len(dataset):
        raise DataError(f"scheme covers {scheme.n} samples but dataset has {len(dataset)}")
    conf = dataset.confidences[scheme.order]
    hits = dataset.hits[scheme.order].astype(np.int64)
    lo, hi = scheme.offsets[:-1], scheme.offsets[1:]
    counts = hi - lo
    starts = lo[counts > 0]
    counts = counts[counts > 0]
    means = np.clip(np.add.reduceat(conf, starts) / counts, 0.0, 1.0)
    return means, counts, np.add.reduceat(hits, starts)


def bin_stats(dataset: Dataset, scheme: BinningScheme) -> list[BinStats]:
    means, counts, pos = bin_arrays(dataset, scheme)
    n = len(dataset)
    return [BinStats(float(m), int(c), int(p), c / n) for m, c, p in zip(means, counts, pos)]


@dataclass(frozen=True)
class SchemeSpace:
    """Bin counts averaged over by the estimator, each with weight 1 / len(counts)."""

    counts: tuple[int, ...]
    fallback: bool = False
    warning: str | None = field(default=None, compare=False)

    @property
    def weight(self) -> float:
        return 1.0 / len(self.counts)

    def __len__(self) -> int:
        return len(self.counts)


def scheme_space(n: int) -> SchemeSpace:
    """Equal-mass bin counts keeping every bin between 20 and 100 samples.

    That is the inclusive range ``ceil(N/100) .. floor(N/20)``.  Below N = 40
    a single count ``max(1, floor(N/20))`` is returned with a warning.
    """
    if n < 1:
        raise DataError("empty dataset")
    lo = math.ceil(n / MAX_PER_BIN)
    hi = n // MIN_PER_BIN
    if n < 40 or lo > hi:
        single = max(1, n // MIN_PER_BIN)
        return SchemeSpace(
            (single,), fallback=True,
            warning=f"N={n} too small for 20..100 samples per bin; using {single} bin(s)",
        )
    return SchemeSpace(tuple(range(lo, hi + 1)))


def scheme_space_size(n: int) -> int:
    return max(0, n // MIN_PER_BIN - math.ceil(n / MAX_PER_BIN) + 1)
