"""Post-hoc calibration maps: the fitted prior-family curve and four baselines.

Every fitter returns a :class:`CalibrationMap`.  Maps of kind ``tpm``,
``histogram``, ``isotonic`` and ``platt`` act on confidences; ``temperature``
acts on logit records.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Literal, Sequence

import numpy as np

from calibrax.binning import bin_arrays, equal_mass_bins, sort_order
from calibrax.data import Dataset, LogitRecord, ingest_logits
from calibrax.errors import ConfigError, DataError, DegenerateFitError
from calibrax.estimator import EstimatorConfig, estimate_curve
from calibrax.optimize import nelder_mead
from calibrax.prior_curve import PriorCurveParams, g_eval, logistic_neg

MapKind = Literal["tpm", "histogram", "temperature", "platt", "isotonic"]
MAP_KINDS = ("tpm", "histogram", "temperature", "platt", "isotonic")

PLATT_EPS = 1e-12
PLATT_PENALTY = 1e-6
MAX_TEMPERATURE = 1e3


@dataclass(frozen=True, eq=False)
class CalibrationMap:
    kind: MapKind
    params: dict[str, Any]
    flags: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if self.kind not in MAP_KINDS:
            raise ConfigError(f"unknown map kind {self.kind!r}")

    def __call__(self, s):
        """Map confidences (not valid for temperature maps)."""
        arr = np.asarray(s, dtype=np.float64)
        if self.kind == "temperature":
            raise ConfigError("temperature maps act on logit records, not confidences")
        if self.kind == "tpm":
            out = np.asarray(g_eval(PriorCurveParams(**self.params), np.clip(arr, 0.0, 1.0)))
        elif self.kind == "histogram":
            idx = np.searchsorted(np.asarray(self.params["edges"]), arr, side="right")
            out = np.asarray(self.params["values"])[idx]
        elif self.kind == "isotonic":
            xs = np.asarray(self.params["thresholds"])
            idx = np.clip(np.searchsorted(xs, arr, side="right") - 1, 0, xs.size - 1)
            out = np.asarray(self.params["values"])[idx]
        else:
            z = _safe_logit(arr)
            out = logistic_neg(-(self.params["w"] * z + self.params["b"]))
        return float(out) if out.ndim == 0 else out

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": _jsonable(self.params), "flags": list(self.flags)}

    @classmethod
    def from_dict(cls, obj: dict) -> "CalibrationMap":
        try:
            return cls(obj["kind"], dict(obj["params"]), tuple(obj.get("flags", ())))
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed calibration map: {exc}") from None


def _jsonable(params: dict) -> dict:
    return {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in params.items()}


def _safe_logit(s: np.ndarray) -> np.ndarray:
    s = np.clip(s, PLATT_EPS, 1.0 - PLATT_EPS)
    return np.log(s) - np.log1p(-s)


def fit_tpm(dataset: Dataset, config: EstimatorConfig = EstimatorConfig()) -> CalibrationMap:
    est = estimate_curve(dataset, config)
    return CalibrationMap("tpm", est.params.to_dict(), est.warnings)


def fit_histogram_binning(dataset: Dataset, bins: int) -> CalibrationMap:
    """Equal-mass histogram binning.

    Interior bin edges sit halfway between neighbouring bins' extreme
    confidences; values outside the data range fall into the end bins.
    """
    scheme = equal_mass_bins(dataset, bins)
    _, counts, pos = bin_arrays(dataset, scheme)
    s = dataset.confidences[scheme.order]
    lo = scheme.offsets[1:-1]
    edges = 0.5 * (s[lo - 1] + s[lo])
    return CalibrationMap("histogram", {"edges": edges.tolist(), "values": (pos / counts).tolist()})


def pava(y: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Weighted pool-adjacent-violators; returns the non-decreasing fit of ``y``."""
    vals: list[float] = []
    wts: list[float] = []
    sizes: list[int] = []
    for yi, wi in zip(y.tolist(), w.tolist()):
        vals.append(yi)
        wts.append(wi)
        sizes.append(1)
        while len(vals) > 1 and vals[-2] > vals[-1]:
            wt = wts[-2] + wts[-1]
            v = (vals[-2] * wts[-2] + vals[-1] * wts[-1]) / wt
            sz = sizes[-2] + sizes[-1]
            del vals[-1], wts[-1], sizes[-1]
            vals[-1], wts[-1], sizes[-1] = v, wt, sz
    return np.repeat(vals, sizes)


def fit_isotonic(dataset: Dataset) -> CalibrationMap:
    """Isotonic regression of hits on confidence; equal confidences are pooled first."""
    dataset.require()
    order = sort_order(dataset)
    s = dataset.confidences[order]
    h = dataset.hits[order].astype(np.float64)
    xs, start, counts = np.unique(s, return_index=True, return_counts=True)
    means = np.add.reduceat(h, start) / counts
    fitted = pava(means, counts.astype(np.float64))
    return CalibrationMap("isotonic", {"thresholds": xs.tolist(), "values": fitted.tolist()})


def fit_platt(dataset: Dataset) -> CalibrationMap:
    """Logistic map sigma(w * logit(s) + b) fitted by penalised likelihood."""
    dataset.require()
    h = dataset.hits.astype(np.float64)
    if h.min() == h.max():
        raise DegenerateFitError("Platt scaling needs both hits and misses")
    z = _safe_logit(dataset.confidences)
    n = len(dataset)

    def nll(x):
        t = x[0] * z + x[1]
        # log(1 + exp(t)) - h t, overflow free
        return float((np.logaddexp(0.0, t) - h * t).sum() / n + PLATT_PENALTY * (x[0] ** 2 + x[1] ** 2))

    res = nelder_mead(nll, [1.0, 0.0], max_iterations=5000, tolerance=1e-12, step=0.5)
    flags = []
    if dataset.confidences[h == 0].max() < dataset.confidences[h == 1].min():
        flags.append("separable")
    return CalibrationMap("platt", {"w": float(res.x[0]), "b": float(res.x[1])}, tuple(flags))


def _logit_matrix(records: Sequence[LogitRecord]) -> tuple[np.ndarray, np.ndarray]:
    ks = {len(r.logits) for r in records}
    if len(ks) != 1:
        raise DataError("temperature scaling needs records with a common class count")
    return (np.array([r.logits for r in records], dtype=np.float64),
            np.array([r.label for r in records], dtype=np.int64))


def fit_temperature(records: Sequence[LogitRecord]) -> CalibrationMap:
    """Single temperature minimising softmax NLL, searched over log T.

    T is confined to [1e-3, 1e3]; a fit that lands on the bound is flagged
    ``diverged``.
    """
    if len(records) < 2:
        raise DegenerateFitError("temperature scaling needs at least 2 records")
    z, y = _logit_matrix(records)
    rows = np.arange(len(y))
    bound = math.log(MAX_TEMPERATURE)

    def nll(x):
        t = z * math.exp(-min(max(x[0], -bound), bound))
        m = t.max(axis=1)
        lse = m + np.log(np.exp(t - m[:, None]).sum(axis=1))
        return float((lse - t[rows, y]).mean())

    res = nelder_mead(nll, [0.0], max_iterations=2000, tolerance=1e-12, step=0.5)
    log_t = min(max(float(res.x[0]), -bound), bound)
    # on separable data the NLL flattens towards a bound and the simplex
    # stalls short of it; a bound that does at least as well wins
    for edge in (-bound, bound):
        if nll([edge]) <= res.fun:
            log_t = edge
    flags = ("diverged",) if abs(log_t) >= bound - 1e-9 else ()
    return CalibrationMap("temperature", {"temperature": math.exp(log_t)}, flags)


def scale_records(records: Sequence[LogitRecord], temperature: float) -> list[LogitRecord]:
    return [LogitRecord(tuple(v / temperature for v in r.logits), r.label) for r in records]


def apply_map(cmap: CalibrationMap, data: Dataset | Sequence[LogitRecord]) -> Dataset:
    """Replace confidences by mapped ones; hits are carried over unchanged."""
    if cmap.kind == "temperature":
        if isinstance(data, Dataset):
            raise ConfigError("temperature maps need logit records")
        return ingest_logits(scale_records(data, cmap.params["temperature"]))
    if not isinstance(data, Dataset):
        data = ingest_logits(data)
    return data.with_confidences(cmap(data.confidences))


def fit_map(kind: str, train: Dataset | Sequence[LogitRecord], *, bins: int = 15,
            est_config: EstimatorConfig = EstimatorConfig()) -> CalibrationMap:
    if kind == "temperature":
        if isinstance(train, Dataset):
            raise ConfigError("temperature scaling needs logit records")
        return fit_temperature(train)
    if not isinstance(train, Dataset):
        train = ingest_logits(train)
    if kind == "tpm":
        return fit_tpm(train, est_config)
    if kind == "histogram":
        return fit_histogram_binning(train, bins)
    if kind == "platt":
        return fit_platt(train)
    if kind == "isotonic":
        return fit_isotonic(train)
    raise ConfigError(f"unknown calibration method {kind!r}")
