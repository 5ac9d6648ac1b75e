"""The three-parameter calibration curve family, beta confidence densities
and the GLM-style ground-truth curves used for simulation.

The curve family is

    g(s; alpha, beta, c) = 1 / (1 + s**(-alpha) * (1 - s)**beta * exp(c))

with ``alpha, beta >= 0`` so that ``g`` is non-decreasing.  It is what the
Bayes posterior P(H=1 | s) looks like when both class-conditional
confidence densities are beta distributions; ``(1, 1, 0)`` is the identity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from calibrax.errors import ConfigError, DataError, DegenerateFitError
from calibrax.rng import RandomStream

GRID_POINTS = 1001
_SLACK = 1e-12


@dataclass(frozen=True)
class PriorCurveParams:
    alpha: float = 1.0
    beta: float = 1.0
    c: float = 0.0

    def __post_init__(self):
        for name in ("alpha", "beta", "c"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ConfigError(f"{name} must be finite, got {v}")
            object.__setattr__(self, name, v)
        if self.alpha < 0 or self.beta < 0:
            raise ConfigError(f"alpha and beta must be >= 0, got ({self.alpha}, {self.beta})")

    @classmethod
    def clamped(cls, alpha: float, beta: float, c: float) -> "PriorCurveParams":
        return cls(max(float(alpha), 0.0), max(float(beta), 0.0), c)

    def as_vector(self) -> np.ndarray:
        return np.array([self.alpha, self.beta, self.c])

    def __call__(self, s):
        return g_eval(self, s)

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "beta": self.beta, "c": self.c}


IDENTITY = PriorCurveParams(1.0, 1.0, 0.0)


def _check_unit(s: np.ndarray) -> None:
    if np.any(~((s >= 0.0) & (s <= 1.0))):
        raise DataError("confidence outside [0, 1]")


def g_logodds_neg(alpha, beta, c, log_s, log_1ms):
    """``-alpha*log(s) + beta*log(1-s) + c`` with 0 * (-inf) read as 0."""
    with np.errstate(invalid="ignore"):
        a_term = np.where(alpha == 0.0, 0.0, -alpha * log_s)
        b_term = np.where(beta == 0.0, 0.0, beta * log_1ms)
    return a_term + b_term + c


def logistic_neg(z):
    """1 / (1 + exp(z)), overflow free."""
    return 0.5 * (1.0 - np.tanh(0.5 * z))


def g_eval(params: PriorCurveParams, s):
    """Evaluate the curve family; scalars in, scalar out, arrays in, arrays out.

    Endpoints follow the limits: at 0 the value is 0 when alpha > 0, at 1 it
    is 1 when beta > 0, and ``1 / (1 + e**c)`` otherwise.
    """
    arr = np.asarray(s, dtype=np.float64)
    _check_unit(arr)
    with np.errstate(divide="ignore"):
        z = g_logodds_neg(params.alpha, params.beta, params.c, np.log(arr), np.log1p(-arr))
    out = logistic_neg(z)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# beta confidence densities


@dataclass(frozen=True)
class BetaParams:
    a1: float
    a2: float

    def __post_init__(self):
        a1, a2 = float(self.a1), float(self.a2)
        if not (math.isfinite(a1) and math.isfinite(a2) and a1 > 0 and a2 > 0):
            raise ConfigError(f"beta parameters must be positive and finite, got ({a1}, {a2})")
        object.__setattr__(self, "a1", a1)
        object.__setattr__(self, "a2", a2)

    @property
    def mean(self) -> float:
        return self.a1 / (self.a1 + self.a2)

    @property
    def variance(self) -> float:
        t = self.a1 + self.a2
        return self.a1 * self.a2 / (t * t * (t + 1.0))

    def log_norm(self) -> float:
        """log of the beta function B(a1, a2)."""
        return math.lgamma(self.a1) + math.lgamma(self.a2) - math.lgamma(self.a1 + self.a2)

    def to_dict(self) -> dict:
        return {"a1": self.a1, "a2": self.a2}


def beta_pdf(params: BetaParams, s):
    """Beta density via log-gamma; the open interval (0, 1) only."""
    arr = np.asarray(s, dtype=np.float64)
    if np.any(~((arr > 0.0) & (arr < 1.0))):
        raise DataError("beta_pdf is defined on the open interval (0, 1); use an open quadrature rule")
    logp = (params.a1 - 1.0) * np.log(arr) + (params.a2 - 1.0) * np.log1p(-arr) - params.log_norm()
    out = np.exp(logp)
    return float(out) if out.ndim == 0 else out


def beta_moment_fit(confidences: Sequence[float]) -> BetaParams:
    """Method-of-moments beta fit with divide-by-N variance.

    a1 = m**2 (1 - m) / v - m and a2 = a1 (1 - m) / m.
    """
    x = np.asarray(confidences, dtype=np.float64)
    if x.size < 2:
        raise DegenerateFitError("moment fit degenerate: need at least 2 values")
    m = float(x.mean())
    # a constant sample has zero variance even when the mean rounds
    v = float(np.mean((x - m) ** 2)) if np.ptp(x) > 0 else 0.0
    if not 0.0 < m < 1.0 or v <= 0.0:
        raise DegenerateFitError(f"moment fit degenerate: mean {m!r}, variance {v!r}")
    a1 = m * m * (1.0 - m) / v - m
    a2 = a1 * (1.0 - m) / m
    if not (a1 > 0.0 and a2 > 0.0):
        raise DegenerateFitError(f"moment fit degenerate: fitted ({a1!r}, {a2!r})")
    return BetaParams(a1, a2)


def beta_sample(params: BetaParams, rng: RandomStream) -> float:
    """One Beta(a1, a2) variate as the ratio of two Marsaglia-Tsang gammas."""
    return rng.beta(params.a1, params.a2)


# ---------------------------------------------------------------------------
# GLM ground-truth curves

Link = Literal["logit", "log", "logflip"]
LINKS = ("logit", "log", "logflip")


def _link(name: str, x: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        if name == "logit":
            return np.log(x) - np.log1p(-x)
        if name == "log":
            return np.log(x)
        if name == "logflip":
            return np.log1p(-x)
    raise ConfigError(f"unknown link {name!r}")


def _inverse_link(name: str, y: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        if name == "logit":
            return logistic_neg(-y)
        if name == "log":
            return np.exp(y)
        if name == "logflip":
            return -np.expm1(y)
    raise ConfigError(f"unknown link {name!r}")


@dataclass(frozen=True)
class GlmCurve:
    inverse_link: Link
    intercept: float
    slope: float
    predictor_link: Link

    def __call__(self, s: np.ndarray) -> np.ndarray:
        x = _link(self.predictor_link, s)
        with np.errstate(invalid="ignore"):
            eta = self.intercept + (0.0 if self.slope == 0.0 else self.slope * x)
        return _inverse_link(self.inverse_link, eta)

    def to_dict(self) -> dict:
        return {"inverse_link": self.inverse_link, "intercept": self.intercept,
                "slope": self.slope, "predictor_link": self.predictor_link}


@dataclass(frozen=True)
class ConstantCurve:
    constant: float

    def __call__(self, s: np.ndarray) -> np.ndarray:
        return np.full_like(s, self.constant, dtype=np.float64)

    def to_dict(self) -> dict:
        return {"constant": self.constant}


@dataclass(frozen=True)
class FamilyCurve:
    """A member of the prior family used as a ground-truth curve."""

    params: PriorCurveParams

    def __call__(self, s: np.ndarray) -> np.ndarray:
        return np.asarray(g_eval(self.params, s))

    def to_dict(self) -> dict:
        return {"family": self.params.to_dict()}


@dataclass(frozen=True)
class TrueDistributionSpec:
    """Known calibration curve plus beta confidence density."""

    curve: GlmCurve | ConstantCurve | FamilyCurve
    confidence: BetaParams
    name: str | None = None

    def __post_init__(self):
        if isinstance(self.curve, GlmCurve):
            for link in (self.curve.inverse_link, self.curve.predictor_link):
                if link not in LINKS:
                    raise ConfigError(f"unknown link {link!r}")
        grid = np.linspace(0.0, 1.0, GRID_POINTS)
        vals = self.curve(grid)
        if not np.all((vals >= -_SLACK) & (vals <= 1.0 + _SLACK)):
            raise ConfigError(f"curve of spec {self.name or '?'} leaves [0, 1] on the validation grid")

    def curve_values(self, s):
        return link_eval(self, s)

    def to_dict(self) -> dict:
        out = {"curve": self.curve.to_dict(), "confidence": self.confidence.to_dict()}
        if self.name:
            out["name"] = self.name
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "TrueDistributionSpec":
        try:
            c = obj["curve"]
            if "constant" in c:
                curve = ConstantCurve(float(c["constant"]))
            elif "family" in c:
                curve = FamilyCurve(PriorCurveParams(**c["family"]))
            else:
                curve = GlmCurve(c["inverse_link"], float(c["intercept"]), float(c["slope"]), c["predictor_link"])
            conf = BetaParams(float(obj["confidence"]["a1"]), float(obj["confidence"]["a2"]))
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed distribution spec: {exc}") from None
        return cls(curve, conf, obj.get("name"))


def link_eval(spec: TrueDistributionSpec, s):
    """Ground-truth calibration value at ``s``; tiny excursions past [0, 1] are clipped."""
    arr = np.asarray(s, dtype=np.float64)
    _check_unit(arr)
    vals = spec.curve(arr)
    if np.any(~((vals >= -_SLACK) & (vals <= 1.0 + _SLACK))):
        raise ConfigError("curve value outside [0, 1]")
    out = np.clip(vals, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


BUILTIN_SPECS: dict[str, TrueDistributionSpec] = {
    "D1": TrueDistributionSpec(GlmCurve("logit", -0.88, 0.49, "logit"), BetaParams(2.77, 0.04), "D1"),
    "D2": TrueDistributionSpec(GlmCurve("logflip", -0.12, 0.58, "logflip"), BetaParams(2.17, 0.03), "D2"),
    "D3": TrueDistributionSpec(GlmCurve("log", -0.03, 1.27, "log"), BetaParams(1.12, 0.11), "D3"),
    "D4": TrueDistributionSpec(GlmCurve("logit", -0.77, -0.80, "logflip"), BetaParams(1.13, 0.20), "D4"),
    "D5": TrueDistributionSpec(GlmCurve("logit", -0.97, 0.34, "logit"), BetaParams(1.19, 0.22), "D5"),
}


def builtin_spec(name: str) -> TrueDistributionSpec:
    try:
        return BUILTIN_SPECS[name.upper()]
    except KeyError:
        raise ConfigError(f"unknown distribution {name!r}; built-ins are {', '.join(BUILTIN_SPECS)}") from None


def identity_spec(confidence: BetaParams = BetaParams(2.0, 2.0)) -> TrueDistributionSpec:
    return TrueDistributionSpec(GlmCurve("logit", 0.0, 1.0, "logit"), confidence, "identity")


def constant_spec(value: float, confidence: BetaParams = BetaParams(1.0, 1.0)) -> TrueDistributionSpec:
    if not 0.0 <= value <= 1.0:
        raise ConfigError(f"constant curve value {value} outside [0, 1]")
    return TrueDistributionSpec(ConstantCurve(float(value)), confidence, f"constant-{value:g}")
