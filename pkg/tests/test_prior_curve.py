import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from scipy import integrate as sp_integrate
from scipy import special, stats

from calibrax.errors import ConfigError, DataError, DegenerateFitError
from calibrax.prior_curve import (
    BUILTIN_SPECS,
    BetaParams,
    PriorCurveParams,
    TrueDistributionSpec,
    beta_moment_fit,
    beta_pdf,
    beta_sample,
    builtin_spec,
    constant_spec,
    g_eval,
    identity_spec,
    link_eval,
)
from calibrax.rng import RandomStream


def bayes_posterior(a0, b0, a1, b1, prior1, s):
    """P(H=1 | s) from beta class-conditionals, computed directly."""
    log_ratio = (
        math.log1p(-prior1) + stats.beta.logpdf(s, a0, b0)
        - math.log(prior1) - stats.beta.logpdf(s, a1, b1)
    )
    return 1.0 / (1.0 + np.exp(log_ratio))


def closure_params(a0, b0, a1, b1, prior1):
    c = (special.betaln(a1, b1) - special.betaln(a0, b0)) + math.log((1 - prior1) / prior1)
    return PriorCurveParams(a1 - a0, b0 - b1, c)


CLOSURE_GRID = np.linspace(0.001, 0.999, 101)


def random_closure_case(rng):
    a0 = rng.uniform(0.2, 5)
    b1 = rng.uniform(0.2, 5)
    a1 = a0 + rng.uniform(0, 3)
    b0 = b1 + rng.uniform(0, 3)
    return a0, b0, a1, b1, rng.uniform(0.05, 0.95)


class TestGEval:
    def test_identity(self):
        assert g_eval(PriorCurveParams(1, 1, 0), 0.3) == pytest.approx(0.3, abs=1e-15)

    def test_hand_value(self):
        assert g_eval(PriorCurveParams(2, 1, 0), 0.5) == pytest.approx(1 / 3, abs=1e-15)

    def test_endpoints(self):
        ident = PriorCurveParams(1, 1, 0)
        assert g_eval(ident, 0.0) == 0.0
        assert g_eval(ident, 1.0) == 1.0

    def test_endpoint_limits_with_zero_exponents(self):
        p = PriorCurveParams(0, 0, math.log(3))
        assert g_eval(p, 0.0) == pytest.approx(0.25)
        assert g_eval(p, 1.0) == pytest.approx(0.25)
        assert g_eval(PriorCurveParams(0, 2, 0), 1.0) == 1.0
        assert g_eval(PriorCurveParams(2, 0, 0), 0.0) == 0.0

    @pytest.mark.parametrize("s", [-0.1, 1.1, float("nan")])
    def test_outside_domain(self, s):
        with pytest.raises(DataError):
            g_eval(PriorCurveParams(), s)

    def test_negative_exponent_rejected(self):
        with pytest.raises(ConfigError):
            PriorCurveParams(-0.1, 1, 0)

    def test_monotone_random_params(self):
        rng = np.random.default_rng(5)
        grid = np.linspace(0, 1, 1001)
        for _ in range(10_000):
            p = PriorCurveParams(rng.uniform(0, 10), rng.uniform(0, 10), rng.uniform(-20, 20))
            v = g_eval(p, grid)
            assert np.all(np.diff(v) >= 0)
            assert v.min() >= 0 and v.max() <= 1

    def test_bayes_posterior_closure(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            case = random_closure_case(rng)
            np.testing.assert_allclose(
                g_eval(closure_params(*case), CLOSURE_GRID),
                bayes_posterior(*case, CLOSURE_GRID),
                rtol=0, atol=1e-10,
            )


class TestBetaPdf:
    def test_uniform(self):
        np.testing.assert_allclose(beta_pdf(BetaParams(1, 1), np.array([0.1, 0.5, 0.9])), 1.0)

    def test_hand_value(self):
        assert beta_pdf(BetaParams(2, 2), 0.5) == pytest.approx(1.5, rel=1e-14)

    def test_matches_scipy(self):
        s = np.linspace(0.01, 0.99, 50)
        for a1, a2 in [(2.77, 0.04), (0.5, 0.5), (12, 3)]:
            np.testing.assert_allclose(beta_pdf(BetaParams(a1, a2), s), stats.beta.pdf(s, a1, a2), rtol=1e-12)

    def test_skewed_density_normalized(self):
        params = BetaParams(2.77, 0.04)
        # split at 1/2 and integrate the right piece in t = 1 - s so the
        # singular end sits at t = 0 where quad resolves it
        left, _ = sp_integrate.quad(lambda s: beta_pdf(params, s), 0, 0.5)
        right, _ = sp_integrate.quad(lambda t: beta_pdf(params, 1 - t), 0, 0.5, limit=200)
        mass = left + right
        assert mass == pytest.approx(1.0, abs=1e-4)

    @pytest.mark.parametrize("s", [0.0, 1.0])
    def test_endpoint_rejected(self, s):
        with pytest.raises(DataError):
            beta_pdf(BetaParams(0.5, 0.5), s)

    @pytest.mark.parametrize("a1,a2", [(0, 1), (1, -1), (float("inf"), 1)])
    def test_invalid_params(self, a1, a2):
        with pytest.raises(ConfigError):
            BetaParams(a1, a2)


class TestMomentFit:
    def test_symmetric(self):
        d = math.sqrt(0.05)
        fit = beta_moment_fit([0.5 - d, 0.5 + d])
        assert (fit.a1, fit.a2) == pytest.approx((2, 2), rel=1e-12)
        assert fit.mean == pytest.approx(0.5) and fit.variance == pytest.approx(0.05)

    def test_skewed(self):
        fit = beta_moment_fit([0.7, 0.9])
        assert (fit.a1, fit.a2) == pytest.approx((12, 3), rel=1e-12)

    @pytest.mark.parametrize("values", [[0.7, 0.7, 0.7], [0.0, 0.0], [1.0, 1.0], [0.4]])
    def test_degenerate(self, values):
        with pytest.raises(DegenerateFitError, match="moment fit degenerate"):
            beta_moment_fit(values)

    @settings(max_examples=200)
    @given(st.floats(0.05, 50), st.floats(0.05, 50))
    def test_inverts_exact_moments(self, a1, a2):
        b = BetaParams(a1, a2)
        half = math.sqrt(b.variance)
        assume(b.mean - half > 0 and b.mean + half < 1)
        fit = beta_moment_fit([b.mean - half, b.mean + half])
        assert fit.a1 == pytest.approx(a1, rel=1e-9)
        assert fit.a2 == pytest.approx(a2, rel=1e-9)


class TestBetaSample:
    @staticmethod
    def draws(params, seed, n):
        rng = RandomStream(seed)
        return np.array([beta_sample(params, rng) for _ in range(n)])

    def test_uniform_mean(self):
        assert abs(self.draws(BetaParams(1, 1), 42, 100_000).mean() - 0.5) <= 0.003

    def test_skewed_mean(self):
        assert abs(self.draws(BetaParams(12, 3), 42, 100_000).mean() - 0.8) <= 0.004

    def test_deterministic(self):
        np.testing.assert_array_equal(self.draws(BetaParams(0.5, 2), 9, 200), self.draws(BetaParams(0.5, 2), 9, 200))

    @pytest.mark.parametrize("a1,a2", [(0.3, 0.7), (2.77, 0.04), (5, 5)])
    def test_distribution_matches(self, a1, a2):
        # Pointwise ECDF bands; a plain KS test is unusable for heavily
        # skewed shapes whose mass within 1e-16 of 1 rounds to exactly 1.
        n = 20_000
        x = self.draws(BetaParams(a1, a2), 3, n)
        assert np.all((x >= 0) & (x <= 1))
        for q in (0.05, 0.25, 0.5, 0.75):
            t = stats.beta.ppf(q, a1, a2)
            assert abs(np.mean(x <= t) - q) <= 4 * math.sqrt(q * (1 - q) / n)


class TestLinks:
    def test_d1(self):
        s = 0.9
        expected = 1 / (1 + math.exp(-(-0.88 + 0.49 * math.log(s / (1 - s)))))
        assert link_eval(builtin_spec("D1"), s) == pytest.approx(expected, abs=1e-14)
        assert link_eval(builtin_spec("D1"), s) == pytest.approx(0.5490, abs=5e-5)

    def test_d2(self):
        expected = 1 - math.exp(-0.12 + 0.58 * math.log(0.1))
        assert link_eval(builtin_spec("D2"), 0.9) == pytest.approx(expected, abs=1e-14)
        assert link_eval(builtin_spec("D2"), 0.9) == pytest.approx(0.7667, abs=5e-5)

    def test_identity(self):
        s = np.linspace(0, 1, 11)
        np.testing.assert_allclose(link_eval(identity_spec(), s), s, atol=1e-15)

    def test_builtins_in_range_and_monotone(self):
        grid = np.linspace(0, 1, 1001)
        for name in BUILTIN_SPECS:
            v = link_eval(builtin_spec(name), grid)
            assert v.min() >= 0 and v.max() <= 1
            if name != "D4":
                assert np.all(np.diff(v) >= 0)

    def test_invalid_glm_rejected(self):
        bad = {"curve": {"inverse_link": "log", "intercept": 1.0, "slope": 1.0, "predictor_link": "logit"},
               "confidence": {"a1": 1, "a2": 1}}
        with pytest.raises(ConfigError):
            TrueDistributionSpec.from_dict(bad)

    def test_dict_roundtrip(self):
        for name in BUILTIN_SPECS:
            spec = builtin_spec(name)
            again = TrueDistributionSpec.from_dict(spec.to_dict())
            np.testing.assert_array_equal(link_eval(again, np.linspace(0, 1, 101)),
                                          link_eval(spec, np.linspace(0, 1, 101)))
        assert link_eval(constant_spec(0.3), 0.8) == 0.3

    def test_unknown_builtin(self):
        with pytest.raises(ConfigError):
            builtin_spec("D9")
