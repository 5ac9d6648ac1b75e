import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from jsonschema import validate

from calibrax.calibrators import (
    CalibrationMap,
    apply_map,
    fit_histogram_binning,
    fit_isotonic,
    fit_map,
    fit_platt,
    fit_temperature,
    fit_tpm,
    scale_records,
)
from calibrax.data import Dataset, LogitRecord, ingest_logits, split
from calibrax.errors import ConfigError, DegenerateFitError
from calibrax.metrics import MetricConfig, ead, ece_bin
from calibrax.prior_curve import builtin_spec, identity_spec
from calibrax.schemas import load_schema
from calibrax.simulator import simulate_spec
from oracles import isotonic_brute, oracle_corpus

FOUR = Dataset([0.6, 0.7, 0.8, 0.9], [0, 1, 1, 1])
MID_GRID = np.linspace(0.05, 0.95, 181)


@pytest.fixture(scope="module")
def calibrated():
    return simulate_spec(identity_spec(), 5000, seed=21)


def calibrated_records(n, k, seed, scale=1.0):
    """Logit records whose labels are drawn from softmax(logits): calibrated at T=1."""
    rng = np.random.default_rng(seed)
    z = rng.normal(0, 2.0, size=(n, k))
    p = np.exp(z - z.max(axis=1, keepdims=True))
    p /= p.sum(axis=1, keepdims=True)
    labels = [int(rng.choice(k, p=row)) for row in p]
    return [LogitRecord(tuple(scale * row), y) for row, y in zip(z, labels)]


class TestTpm:
    def test_identity_recovery(self, calibrated):
        cmap = fit_tpm(calibrated)
        assert ead(cmap, lambda s: s) <= 0.02

    def test_overconfident_map_lowers_confidence(self):
        cmap = fit_tpm(simulate_spec(builtin_spec("D1"), 5000, seed=2))
        grid = np.linspace(0.5, 0.99, 50)
        assert np.all(cmap(grid) < grid)

    def test_deterministic(self, calibrated):
        assert fit_tpm(calibrated).to_dict() == fit_tpm(calibrated).to_dict()

    def test_identity_map_is_noop(self, calibrated):
        ident = CalibrationMap("tpm", {"alpha": 1.0, "beta": 1.0, "c": 0.0})
        out = apply_map(ident, calibrated)
        np.testing.assert_allclose(out.confidences, calibrated.confidences, rtol=0, atol=1e-15)
        np.testing.assert_array_equal(out.hits, calibrated.hits)


class TestHistogram:
    def test_bin_values(self):
        cmap = fit_histogram_binning(FOUR, 2)
        assert cmap.params["values"] == [0.5, 1.0]

    def test_lookup(self):
        cmap = fit_histogram_binning(FOUR, 2)
        assert apply_map(cmap, Dataset([0.65], [1])).confidences[0] == 0.5
        np.testing.assert_array_equal(cmap(np.array([0.0, 0.6, 0.9, 1.0])), [0.5, 0.5, 1.0, 1.0])

    def test_single_bin_constant(self):
        cmap = fit_histogram_binning(FOUR, 1)
        np.testing.assert_array_equal(cmap(MID_GRID), 0.75)

    def test_all_hits(self):
        cmap = fit_histogram_binning(Dataset([0.1, 0.5, 0.9], [1, 1, 1]), 3)
        np.testing.assert_array_equal(cmap(MID_GRID), 1.0)

    def test_too_many_bins(self):
        with pytest.raises(ConfigError):
            fit_histogram_binning(FOUR, 5)

    def test_monotone_on_calibrated_data(self, calibrated):
        assert np.all(np.diff(fit_histogram_binning(calibrated, 15)(np.linspace(0, 1, 1001))) >= -0.06)


class TestIsotonic:
    def test_single_merge(self):
        cmap = fit_isotonic(Dataset([0.2, 0.4], [1, 0]))
        np.testing.assert_array_equal(cmap(np.array([0.2, 0.4])), [0.5, 0.5])

    def test_no_pooling_needed(self):
        cmap = fit_isotonic(Dataset([0.1, 0.2, 0.3, 0.4], [0, 0, 1, 1]))
        np.testing.assert_array_equal(cmap(np.array([0.1, 0.2, 0.3, 0.4])), [0, 0, 1, 1])

    def test_extends_by_nearest_value(self):
        cmap = fit_isotonic(Dataset([0.3, 0.6], [0, 1]))
        np.testing.assert_array_equal(cmap(np.array([0.0, 1.0])), [0.0, 1.0])

    def test_matches_exhaustive_oracle_on_corpus(self):
        for conf, hits in oracle_corpus():
            xs, expected = isotonic_brute(conf, hits)
            cmap = fit_isotonic(Dataset(conf, hits))
            got = cmap(np.array(xs))
            np.testing.assert_allclose(got, expected, atol=1e-12)
            assert np.all(np.diff(got) >= 0)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.tuples(st.floats(0, 1), st.integers(0, 1)), min_size=1, max_size=12))
    def test_matches_exhaustive_oracle(self, pairs):
        conf, hits = zip(*pairs)
        xs, expected = isotonic_brute(list(conf), list(hits))
        np.testing.assert_allclose(fit_isotonic(Dataset(conf, hits))(np.array(xs)), expected, atol=1e-12)


class TestPlatt:
    def test_identity_on_calibrated_data(self, calibrated):
        cmap = fit_platt(calibrated)
        assert cmap.params["w"] == pytest.approx(1, abs=0.1)
        assert cmap.params["b"] == pytest.approx(0, abs=0.1)
        assert np.max(np.abs(cmap(MID_GRID) - MID_GRID)) <= 0.02

    def test_single_class(self):
        with pytest.raises(DegenerateFitError):
            fit_platt(Dataset([0.2, 0.9], [1, 1]))

    def test_separable_flagged(self):
        cmap = fit_platt(Dataset([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]))
        assert "separable" in cmap.flags
        assert np.isfinite(cmap.params["w"])

    def test_flip_symmetry(self, calibrated):
        flipped = Dataset(calibrated.confidences, 1 - calibrated.hits)
        a = fit_platt(calibrated)(MID_GRID)
        b = fit_platt(flipped)(MID_GRID)
        assert np.max(np.abs(b - (1 - a))) <= 0.02


class TestTemperature:
    def test_scaled_logits(self):
        recs = calibrated_records(5000, 4, seed=1, scale=2.0)
        assert fit_temperature(recs).params["temperature"] == pytest.approx(2.0, abs=0.1)

    def test_already_optimal(self):
        recs = calibrated_records(5000, 4, seed=2)
        assert fit_temperature(recs).params["temperature"] == pytest.approx(1.0, abs=0.05)

    def test_single_record(self):
        with pytest.raises(DegenerateFitError):
            fit_temperature([LogitRecord((1.0, 0.0), 0)])

    def test_separable_single_label_diverges(self):
        recs = [LogitRecord((3.0, 0.0), 0), LogitRecord((2.0, 1.0), 0)]
        cmap = fit_temperature(recs)
        assert "diverged" in cmap.flags

    def test_apply_equals_scaled_ingest(self):
        recs = calibrated_records(200, 3, seed=3)
        cmap = fit_temperature(recs)
        t = cmap.params["temperature"]
        assert apply_map(cmap, recs) == ingest_logits(scale_records(recs, t))

    def test_needs_records(self):
        cmap = CalibrationMap("temperature", {"temperature": 1.5})
        with pytest.raises(ConfigError):
            apply_map(cmap, FOUR)
        with pytest.raises(ConfigError):
            fit_map("temperature", FOUR)


class TestMaps:
    @pytest.mark.parametrize("kind", ["tpm", "histogram", "platt", "isotonic"])
    def test_hits_preserved_and_roundtrip(self, calibrated, kind):
        cmap = fit_map(kind, calibrated)
        out = apply_map(cmap, calibrated)
        np.testing.assert_array_equal(out.hits, calibrated.hits)
        assert np.all((out.confidences >= 0) & (out.confidences <= 1))
        obj = cmap.to_dict()
        validate(obj, load_schema("calibration_map"))
        again = CalibrationMap.from_dict(obj)
        np.testing.assert_array_equal(again(MID_GRID), cmap(MID_GRID))

    @pytest.mark.parametrize("kind", ["tpm", "isotonic"])
    def test_monotone(self, calibrated, kind):
        assert np.all(np.diff(fit_map(kind, calibrated)(np.linspace(0, 1, 1001))) >= 0)

    def test_histogram_monotone_on_monotone_data(self):
        d = Dataset(np.linspace(0.01, 0.99, 40), [0] * 20 + [1] * 20)
        assert np.all(np.diff(fit_histogram_binning(d, 5)(np.linspace(0, 1, 1001))) >= 0)

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            fit_map("dirichlet", FOUR)
        with pytest.raises(ConfigError):
            CalibrationMap("dirichlet", {})

    @pytest.mark.parametrize("kind", ["tpm", "histogram", "platt", "isotonic"])
    def test_recalibration_direction(self, calibrated, kind):
        # squash confidences towards 1 to make a miscalibrated copy
        skewed = calibrated.with_confidences(calibrated.confidences ** 0.3)
        train, test = split(skewed, 0.5, seed=5)
        cfg = MetricConfig(bins=15)
        before = ece_bin(test, cfg)
        after = ece_bin(apply_map(fit_map(kind, train), test), cfg)
        assert after <= before
