"""Gate semantics against the nested-loop oracle, boundary strictness,
truncation, ablation switches, and threshold monotonicity."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prmgate.core import Config
from prmgate.ensemble import ForwardOutput
from prmgate.uncertainty import (
    aleatoric_raw,
    aleatoric_score,
    ensemble_stats,
    first_error_index,
    gates,
    is_uncertain,
)

from .oracles import oracle_gates


def _config(delta=0.5, delta_pred=0.95, delta_std=0.005):
    return Config(
        n_heads=2, feature_dim=2, delta=delta, delta_pred=delta_pred, delta_std=delta_std
    )


class TestEnsembleStats:
    def test_two_head_hand_case(self):
        out = ForwardOutput(probs=np.array([[0.2], [0.8]]))
        mu, sigma = ensemble_stats(out)
        assert mu[0] == pytest.approx(0.5, abs=0)
        assert sigma[0] == pytest.approx(0.3, abs=1e-15)  # population std, ddof=0

    def test_single_head_has_zero_sigma(self):
        out = ForwardOutput(probs=np.array([[0.7, 0.1, 0.9]]))
        mu, sigma = ensemble_stats(out)
        np.testing.assert_array_equal(mu, [0.7, 0.1, 0.9])
        np.testing.assert_array_equal(sigma, [0.0, 0.0, 0.0])

    def test_head_permutation_invariance(self):
        rng = np.random.default_rng(0)
        probs = rng.random((5, 7))
        mu1, s1 = ensemble_stats(ForwardOutput(probs=probs))
        mu2, s2 = ensemble_stats(ForwardOutput(probs=probs[::-1].copy()))
        np.testing.assert_allclose(mu1, mu2, atol=1e-15)
        np.testing.assert_allclose(s1, s2, atol=1e-15)


class TestFirstErrorIndex:
    def test_strictly_below_only(self):
        assert first_error_index(np.array([0.5, 0.5]), 0.5) is None
        assert first_error_index(np.array([0.5, 0.49]), 0.5) == 1

    def test_earliest_crossing_wins(self):
        assert first_error_index(np.array([0.9, 0.3, 0.1]), 0.5) == 1

    def test_no_crossing(self):
        assert first_error_index(np.array([0.9, 0.8]), 0.5) is None


class TestGates:
    def test_maximally_vague_step_fires_aleatoric(self):
        report = gates(np.array([0.5]), np.array([0.3]), _config())
        assert report.predicted_first_error is None
        assert report.aleatoric and report.epistemic
        assert is_uncertain(report)

    def test_confident_and_agreeing_fires_nothing(self):
        report = gates(np.array([0.99, 0.99]), np.array([0.001, 0.0]), _config())
        assert not report.aleatoric and not report.epistemic
        assert not is_uncertain(report)

    def test_strict_boundaries_do_not_fire(self):
        config = _config(delta_pred=0.95, delta_std=0.005)
        report = gates(np.array([0.95]), np.array([0.005]), config)
        assert not report.aleatoric  # max(mu,1-mu) == delta_pred exactly
        assert not report.epistemic  # sigma == delta_std exactly

    def test_truncation_hides_uncertainty_after_predicted_error(self):
        # step 0 predicted erroneous and confident; step 1 wildly uncertain
        config = _config(delta=0.5)
        mu = np.array([0.01, 0.5])
        sigma = np.array([0.0, 0.4])
        report = gates(mu, sigma, config)
        assert report.predicted_first_error == 0
        assert report.scan_end == 0
        assert not report.aleatoric and not report.epistemic

    def test_scan_covers_whole_trajectory_without_prediction(self):
        config = _config()
        mu = np.array([0.99, 0.99, 0.6])
        sigma = np.zeros(3)
        report = gates(mu, sigma, config)
        assert report.predicted_first_error is None
        assert report.scan_end == 2
        assert report.aleatoric  # the last step is vague

    def test_aleatoric_off_switch(self):
        config = _config(delta_pred=0.5)
        mu = np.array([0.5, 0.5, 0.5])
        report = gates(mu, np.zeros(3), config)
        assert not report.aleatoric

    def test_epistemic_off_switch(self):
        config = _config(delta_std=math.inf)
        report = gates(np.array([0.9]), np.array([1e9]), config)
        assert not report.epistemic

    def test_shape_validation(self):
        with pytest.raises(ValueError):
            gates(np.array([0.5, 0.5]), np.array([0.1]), _config())
        with pytest.raises(ValueError):
            gates(np.array([]), np.array([]), _config())

    def test_thousand_random_instances_match_oracle(self):
        rng = np.random.default_rng(2024)
        for _ in range(1000):
            n = int(rng.integers(1, 9))
            mu = rng.random(n)
            sigma = rng.random(n) * 0.5
            delta = float(rng.uniform(0.05, 0.95))
            delta_pred = float(rng.uniform(0.5, 1.0))
            delta_std = float(rng.uniform(0.0, 0.5))
            config = Config(
                n_heads=2, feature_dim=2,
                delta=delta, delta_pred=delta_pred, delta_std=delta_std,
            )
            report = gates(mu, sigma, config)
            pred, scan_end, alea, epis = oracle_gates(
                [float(v) for v in mu], [float(v) for v in sigma],
                delta, delta_pred, delta_std,
            )
            assert report.predicted_first_error == pred
            assert report.scan_end == scan_end
            assert report.aleatoric == alea
            assert report.epistemic == epis


@settings(max_examples=200, deadline=None)
@given(st.data())
def test_threshold_monotonicity(data):
    """Widening thresholds can only grow the uncertain set."""
    n = data.draw(st.integers(1, 6))
    mu = np.array([data.draw(st.floats(0, 1)) for _ in range(n)])
    sigma = np.array([data.draw(st.floats(0, 0.5)) for _ in range(n)])
    dp_lo = data.draw(st.floats(0.5, 1.0))
    dp_hi = data.draw(st.floats(dp_lo, 1.0))
    ds_hi = data.draw(st.floats(0.0, 0.5))
    ds_lo = data.draw(st.floats(0.0, ds_hi))
    tight = Config(n_heads=2, feature_dim=2, delta_pred=dp_lo, delta_std=ds_hi)
    loose = Config(n_heads=2, feature_dim=2, delta_pred=dp_hi, delta_std=ds_lo)
    if is_uncertain(gates(mu, sigma, tight)):
        assert is_uncertain(gates(mu, sigma, loose))


class TestDiagnostics:
    def test_aleatoric_raw_hand_values(self):
        vals = aleatoric_raw(np.array([0.0, 1.0, 0.5]))
        assert vals[0] == 0.0
        assert vals[1] == pytest.approx(0.0, abs=0)
        assert vals[2] == pytest.approx(0.5 * math.log(0.5), abs=1e-15)

    def test_aleatoric_score_is_prefix_min_confidence(self):
        mu = np.array([0.9, 0.55, 0.99])
        assert aleatoric_score(mu, 2) == pytest.approx(0.55, abs=1e-15)
        assert aleatoric_score(mu, 0) == pytest.approx(0.9, abs=1e-15)
