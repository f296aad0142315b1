# MIT License
# Copyright (c) 2024-present Léo Colombaro

"""Tests for metrics module."""

import math
import unittest

import numpy as np
import pytest

from sketchattn.core import AttentionInput, RngSeed, random_attention_input
from sketchattn.errors import InvalidArgumentError
from sketchattn.metrics import (
    BoundParams,
    Lemma1Summary,
    binomial_tolerance,
    error_report,
    flops_estimate,
    power_iteration,
    quality_coefficient,
    required_pilot_size,
    spectral_norm,
    verify_jl,
    verify_lemma1,
    verify_prop1,
    verify_sketch_unbiased,
)
from sketchattn.oracle import score_matrices
from sketchattn.sketch import SketchKind, optimal_subsample_probs


class TestSpectralNorm(unittest.TestCase):
    """Test cases for power_iteration and spectral_norm."""

    def test_matches_svd(self):
        rng = np.random.default_rng(0)
        for shape in [(5, 3), (3, 5), (16, 16), (64, 64), (40, 7)]:
            matrix = rng.normal(size=shape)
            expected = np.linalg.norm(matrix, 2)
            self.assertAlmostEqual(spectral_norm(matrix) / expected, 1.0, places=7)

    def test_zero_matrix(self):
        result = power_iteration(np.zeros((4, 3)))
        self.assertEqual(result.value, 0.0)
        self.assertTrue(result.converged)

    def test_rank_one(self):
        u, v = np.array([1.0, 2.0, 2.0]), np.array([3.0, 4.0])
        self.assertAlmostEqual(spectral_norm(np.outer(u, v)), 15.0)

    def test_not_converged_is_reported(self):
        matrix = np.random.default_rng(1).normal(size=(10, 10))
        result = power_iteration(matrix, max_iter=1)
        self.assertFalse(result.converged)
        self.assertEqual(result.iterations, 1)
        self.assertLessEqual(result.value, np.linalg.norm(matrix, 2) + 1e-12)

    def test_invalid_tolerance(self):
        with self.assertRaises(InvalidArgumentError):
            power_iteration(np.eye(2), tol=0.0)


class TestErrorReport(unittest.TestCase):
    """Test cases for error_report."""

    def test_norm_ordering(self):
        for trial in range(10):
            rng = RngSeed(50).for_trial(trial).generator()
            exact = rng.normal(size=(20, 6))
            approx = exact + 0.1 * rng.normal(size=(20, 6))
            report = error_report(exact, approx)
            self.assertLessEqual(report.spectral_loss, report.frobenius_loss + 1e-12)
            self.assertLessEqual(
                report.frobenius_loss, math.sqrt(6) * report.spectral_loss + 1e-12
            )

    def test_identical(self):
        exact = np.ones((3, 2))
        report = error_report(exact, exact.copy())
        self.assertEqual(report.spectral_loss, 0.0)
        self.assertEqual(report.relative_frobenius, 0.0)

    def test_zero_reference(self):
        report = error_report(np.zeros((2, 2)), np.eye(2))
        self.assertEqual(report.relative_spectral, math.inf)
        self.assertAlmostEqual(report.spectral_loss, 1.0)

    def test_padded_rows_ignored(self):
        exact = np.vstack([np.eye(2), np.zeros((1, 2))])
        approx = np.vstack([np.eye(2), np.full((1, 2), 9.0)])
        self.assertEqual(error_report(exact, approx, unpadded_len=2).frobenius_loss, 0.0)

    def test_shape_mismatch(self):
        with self.assertRaises(InvalidArgumentError):
            error_report(np.zeros((2, 2)), np.zeros((2, 3)))


@pytest.mark.parametrize(
    ("method", "d", "expected"),
    [
        ("standard", 256, 67_108_864),
        ("skeinformer", 256, 33_554_432),
        ("linformer", 256, 33_554_432),
        ("informer", 256, 25_165_824),
        ("vmean", 256, 32_768),
    ],
)
def test_flops_estimate(method, d, expected):
    assert flops_estimate(method, 1024, 32, d) == expected


def test_flops_unknown_method():
    with pytest.raises(InvalidArgumentError):
        flops_estimate("performer", 8, 8, 8)


def test_bound_params():
    params = BoundParams(beta=1.0, delta=0.1)
    assert params.eta == pytest.approx(1 + math.sqrt(8 * math.log(10)))
    assert params.frobenius_bound(4, 2.0, 3.0) == pytest.approx(params.eta**2 * 1.5)
    with pytest.raises(InvalidArgumentError):
        BoundParams(beta=0.0, delta=0.1)
    with pytest.raises(InvalidArgumentError):
        BoundParams(beta=1.0, delta=1.0)


def test_quality_coefficient():
    inp = random_attention_input(16, 3, 1.0, RngSeed(2))
    b = score_matrices(inp).b
    optimal = optimal_subsample_probs(b, inp.v).values
    assert quality_coefficient(optimal, b, inp.v) == pytest.approx(1.0)
    flattened = 0.5 * optimal + 0.5 / 16
    assert 0.5 <= quality_coefficient(flattened, b, inp.v) < 1.0


def test_required_pilot_size():
    assert required_pilot_size(1.0, 10, 0.2) == math.ceil(2 * math.log(100))
    assert required_pilot_size(0.0, 10, 0.2) == math.inf


def test_binomial_tolerance():
    assert binomial_tolerance(0.1, 500) == pytest.approx(0.1 + 3 * math.sqrt(0.09 / 500))


class TestVerifyProp1(unittest.TestCase):
    """Test cases for verify_prop1."""

    def test_passes(self):
        summary = verify_prop1(32, 4, 8, 0.1, 100, RngSeed(1))
        self.assertTrue(summary.passed)
        self.assertLess(summary.mean_sq_error, summary.mean_bound)
        self.assertAlmostEqual(summary.min_beta, 1.0)

    def test_flattened_probabilities(self):
        summary = verify_prop1(32, 4, 8, 0.1, 100, RngSeed(1), flatten=0.5)
        self.assertTrue(summary.passed)
        self.assertLess(summary.min_beta, 1.0)

    def test_zero_values_never_violate(self):
        def zero_v(seed):
            base = random_attention_input(16, 2, 1.0, seed)
            return AttentionInput(base.q, base.k, np.zeros((16, 2)))

        summary = verify_prop1(16, 2, 4, 0.1, 100, RngSeed(3), input_factory=zero_v)
        self.assertEqual(summary.violation_rate, 0.0)
        self.assertEqual(summary.mean_sq_error, 0.0)

    def test_workers_do_not_change_result(self):
        serial = verify_prop1(16, 2, 4, 0.2, 100, RngSeed(9))
        parallel = verify_prop1(16, 2, 4, 0.2, 100, RngSeed(9), workers=3)
        self.assertEqual(serial, parallel)

    def test_default_setting_passes(self):
        summary = verify_prop1(64, 8, 16, 0.1, 500, RngSeed(0), workers=2)
        self.assertTrue(summary.passed)
        self.assertAlmostEqual(summary.tolerance, 0.1 + 3 * math.sqrt(0.09 / 500))

    def test_squared_error_decays_as_inverse_d(self):
        d_values = (8, 16, 32, 64)
        summaries = [
            verify_prop1(64, 8, d, 0.1, 500, RngSeed(0), workers=2) for d in d_values
        ]
        scale = np.mean([s.mean_sq_error * s.d for s in summaries])
        for summary in summaries:
            trend = scale / summary.d
            self.assertLessEqual(
                abs(summary.mean_sq_error - trend), 3 * summary.sq_error_se
            )

    def test_requires_trials(self):
        with self.assertRaises(InvalidArgumentError):
            verify_prop1(16, 2, 4, 0.1, 99, RngSeed())


class TestVerifyLemma1(unittest.TestCase):
    """Test cases for verify_lemma1."""

    def test_delta_range(self):
        with self.assertRaises(InvalidArgumentError):
            verify_lemma1(16, 2, 0.6, 10, RngSeed())

    def test_identical_columns_never_fail(self):
        """Uniform score rows make the estimate equal the optimum."""

        def equal_keys(seed):
            base = random_attention_input(12, 3, 1.0, seed)
            return AttentionInput(base.q, np.ones((12, 3)), base.v)

        summary = verify_lemma1(12, 3, 0.2, 20, RngSeed(4), input_factory=equal_keys)
        self.assertEqual(summary.failure_rate, 0.0)
        self.assertEqual(summary.capped_trials, 20)
        self.assertEqual(summary.mean_pilot_size, 12.0)

    def test_default_setting_passes(self):
        summary = verify_lemma1(128, 8, 0.2, 200, RngSeed(0), workers=2)
        self.assertTrue(summary.passed)
        self.assertEqual(summary.capped_failure_rate, 0.0)
        self.assertLessEqual(summary.failure_rate, summary.tolerance)

    def test_passed_ignores_capped_trials(self):
        summary = Lemma1Summary(
            failure_rate=0.5,
            tolerance=0.3,
            trials=10,
            seed=0,
            mean_pilot_size=10.0,
            max_required_pilot=100.0,
            capped_trials=5,
            capped_failure_rate=0.8,
            uncapped_failure_rate=0.2,
        )
        self.assertTrue(summary.passed)

    def test_mild_inputs_pass(self):
        summary = verify_lemma1(32, 4, 0.2, 20, RngSeed(6), stdev=0.5)
        self.assertTrue(summary.passed)
        self.assertLessEqual(summary.mean_pilot_size, 32)


class TestVerifySketchUnbiased(unittest.TestCase):
    """Test cases for verify_sketch_unbiased."""

    def test_gaussian(self):
        summary = verify_sketch_unbiased(SketchKind.GAUSSIAN, 4, 2, 2000, RngSeed(1))
        self.assertTrue(summary.passed)

    def test_subsample(self):
        summary = verify_sketch_unbiased(
            SketchKind.SUBSAMPLE_WITH_REPLACEMENT, 4, 2, 2000, RngSeed(1), workers=2
        )
        self.assertTrue(summary.passed)

    def test_without_replacement_rejected(self):
        with self.assertRaises(InvalidArgumentError):
            verify_sketch_unbiased(
                SketchKind.SUBSAMPLE_WITHOUT_REPLACEMENT, 4, 2, 100, RngSeed()
            )


def test_verify_jl():
    summary = verify_jl(64, 256, 0.3, 0.1, 200, RngSeed(2))
    assert summary.passed
    assert summary.failure_rate <= summary.tolerance
    with pytest.raises(InvalidArgumentError):
        verify_jl(64, 256, 0.3, 1.5, 200, RngSeed(2))
