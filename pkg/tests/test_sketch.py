# MIT License
# Copyright (c) 2024-present Léo Colombaro

"""Tests for sketch module."""

import math
import unittest

import numpy as np
import pytest

from sketchattn.core import RngSeed
from sketchattn.errors import InvalidArgumentError
from sketchattn.sketch import (
    SketchKind,
    SketchSpec,
    draw_subsample,
    jl_distortion_check,
    materialize_sketch,
    normalize_weights,
    optimal_subsample_probs,
)


class TestSketchSpec(unittest.TestCase):
    """Test cases for SketchSpec validation."""

    def test_probs_must_sum_to_one(self):
        with self.assertRaises(InvalidArgumentError):
            SketchSpec(SketchKind.SUBSAMPLE_WITH_REPLACEMENT, 2, probs=[0.5, 0.4])

    def test_negative_probs(self):
        with self.assertRaises(InvalidArgumentError):
            SketchSpec(SketchKind.SUBSAMPLE_WITH_REPLACEMENT, 2, probs=[1.5, -0.5])

    def test_missing_probs(self):
        with self.assertRaises(InvalidArgumentError):
            SketchSpec(SketchKind.SUBSAMPLE_WITHOUT_REPLACEMENT, 2)

    def test_without_replacement_needs_support(self):
        """Cannot draw more distinct indices than positive probabilities."""
        with self.assertRaises(InvalidArgumentError):
            SketchSpec(
                SketchKind.SUBSAMPLE_WITHOUT_REPLACEMENT, 3, probs=[0.5, 0.5, 0.0]
            )

    def test_gaussian_needs_size(self):
        with self.assertRaises(InvalidArgumentError):
            SketchSpec(SketchKind.GAUSSIAN, 2)

    def test_kind_from_string(self):
        spec = SketchSpec("gaussian", 2, size=4)
        self.assertIs(spec.kind, SketchKind.GAUSSIAN)
        self.assertEqual(spec.n, 4)


def test_with_replacement_scale():
    """Column k is scaled by 1/√(d·p_k)."""
    probs = np.array([0.1, 0.2, 0.3, 0.4])
    draw = draw_subsample(
        SketchSpec(SketchKind.SUBSAMPLE_WITH_REPLACEMENT, 6, RngSeed(3), probs=probs)
    )
    assert draw.indices.shape == (6,)
    np.testing.assert_allclose(draw.scale, 1.0 / np.sqrt(6 * probs[draw.indices]))


def test_without_replacement_distinct_and_supported():
    probs = np.array([0.0, 0.25, 0.25, 0.0, 0.25, 0.25])
    for trial in range(50):
        draw = draw_subsample(
            SketchSpec(
                SketchKind.SUBSAMPLE_WITHOUT_REPLACEMENT,
                3,
                RngSeed(8).for_trial(trial),
                probs=probs,
            )
        )
        assert len(set(draw.indices.tolist())) == 3
        assert np.all(probs[draw.indices] > 0)
        np.testing.assert_array_equal(draw.scale, 1.0)


def test_without_replacement_first_pick_follows_probs():
    """The first winner of the race is distributed as ``probs``."""
    probs = np.array([0.5, 0.3, 0.2])
    trials = 4000
    counts = np.zeros(3)
    for trial in range(trials):
        draw = draw_subsample(
            SketchSpec(
                SketchKind.SUBSAMPLE_WITHOUT_REPLACEMENT,
                2,
                RngSeed(17).for_trial(trial),
                probs=probs,
            )
        )
        counts[draw.indices[0]] += 1
    stderr = np.sqrt(probs * (1 - probs) / trials)
    assert np.all(np.abs(counts / trials - probs) <= 5 * stderr)


def test_materialize_subsample_has_one_entry_per_column():
    probs = np.full(5, 0.2)
    s = materialize_sketch(
        SketchSpec(SketchKind.SUBSAMPLE_WITH_REPLACEMENT, 4, RngSeed(1), probs=probs)
    )
    assert s.shape == (5, 4)
    np.testing.assert_array_equal(np.count_nonzero(s, axis=0), 1)
    np.testing.assert_allclose(s.sum(axis=0), 1.0 / math.sqrt(4 * 0.2))


def test_materialize_gaussian_variance():
    s = materialize_sketch(SketchSpec(SketchKind.GAUSSIAN, 50, RngSeed(2), size=200))
    assert s.shape == (200, 50)
    assert abs(s.var() * 50 - 1.0) < 0.1


def test_normalize_weights_uniform_fallback():
    probs = normalize_weights(np.zeros(6), 4, "test")
    assert probs.uniform_fallback
    np.testing.assert_allclose(probs.values, [0.25, 0.25, 0.25, 0.25, 0.0, 0.0])


def test_normalize_weights_ignores_padding():
    probs = normalize_weights(np.array([1.0, 3.0, 100.0]), 2, "test")
    assert not probs.uniform_fallback
    np.testing.assert_allclose(probs.values, [0.25, 0.75, 0.0])


def test_optimal_subsample_probs():
    """p_i is proportional to the column norm of B times the row norm of V."""
    b = np.array([[0.5, 0.5], [0.0, 1.0]])
    v = np.array([[2.0, 0.0], [0.0, 1.0]])
    expected = np.array([0.5 * 2.0, math.sqrt(1.25) * 1.0])
    np.testing.assert_allclose(
        optimal_subsample_probs(b, v).values, expected / expected.sum()
    )


class TestJLDistortion(unittest.TestCase):
    """Test cases for jl_distortion_check."""

    def test_epsilon_range(self):
        for epsilon in (0.0, 0.5):
            with self.assertRaises(InvalidArgumentError):
                jl_distortion_check(8, 4, epsilon, 10, RngSeed())

    def test_wide_sketch_rarely_fails(self):
        rate = jl_distortion_check(64, 512, 0.3, 200, RngSeed(5))
        self.assertLessEqual(rate, 0.02)

    def test_narrow_sketch_often_fails(self):
        rate = jl_distortion_check(64, 4, 0.1, 200, RngSeed(5))
        self.assertGreater(rate, 0.5)

    def test_fixed_isometry_never_fails(self):
        rate = jl_distortion_check(6, 6, 0.01, 50, RngSeed(1), sketch=np.eye(6))
        self.assertEqual(rate, 0.0)

    def test_fixed_sketch_shape(self):
        with self.assertRaises(InvalidArgumentError):
            jl_distortion_check(6, 3, 0.1, 5, RngSeed(), sketch=np.eye(6))


@pytest.mark.parametrize("kind", [SketchKind.GAUSSIAN, SketchKind.SUBSAMPLE_WITH_REPLACEMENT])
def test_sketch_reproducible(kind):
    probs = None if kind is SketchKind.GAUSSIAN else np.full(4, 0.25)
    spec = SketchSpec(kind, 3, RngSeed(99), probs=probs, size=4)
    np.testing.assert_array_equal(materialize_sketch(spec), materialize_sketch(spec))


def test_degenerate_probs_always_pick_the_support():
    probs = np.array([1.0, 0.0])
    draw = draw_subsample(
        SketchSpec(SketchKind.SUBSAMPLE_WITH_REPLACEMENT, 3, RngSeed(2), probs=probs)
    )
    np.testing.assert_array_equal(draw.indices, [0, 0, 0])
    np.testing.assert_allclose(draw.scale, 1.0 / math.sqrt(3))

    draw = draw_subsample(
        SketchSpec(SketchKind.SUBSAMPLE_WITHOUT_REPLACEMENT, 1, RngSeed(2), probs=probs)
    )
    np.testing.assert_array_equal(draw.indices, [0])


def test_without_replacement_exhausts_support():
    """Drawing every positive index yields a permutation of them."""
    probs = np.array([0.1, 0.4, 0.2, 0.3])
    for trial in range(20):
        draw = draw_subsample(
            SketchSpec(
                SketchKind.SUBSAMPLE_WITHOUT_REPLACEMENT,
                4,
                RngSeed(5).for_trial(trial),
                probs=probs,
            )
        )
        assert sorted(draw.indices.tolist()) == [0, 1, 2, 3]
