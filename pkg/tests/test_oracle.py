# MIT License
# Copyright (c) 2024-present Léo Colombaro

"""Tests for oracle module."""

import math

import numpy as np
import pytest

from sketchattn.core import AttentionInput, RngSeed, random_attention_input
from sketchattn.errors import NumericalError, ResourceLimitError
from sketchattn.oracle import exact_attention, masked_softmax, score_matrices


def naive_attention(q, k, v):
    out = np.zeros_like(v)
    for i in range(q.shape[0]):
        weights = np.array([math.exp(q[i] @ k[j] / math.sqrt(q.shape[1])) for j in range(k.shape[0])])
        out[i] = weights @ v / weights.sum()
    return out


def test_matches_naive_reference():
    """Blocked softmax attention agrees with a per-entry loop."""
    for trial in range(100):
        seed = RngSeed(2024).for_trial(trial)
        n = 1 + trial % 24
        p = 1 + trial % 5
        inp = random_attention_input(n, p, 0.8, seed)
        np.testing.assert_allclose(
            exact_attention(inp), naive_attention(inp.q, inp.k, inp.v), atol=1e-10
        )


def test_rows_sum_to_one():
    inp = random_attention_input(20, 4, 1.5, RngSeed(1), unpadded_len=15)
    b = score_matrices(inp).b
    np.testing.assert_allclose(b[:15].sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_array_equal(b[15:], 0.0)
    np.testing.assert_array_equal(b[:, 15:], 0.0)


def test_single_key_returns_v():
    """With one key every weight is 1."""
    inp = AttentionInput([[1.0, 2.0]], [[1.0, 2.0]], [[1.0, 2.0]])
    np.testing.assert_allclose(exact_attention(inp), [[1.0, 2.0]])


def test_identical_keys_average_v():
    k = np.ones((5, 3))
    inp = AttentionInput(np.arange(15.0).reshape(5, 3), k, np.arange(15.0).reshape(5, 3))
    expected = np.tile(inp.v.mean(axis=0), (5, 1))
    np.testing.assert_allclose(exact_attention(inp), expected, atol=1e-12)


def test_padding_is_excluded():
    """Padded keys get no weight and padded output rows are zero."""
    inp = random_attention_input(10, 3, 1.0, RngSeed(9), unpadded_len=7)
    out = exact_attention(inp)
    np.testing.assert_array_equal(out[7:], 0.0)
    trimmed = AttentionInput(inp.q[:7], inp.k[:7], inp.v[:7])
    np.testing.assert_allclose(out[:7], exact_attention(trimmed), atol=1e-12)


def test_score_matrices_consistent():
    """B equals D⁻¹A on the unpadded block."""
    inp = random_attention_input(12, 2, 1.0, RngSeed(4))
    scores = score_matrices(inp)
    np.testing.assert_allclose(scores.b, scores.a / scores.row_sums[:, None], atol=1e-14)
    np.testing.assert_allclose(scores.b @ inp.v, exact_attention(inp), atol=1e-12)


def test_score_matrices_cap():
    inp = random_attention_input(16, 2, 1.0, RngSeed())
    with pytest.raises(ResourceLimitError):
        score_matrices(inp, cap=8)


def test_score_matrices_overflow():
    """Huge logits overflow A while the softmax itself stays finite."""
    inp = AttentionInput([[1000.0]], [[1000.0]], [[1.0]])
    np.testing.assert_allclose(exact_attention(inp), [[1.0]])
    with pytest.raises(NumericalError):
        score_matrices(inp)


def test_masked_softmax_ignores_padded_columns():
    logits = np.array([[0.0, 0.0, 50.0]])
    np.testing.assert_allclose(masked_softmax(logits, 2), [[0.5, 0.5, 0.0]])
