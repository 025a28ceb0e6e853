"""Power law, cross-cluster group balancing, and the full normalization chain."""
from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ista import (
    RawSignature,
    SignatureLayout,
    SignatureNormalizer,
    ValidationError,
    cross_cluster_normalize,
    l2_normalize,
    normalize_signature,
    power_normalize,
)


def test_power_normalize_halves_exponents():
    out = power_normalize(np.array([4.0, -9.0, 0.0, 0.25]))
    assert np.allclose(out, [2.0, -3.0, 0.0, 0.5])


def test_power_normalize_alpha_one_is_identity(rng):
    v = rng.normal(size=20)
    assert np.array_equal(power_normalize(v, alpha=1.0), v)


def test_power_normalize_rejects_bad_alpha():
    for alpha in (0.0, -0.5, 1.5):
        with pytest.raises(ValidationError):
            power_normalize(np.ones(3), alpha)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 1.0))
def test_power_normalize_preserves_sign_and_order(seed, alpha):
    v = np.random.default_rng(seed).normal(size=10) * 3
    out = power_normalize(v, alpha)
    assert np.array_equal(np.sign(out), np.sign(v))
    # monotone: sorting order is preserved
    assert np.array_equal(np.argsort(v, kind="stable"), np.argsort(out, kind="stable"))


def test_l2_normalize_unit_norm(rng):
    out = l2_normalize(rng.normal(size=15))
    assert np.isclose(np.linalg.norm(out), 1.0, atol=1e-12)


def test_l2_normalize_zero_vector_unchanged():
    v = np.zeros(4)
    out = l2_normalize(v)
    assert np.array_equal(out, v)
    assert out is not v  # a copy, not the input


# layout with two rank-1 diagonal blocks and one rank-1 off-diagonal block
TRIPLE = SignatureLayout(2, ((0, 0), (0, 1), (1, 1)), (1, 1, 1), (1, 1, 1))


def test_cross_cluster_hand_case():
    # diagonal group holds {3, 4} (rss 5), off-diagonal group holds {5} (rss 5)
    out = cross_cluster_normalize(np.array([3.0, 5.0, 4.0]), TRIPLE)
    assert np.allclose(out, [0.6, 1.0, 0.8])


def test_cross_cluster_zero_group_passes_through():
    out = cross_cluster_normalize(np.array([0.0, 7.0, 0.0]), TRIPLE)
    assert np.allclose(out, [0.0, 1.0, 0.0])


def test_cross_cluster_group_rss_is_one(rng):
    # mixed ranks: groups at (i, j) span only the blocks that reach that index
    layout = SignatureLayout(
        3,
        ((0, 0), (0, 1), (1, 1), (1, 2), (2, 2)),
        (4, 1, 4, 9, 1),
        (2, 1, 2, 3, 1),
    )
    values = rng.normal(size=layout.total_dim)
    out = cross_cluster_normalize(values, layout)
    rmax = max(layout.ranks)
    for i in range(rmax):
        for j in range(rmax):
            for diagonal in (True, False):
                group = []
                for (k, l, sl), r in zip(layout.slices(), layout.ranks):
                    if (k == l) == diagonal and i < r and j < r:
                        group.append(out[sl].reshape(r, r)[i, j])
                if group:
                    rss = float(np.sqrt(np.sum(np.square(group))))
                    assert rss == pytest.approx(1.0, abs=1e-9), (i, j, diagonal)


def test_cross_cluster_rejects_bad_input():
    with pytest.raises(ValidationError):
        cross_cluster_normalize(np.zeros(5), TRIPLE)
    no_ranks = SignatureLayout(2, ((0, 0),), (3,))
    with pytest.raises(ValidationError):
        cross_cluster_normalize(np.zeros(3), no_ranks)


def test_normalize_signature_chain(rng):
    sig = RawSignature("img", rng.normal(size=TRIPLE.total_dim) * 4, TRIPLE)
    out = normalize_signature(sig)
    assert out.image_id == "img"
    assert out.layout == TRIPLE
    assert np.isclose(np.linalg.norm(out.vector), 1.0, atol=1e-12)
    # alpha < 1 compresses dynamic range before balancing; order must be
    # power -> cross -> l2, so reproducing it manually must agree exactly
    manual = l2_normalize(cross_cluster_normalize(power_normalize(sig.vector), TRIPLE))
    assert np.array_equal(out.vector, manual)


def test_normalizer_estimator_matches_function(rng):
    rows = rng.normal(size=(4, TRIPLE.total_dim))
    est = SignatureNormalizer(layout=TRIPLE).fit(rows)
    batch = est.transform(rows)
    for row, got in zip(rows, batch):
        want = normalize_signature(RawSignature("x", row, TRIPLE)).vector
        assert np.array_equal(got, want)


def test_normalizer_requires_layout():
    with pytest.raises(ValidationError):
        SignatureNormalizer().fit(np.zeros((2, 3)))
