"""Signature normalization: power law, cross-cluster balancing, global l2.

The fixed order is power -> cross-cluster -> l2.  Cross-cluster balancing
works per component index (i, j): the (i, j) entries of all diagonal blocks
(word paired with itself) form one group and the (i, j) entries of all
off-diagonal blocks the other, and each entry is divided by its group's root
sum of squares.  Ranks vary per pair, so a group at (i, j) ranges over
exactly the blocks large enough to hold that index.  All statistics come
from the signature itself; nothing corpus-wide enters here.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import ValidationError
from .pairs import RawSignature, SignatureLayout

DEFAULT_EPS = 1e-12


def power_normalize(values: np.ndarray, alpha: float = 0.5) -> np.ndarray:
    """Componentwise signed power: sign(s) * |s|**alpha.  Monotone, preserves zeros."""
    if not (0.0 < alpha <= 1.0):
        raise ValidationError(f"alpha must be in (0, 1], got {alpha}")
    values = np.asarray(values, dtype=np.float64)
    return np.sign(values) * np.abs(values) ** alpha


def l2_normalize(values: np.ndarray, eps: float = DEFAULT_EPS) -> np.ndarray:
    """Scale to unit l2 norm; vectors with norm <= eps come back unchanged."""
    values = np.asarray(values, dtype=np.float64)
    norm = float(np.linalg.norm(values))
    if norm <= eps:
        return values.copy()
    return values / norm


def cross_cluster_normalize(
    values: np.ndarray, layout: SignatureLayout, eps: float = DEFAULT_EPS
) -> np.ndarray:
    """Balance diagonal against off-diagonal blocks at each component index.

    Any (i, j) group whose root sum of squares falls at or below eps leaves
    its members unchanged, so all-zero groups pass through instead of
    dividing by nothing.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (layout.total_dim,):
        raise ValidationError(
            f"vector length {values.shape} does not match layout dimension {layout.total_dim}"
        )
    ranks = layout.ranks
    if ranks is None:
        raise ValidationError("cross-cluster normalization needs a square-block layout")
    rmax = max(ranks)
    diag_sq = np.zeros((rmax, rmax))
    off_sq = np.zeros((rmax, rmax))
    for (k, l, sl), r in zip(layout.slices(), ranks):
        block_sq = values[sl].reshape(r, r) ** 2
        if k == l:
            diag_sq[:r, :r] += block_sq
        else:
            off_sq[:r, :r] += block_sq

    def scale_of(group_sq: np.ndarray) -> np.ndarray:
        denom = np.sqrt(group_sq)
        safe = np.where(denom > eps, denom, 1.0)
        return np.where(denom > eps, 1.0 / safe, 1.0)

    diag_scale = scale_of(diag_sq)
    off_scale = scale_of(off_sq)
    out = values.copy()
    for (k, l, sl), r in zip(layout.slices(), ranks):
        scale = diag_scale if k == l else off_scale
        out[sl] = (out[sl].reshape(r, r) * scale[:r, :r]).reshape(-1)
    return out


def normalize_signature(
    sig: RawSignature, alpha: float = 0.5, eps: float = DEFAULT_EPS
) -> RawSignature:
    """Apply the full chain (power, cross-cluster, l2) to a raw signature."""
    v = power_normalize(sig.vector, alpha)
    v = cross_cluster_normalize(v, sig.layout, eps)
    v = l2_normalize(v, eps)
    return RawSignature(sig.image_id, v, sig.layout)


class SignatureNormalizer(BaseEstimator, TransformerMixin):
    """Stateless transformer form of `normalize_signature` for vector batches.

    The layout is a constructor parameter because a bare array row carries no
    block structure of its own.
    """

    def __init__(self, layout: SignatureLayout | None = None, alpha: float = 0.5,
                 eps: float = DEFAULT_EPS):
        self.layout = layout
        self.alpha = alpha
        self.eps = eps

    def fit(self, X, y=None) -> "SignatureNormalizer":
        if self.layout is None:
            raise ValidationError("SignatureNormalizer requires a layout")
        return self

    def transform(self, X) -> np.ndarray:
        if self.layout is None:
            raise ValidationError("SignatureNormalizer requires a layout")
        rows = []
        for row in np.asarray(X, dtype=np.float64):
            v = power_normalize(row, self.alpha)
            v = cross_cluster_normalize(v, self.layout, self.eps)
            rows.append(l2_normalize(v, self.eps))
        return np.stack(rows) if rows else np.zeros((0, self.layout.total_dim))
