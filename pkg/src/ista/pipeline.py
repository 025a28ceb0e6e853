"""End-to-end signature pipeline as a single estimator.

`fit` runs codebook training, pair-statistics accumulation, basis extraction,
corpus encoding with normalization, and both reduction fits, in that order,
over one grid corpus.  `transform` turns grids into final signature vectors.
The stage functions stay available individually for file-driven runs; this
class is the composition for in-memory use and for anything expecting the
fit/transform protocol.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .codebook import VisualCodebook, corpus_descriptor_matrix
from .errors import FitError
from .grids import DescriptorGrid, normalize_grid
from .normalize import normalize_signature
from .pairs import RawSignature, accumulate_pair_stats, compute_pair_basis, encode_raw
from .reduce import (
    apply_block_reduction,
    apply_full_reduction,
    fit_block_reduction,
    fit_full_reduction,
)
from .retrieval import Signature


class IstaPipeline(BaseEstimator, TransformerMixin):
    """Grids in, reduced signatures out.

    Parameters mirror the pipeline configuration: vocabulary size, pairing
    radius, per-pair explained-variance target, pair-count floor, power-law
    exponent, block keep ratio, final dimensionality, whitening and final
    re-normalization switches, and the shared seed.  All fitting happens on
    the corpus passed to `fit`; pass a held-out corpus to `fit` and the
    working corpus to `transform` when separate reduction material exists.
    """

    def __init__(
        self,
        n_words: int = 32,
        radius: int = 1,
        variance_target: float = 0.8,
        min_pair_count: int = 100,
        alpha: float = 0.5,
        keep_ratio: float = 0.4,
        target_dim: int = 512,
        whiten: bool = True,
        renorm: bool = True,
        seed: int = 0,
        max_iters: int = 100,
        sample_cap: int = 500_000,
        eps: float = 1e-12,
    ):
        self.n_words = n_words
        self.radius = radius
        self.variance_target = variance_target
        self.min_pair_count = min_pair_count
        self.alpha = alpha
        self.keep_ratio = keep_ratio
        self.target_dim = target_dim
        self.whiten = whiten
        self.renorm = renorm
        self.seed = seed
        self.max_iters = max_iters
        self.sample_cap = sample_cap
        self.eps = eps

    def fit(self, X: Sequence[DescriptorGrid], y=None) -> "IstaPipeline":
        grids = [normalize_grid(g) for g in X]
        if not grids:
            raise FitError("cannot fit on an empty corpus")
        codebook = VisualCodebook(
            n_words=self.n_words,
            seed=self.seed,
            max_iters=self.max_iters,
            sample_cap=self.sample_cap,
        ).fit(corpus_descriptor_matrix(grids))
        stats = accumulate_pair_stats(grids, codebook, self.radius)
        basis = compute_pair_basis(stats, self.variance_target, self.min_pair_count)
        layout = basis.layout()
        if not layout.pairs:
            raise FitError("no cluster pair reached the minimum count; nothing to encode")
        normalized = [
            normalize_signature(
                encode_raw(g, codebook, basis, stats, self.radius), self.alpha, self.eps
            )
            for g in grids
        ]
        block = fit_block_reduction(normalized, self.keep_ratio)
        reduced = np.stack([apply_block_reduction(block, s) for s in normalized])
        full = fit_full_reduction(reduced, self.target_dim, whiten=self.whiten)

        self.codebook_ = codebook
        self.stats_ = stats
        self.basis_ = basis
        self.layout_ = layout
        self.block_projection_ = block
        self.full_projection_ = full
        self.output_dim_ = full.output_dim
        return self

    def _encode_one(self, grid: DescriptorGrid) -> np.ndarray:
        raw = encode_raw(normalize_grid(grid), self.codebook_, self.basis_, self.stats_, self.radius)
        normalized = normalize_signature(raw, self.alpha, self.eps)
        reduced = apply_block_reduction(self.block_projection_, normalized)
        return apply_full_reduction(self.full_projection_, reduced, self.renorm)

    def transform(self, X: Sequence[DescriptorGrid]) -> np.ndarray:
        check_is_fitted(self, "full_projection_")
        rows = [self._encode_one(g) for g in X]
        return np.stack(rows) if rows else np.zeros((0, self.output_dim_))

    def transform_signatures(self, X: Sequence[DescriptorGrid]) -> list[Signature]:
        """Like `transform` but wrapped as Signature objects for retrieval code."""
        check_is_fitted(self, "full_projection_")
        return [
            Signature(g.image_id, self._encode_one(g), (g.resolution_tag,))
            for g in X
        ]
