"""Two-stage dimensionality reduction via sample Gram matrices.

Both stages share one construction.  Stack fit samples as rows of S, form the
Gram matrix G = S S^T, eigendecompose G = V diag(lambda) V^T, and project new
vectors with

    W = diag(lambda)^(-1/2) V^T S        (rows ordered by eigenvalue)

so that projecting the fit samples themselves reproduces their pairwise inner
products exactly as long as no nonzero eigenvalue is dropped.  Eigenvalues
below 1e-10 of the largest are discarded before the inversion.

The block stage applies this per cluster-pair block with a keep-ratio rank
budget and never whitens.  The full stage applies it to the concatenated
vectors with a fixed target dimension; with `whiten` an extra
diag(lambda)^(-1/2) factor equalizes the projected fit samples' per-component
second moments.

Both projections persist together in the ``.redmodel`` format (magic
``ISTARD01``): a u32 block count, then per block u32 in-dim, u32 out-dim and
the row-major f64 matrix, then the full section as u32 in-dim, u32 out-dim,
a u8 whiten flag, and its matrix.  A full section with out-dim 0 marks a
model whose full stage has not been fitted yet.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._binio import (
    F64,
    check_magic,
    expect_eof,
    read_array,
    read_u8,
    read_u32,
    write_array,
    write_u8,
    write_u32,
)
from .errors import FitError, FormatError, NumericalError, ValidationError
from .normalize import l2_normalize
from .pairs import RawSignature, SignatureLayout

EIG_FLOOR = 1e-10
REDMODEL_MAGIC = b"ISTARD01"


def _gram_projector(samples: np.ndarray, out_dim: int, eig_floor: float):
    """Projection rows for the top `out_dim` Gram eigendirections.

    Returns (matrix, eigenvalues) with the matrix of shape (kept, in_dim);
    kept may fall below `out_dim` when eigenvalues vanish.
    """
    gram = samples @ samples.T
    evals, evecs = np.linalg.eigh(gram)
    evals = evals[::-1]
    evecs = evecs[:, ::-1]
    if not np.all(np.isfinite(evals)):
        raise NumericalError("Gram eigendecomposition produced non-finite eigenvalues")
    largest = float(evals[0]) if len(evals) else 0.0
    alive = evals > max(largest, 0.0) * eig_floor
    keep = min(out_dim, int(np.count_nonzero(alive)))
    evals = evals[:keep]
    evecs = evecs[:, :keep]
    matrix = (evecs / np.sqrt(evals)).T @ samples
    return matrix, evals


@dataclass(eq=False)
class BlockProjection:
    """Per-pair projection matrices from the block reduction stage.

    `matrices[i]` has shape (out_dim_i, in_dim_i) aligned with
    `input_layout.pairs[i]`.  There is deliberately no whitening option at
    this stage.
    """

    input_layout: SignatureLayout
    matrices: list[np.ndarray]
    keep_ratio: float
    eigenvalues: list[np.ndarray] | None = None

    def output_layout(self) -> SignatureLayout:
        return SignatureLayout(
            self.input_layout.n_words,
            self.input_layout.pairs,
            tuple(int(m.shape[0]) for m in self.matrices),
        )

    @property
    def output_dim(self) -> int:
        return int(sum(m.shape[0] for m in self.matrices))


@dataclass(eq=False)
class FullProjection:
    """Final projection to the target dimensionality, optionally whitened."""

    matrix: np.ndarray  # (out_dim, in_dim)
    whiten: bool
    eigenvalues: np.ndarray | None = None

    @property
    def input_dim(self) -> int:
        return int(self.matrix.shape[1])

    @property
    def output_dim(self) -> int:
        return int(self.matrix.shape[0])


def _signature_matrix(samples: Sequence[RawSignature]) -> tuple[np.ndarray, SignatureLayout]:
    if len(samples) < 2:
        raise FitError(f"reduction fitting needs at least 2 samples, got {len(samples)}")
    layout = samples[0].layout
    for s in samples[1:]:
        if s.layout != layout:
            raise ValidationError(f"{s.image_id}: signature layout differs from the first sample")
    return np.stack([s.vector for s in samples]), layout


def fit_block_reduction(
    samples: Sequence[RawSignature], keep_ratio: float = 0.4, eig_floor: float = EIG_FLOOR
) -> BlockProjection:
    """Fit one Gram projector per pair block over normalized signatures.

    Each block's output dimension is ceil(keep_ratio * input dimension),
    capped at the sample count (a cap triggers a warning) and at the number
    of surviving eigenvalues.
    """
    if not (0.0 < keep_ratio <= 1.0):
        raise ValidationError(f"keep_ratio must be in (0, 1], got {keep_ratio}")
    stacked, layout = _signature_matrix(samples)
    matrices, spectra = [], []
    for _, _, sl in layout.slices():
        block = stacked[:, sl]
        in_dim = block.shape[1]
        requested = math.ceil(keep_ratio * in_dim)
        if requested > len(samples):
            warnings.warn(
                f"block of dimension {in_dim} wants {requested} components but only "
                f"{len(samples)} fit samples exist; capping",
                stacklevel=2,
            )
        matrix, evals = _gram_projector(block, min(requested, len(samples)), eig_floor)
        matrices.append(matrix)
        spectra.append(evals)
    return BlockProjection(layout, matrices, keep_ratio, spectra)


def apply_block_reduction(projection: BlockProjection, sig: RawSignature) -> np.ndarray:
    """Project each block of `sig` and concatenate in layout order."""
    if sig.layout != projection.input_layout:
        raise ValidationError(f"{sig.image_id}: signature layout does not match the projection")
    parts = [
        matrix @ sig.vector[sl]
        for matrix, (_, _, sl) in zip(projection.matrices, projection.input_layout.slices())
    ]
    return np.concatenate(parts) if parts else np.zeros(0)


def fit_full_reduction(
    samples: np.ndarray, target_dim: int, whiten: bool = True, eig_floor: float = EIG_FLOOR
) -> FullProjection:
    """Fit the final Gram projector over whole vectors.

    Asking for more components than there are samples caps the output with a
    warning.  With `whiten`, rows are scaled a second time by the inverse
    square-rooted eigenvalues, which equalizes the per-component second
    moments of the projected fit samples.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 2:
        raise ValidationError(f"samples must be 2-dimensional, got shape {samples.shape}")
    if len(samples) < 2:
        raise FitError(f"reduction fitting needs at least 2 samples, got {len(samples)}")
    if target_dim < 1:
        raise ValidationError(f"target_dim must be >= 1, got {target_dim}")
    if target_dim > len(samples):
        warnings.warn(
            f"target dimension {target_dim} exceeds the {len(samples)} fit samples; capping",
            stacklevel=2,
        )
    matrix, evals = _gram_projector(samples, min(target_dim, len(samples)), eig_floor)
    if whiten:
        matrix = matrix / np.sqrt(evals)[:, None]
    return FullProjection(matrix, whiten, evals)


def apply_full_reduction(
    projection: FullProjection, vector: np.ndarray, renorm: bool = True
) -> np.ndarray:
    """Project one vector to the final dimensionality, re-normalizing by default."""
    vector = np.asarray(vector, dtype=np.float64)
    if vector.shape != (projection.input_dim,):
        raise ValidationError(
            f"vector length {vector.shape} does not match projection input "
            f"dimension {projection.input_dim}"
        )
    out = projection.matrix @ vector
    return l2_normalize(out) if renorm else out


@dataclass(eq=False)
class ReductionModel:
    """Both reduction stages as persisted in a ``.redmodel`` file."""

    block: BlockProjection
    full: FullProjection | None = None


def save_reduction_model(model: ReductionModel, path: str | Path) -> None:
    with open(path, "wb") as f:
        f.write(REDMODEL_MAGIC)
        write_u32(f, len(model.block.matrices))
        for matrix, size in zip(model.block.matrices, model.block.input_layout.sizes):
            if matrix.shape[1] != size:
                raise ValidationError("block matrix width does not match its layout size")
            write_u32(f, size)
            write_u32(f, matrix.shape[0])
            write_array(f, matrix, F64)
        if model.full is None:
            write_u32(f, 0)
            write_u32(f, 0)
            write_u8(f, 0)
        else:
            write_u32(f, model.full.input_dim)
            write_u32(f, model.full.output_dim)
            write_u8(f, 1 if model.full.whiten else 0)
            write_array(f, model.full.matrix, F64)


def load_reduction_model(
    path: str | Path, layout: SignatureLayout | None = None, keep_ratio: float = 0.0
) -> ReductionModel:
    """Read a ``.redmodel``.

    Block matrices pair up with `layout` when one is given (it must agree on
    count and input sizes); without one, a positional stand-in layout is
    synthesized so the model can still be applied.
    """
    path = Path(path)
    with open(path, "rb") as f:
        check_magic(f, REDMODEL_MAGIC, path)
        n_blocks = read_u32(f, path, "block count")
        in_dims, matrices = [], []
        for i in range(n_blocks):
            in_dim = read_u32(f, path, f"block {i} input dim")
            out_dim = read_u32(f, path, f"block {i} output dim")
            matrices.append(
                read_array(f, out_dim * in_dim, F64, path, f"block {i} matrix").reshape(out_dim, in_dim)
            )
            in_dims.append(in_dim)
        full_in = read_u32(f, path, "full input dim")
        full_out = read_u32(f, path, "full output dim")
        whiten = read_u8(f, path, "whiten flag")
        full = None
        if full_out > 0:
            full_matrix = read_array(
                f, full_out * full_in, F64, path, "full matrix"
            ).reshape(full_out, full_in)
            full = FullProjection(full_matrix, bool(whiten))
        expect_eof(f, path)
    if layout is None:
        # stand-in: pair identities unknown, sizes positional
        layout = SignatureLayout(0, tuple((0, i) for i in range(n_blocks)), tuple(in_dims))
    else:
        if tuple(layout.sizes) != tuple(in_dims) or len(layout.pairs) != n_blocks:
            raise ValidationError(f"{path}: stored block dimensions do not match the given layout")
    block = BlockProjection(layout, matrices, keep_ratio)
    if full is not None:
        expected = sum(m.shape[0] for m in matrices)
        if full.input_dim != expected:
            raise FormatError(
                f"{path}: full stage expects input {full.input_dim} but blocks produce {expected}"
            )
    return ReductionModel(block, full)


# ---------------------------------------------------------------------------
# estimator facades

class BlockReducer(BaseEstimator, TransformerMixin):
    """Transformer form of the per-block Gram reduction.

    Fit on a list of RawSignature; transform accepts the same or a 2-D array
    whose rows follow the fitted layout.
    """

    def __init__(self, keep_ratio: float = 0.4):
        self.keep_ratio = keep_ratio

    def fit(self, X: Sequence[RawSignature], y=None) -> "BlockReducer":
        self.projection_ = fit_block_reduction(X, self.keep_ratio)
        return self

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "projection_")
        sigs = self._as_signatures(X)
        return np.stack([apply_block_reduction(self.projection_, s) for s in sigs])

    def _as_signatures(self, X) -> list[RawSignature]:
        if len(X) and isinstance(X[0], RawSignature):
            return list(X)
        layout = self.projection_.input_layout
        return [RawSignature(f"row{i}", np.asarray(row, dtype=np.float64), layout)
                for i, row in enumerate(X)]


class FullReducer(BaseEstimator, TransformerMixin):
    """Transformer form of the final Gram reduction over plain vectors."""

    def __init__(self, target_dim: int = 512, whiten: bool = True, renorm: bool = True):
        self.target_dim = target_dim
        self.whiten = whiten
        self.renorm = renorm

    def fit(self, X, y=None) -> "FullReducer":
        self.projection_ = fit_full_reduction(np.asarray(X, dtype=np.float64),
                                              self.target_dim, self.whiten)
        return self

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "projection_")
        return np.stack([
            apply_full_reduction(self.projection_, row, self.renorm)
            for row in np.asarray(X, dtype=np.float64)
        ])
