"""Spatially-coupled pair statistics, their singular bases, and image encoding.

Every descriptor x_r at a grid position assigned to visual word k, paired with
every neighbor x_u assigned to word l, contributes the correlation x_r x_u^T
to the ordered cluster pair (k, l).  Corpus-level accumulation of these
correlations gives one mean matrix per pair; an SVD of each mean with an
explained-variance rank rule yields per-pair orthonormal bases.  An image is
then encoded, pair by pair, as the sum of its projected correlations minus
its own pair count times the diagonal of retained singular values, so a
stream whose pairs follow the corpus distribution encodes to (near) zero.

Because the bases have orthonormal columns, projecting the centered sum and
centering the projected sum agree exactly; only the singular values are
needed at encode time.

Two artifacts persist this stage: ``.pairstats`` (magic ``ISTAPS01``) holds
the raw per-pair counts and 64-bit sums so basis fitting can resume from
accumulated statistics, and ``.pairmodel`` (magic ``ISTAPM01``) holds counts,
ranks, singular values, and the retained U/V columns for every ordered pair.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._binio import (
    F64,
    check_magic,
    expect_eof,
    read_array,
    read_u32,
    read_u64,
    write_array,
    write_u32,
    write_u64,
)
from .codebook import VisualCodebook
from .errors import FitError, FormatError, ValidationError
from .grids import DescriptorGrid, neighbor_offsets, normalize_grid

PAIRSTATS_MAGIC = b"ISTAPS01"
PAIRMODEL_MAGIC = b"ISTAPM01"

# absorbs last-bit rounding in the cumulative-energy ratio at rank boundaries
_RANK_EPS = 1e-12


@dataclass(eq=False)
class PairStatistics:
    """Accumulated correlation sums and counts for all N*N ordered pairs."""

    n_words: int
    depth: int
    sums: np.ndarray    # (N, N, D, D) float64
    counts: np.ndarray  # (N, N) int64

    @classmethod
    def zeros(cls, n_words: int, depth: int) -> "PairStatistics":
        return cls(
            n_words=n_words,
            depth=depth,
            sums=np.zeros((n_words, n_words, depth, depth)),
            counts=np.zeros((n_words, n_words), dtype=np.int64),
        )

    def add(self, other: "PairStatistics") -> None:
        """Entrywise in-place merge; accumulation over a stream is a left fold of these."""
        if (other.n_words, other.depth) != (self.n_words, self.depth):
            raise ValidationError(
                f"cannot merge statistics of shape ({other.n_words}, {other.depth}) "
                f"into ({self.n_words}, {self.depth})"
            )
        self.sums += other.sums
        self.counts += other.counts

    def mean_tensor(self, k: int, l: int) -> np.ndarray:
        """Mean correlation matrix for pair (k, l); requires a nonzero count."""
        count = int(self.counts[k, l])
        if count == 0:
            raise ValidationError(f"pair ({k}, {l}) has no observations")
        return self.sums[k, l] / count

    @property
    def total_pairs(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True, eq=False)
class SignatureLayout:
    """Ordered block structure of a signature vector.

    `pairs` lists the live (k, l) cluster pairs in row-major pair order and
    `sizes` the flattened length of each block.  For raw signatures blocks are
    square and `ranks` carries their side length; reduced vectors keep
    `ranks=None` since their blocks are flat segments.
    """

    n_words: int
    pairs: tuple[tuple[int, int], ...]
    sizes: tuple[int, ...]
    ranks: tuple[int, ...] | None = None

    def __post_init__(self):
        if len(self.pairs) != len(self.sizes):
            raise ValidationError("layout pairs and sizes differ in length")
        if self.ranks is not None and len(self.ranks) != len(self.pairs):
            raise ValidationError("layout pairs and ranks differ in length")

    @property
    def total_dim(self) -> int:
        return int(sum(self.sizes))

    def offsets(self) -> list[int]:
        out, pos = [], 0
        for size in self.sizes:
            out.append(pos)
            pos += size
        return out

    def slices(self) -> Iterator[tuple[int, int, slice]]:
        pos = 0
        for (k, l), size in zip(self.pairs, self.sizes):
            yield k, l, slice(pos, pos + size)
            pos += size

    def rank_of(self) -> dict[tuple[int, int], int]:
        if self.ranks is None:
            raise ValidationError("layout carries no square-block ranks")
        return dict(zip(self.pairs, self.ranks))

    def __eq__(self, other) -> bool:
        if not isinstance(other, SignatureLayout):
            return NotImplemented
        return (
            self.n_words == other.n_words
            and self.pairs == other.pairs
            and self.sizes == other.sizes
            and self.ranks == other.ranks
        )


@dataclass(eq=False)
class PairBasis:
    """Per-pair singular bases of the corpus mean correlation matrices.

    `factors[(k, l)]` holds (U, s, V) with U, V of shape (depth, rank) having
    orthonormal columns and s the retained singular values in non-increasing
    order.  Pairs below the count threshold, or with no spectral energy, get
    rank 0 and no factors.
    """

    n_words: int
    depth: int
    variance_target: float
    pair_counts: np.ndarray  # (N, N) int64, carried from the statistics
    ranks: np.ndarray        # (N, N) int32
    factors: dict[tuple[int, int], tuple[np.ndarray, np.ndarray, np.ndarray]]

    def layout(self) -> SignatureLayout:
        pairs, sizes, ranks = [], [], []
        for k in range(self.n_words):
            for l in range(self.n_words):
                r = int(self.ranks[k, l])
                if r > 0:
                    pairs.append((k, l))
                    sizes.append(r * r)
                    ranks.append(r)
        return SignatureLayout(self.n_words, tuple(pairs), tuple(sizes), tuple(ranks))


@dataclass(eq=False)
class RawSignature:
    """Concatenated centered pair blocks for one image, before normalization."""

    image_id: str
    vector: np.ndarray
    layout: SignatureLayout

    def __post_init__(self):
        if self.vector.shape != (self.layout.total_dim,):
            raise ValidationError(
                f"{self.image_id}: vector length {self.vector.shape} does not match "
                f"layout dimension {self.layout.total_dim}"
            )

    def block(self, k: int, l: int) -> np.ndarray:
        """The (rank x rank) block for pair (k, l) as a view into the vector."""
        ranks = self.layout.rank_of()
        for bk, bl, sl in self.layout.slices():
            if (bk, bl) == (k, l):
                r = ranks[(k, l)]
                return self.vector[sl].reshape(r, r)
        raise ValidationError(f"pair ({k}, {l}) is not part of the layout")

    def blocks(self) -> Iterator[tuple[int, int, np.ndarray]]:
        ranks = self.layout.rank_of()
        for k, l, sl in self.layout.slices():
            r = ranks[(k, l)]
            yield k, l, self.vector[sl].reshape(r, r)


def _pair_runs(values: np.ndarray, labels: np.ndarray, n_words: int, radius: int):
    """Group same-(k, l) descriptor pairs per neighborhood offset.

    Yields (k, l, src_rows, dst_rows) where the row matrices hold the center
    and neighbor descriptors of every pair in that group.  Offsets are walked
    in row-major order and groups in ascending (k, l), so accumulation order
    is fixed regardless of caller.
    """
    h, w, _ = values.shape
    flat_labels = labels.astype(np.int64)
    for dy, dx in neighbor_offsets(radius):
        y0, y1 = max(0, -dy), h - max(0, dy)
        x0, x1 = max(0, -dx), w - max(0, dx)
        if y0 >= y1 or x0 >= x1:
            continue
        src = values[y0:y1, x0:x1].reshape(-1, values.shape[2])
        dst = values[y0 + dy:y1 + dy, x0 + dx:x1 + dx].reshape(-1, values.shape[2])
        ks = flat_labels[y0:y1, x0:x1].ravel()
        ls = flat_labels[y0 + dy:y1 + dy, x0 + dx:x1 + dx].ravel()
        pair_idx = ks * n_words + ls
        order = np.argsort(pair_idx, kind="stable")
        sorted_idx = pair_idx[order]
        edges = np.flatnonzero(np.diff(sorted_idx)) + 1
        starts = np.concatenate(([0], edges))
        ends = np.concatenate((edges, [len(sorted_idx)]))
        for a, b in zip(starts, ends):
            sel = order[a:b]
            k, l = divmod(int(sorted_idx[a]), n_words)
            yield k, l, src[sel], dst[sel]


def grid_pair_stats(grid: DescriptorGrid, codebook: VisualCodebook, radius: int = 1) -> PairStatistics:
    """Pair statistics of a single grid."""
    _check_depth(grid, codebook)
    labels = codebook.assign_grid(grid)
    stats = PairStatistics.zeros(codebook.n_words, grid.depth)
    for k, l, src, dst in _pair_runs(grid.values, labels, codebook.n_words, radius):
        stats.sums[k, l] += src.T @ dst
        stats.counts[k, l] += len(src)
    return stats


def accumulate_pair_stats(
    grids: Iterable[DescriptorGrid], codebook: VisualCodebook, radius: int = 1
) -> PairStatistics:
    """Fold per-grid pair statistics over a corpus stream, in stream order."""
    stats = PairStatistics.zeros(codebook.n_words, codebook.depth)
    for grid in grids:
        stats.add(grid_pair_stats(grid, codebook, radius))
    return stats


def compute_pair_basis(
    stats: PairStatistics, variance_target: float, min_pair_count: int = 1
) -> PairBasis:
    """SVD each observed mean correlation matrix and cut ranks by explained variance.

    The retained rank is the smallest r whose leading squared singular values
    reach `variance_target` of the total squared-singular-value energy; a
    target of 1.0 keeps every component with nonzero energy.  Pairs observed
    fewer than `min_pair_count` times are treated as rank 0 and drop out of
    the signature layout.
    """
    if not (0.0 < variance_target <= 1.0):
        raise ValidationError(f"variance_target must be in (0, 1], got {variance_target}")
    if min_pair_count < 1:
        raise ValidationError(f"min_pair_count must be >= 1, got {min_pair_count}")
    n, d = stats.n_words, stats.depth
    ranks = np.zeros((n, n), dtype=np.int32)
    factors: dict[tuple[int, int], tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
    for k in range(n):
        for l in range(n):
            count = int(stats.counts[k, l])
            if count < min_pair_count:
                continue
            mean = stats.sums[k, l] / count
            u, s, vt = np.linalg.svd(mean, full_matrices=False)
            energy = s * s
            total = float(energy.sum())
            if total <= 0.0:
                continue
            ratios = np.cumsum(energy) / total
            r = int(np.searchsorted(ratios, variance_target - _RANK_EPS, side="left")) + 1
            r = min(r, len(s))
            ranks[k, l] = r
            factors[(k, l)] = (
                np.ascontiguousarray(u[:, :r]),
                s[:r].copy(),
                np.ascontiguousarray(vt[:r].T),
            )
    return PairBasis(
        n_words=n,
        depth=d,
        variance_target=variance_target,
        pair_counts=stats.counts.copy(),
        ranks=ranks,
        factors=factors,
    )


def encode_raw(
    grid: DescriptorGrid,
    codebook: VisualCodebook,
    basis: PairBasis,
    stats: PairStatistics | None = None,
    radius: int = 1,
) -> RawSignature:
    """Encode one grid into its concatenated centered pair blocks.

    Each live pair (k, l) contributes the matrix

        sum over the image's (k, l) pairs of (U^T x_r)(V^T x_u)^T
        minus  pair_count * diag(s)

    flattened row-major.  Passing `stats` guards against mixing a basis with
    statistics from a different accumulation run.
    """
    _check_depth(grid, codebook)
    if basis.n_words != codebook.n_words or basis.depth != codebook.depth:
        raise ValidationError(
            f"basis shape ({basis.n_words}, {basis.depth}) does not match codebook "
            f"({codebook.n_words}, {codebook.depth})"
        )
    if stats is not None:
        if (stats.n_words, stats.depth) != (basis.n_words, basis.depth):
            raise ValidationError("statistics shape does not match basis")
        if not np.array_equal(stats.counts, basis.pair_counts):
            raise ValidationError("statistics and basis disagree on pair counts")

    layout = basis.layout()
    labels = codebook.assign_grid(grid)
    acc = {pair: np.zeros((r, r)) for pair, r in zip(layout.pairs, layout.ranks)}
    n_pairs = {pair: 0 for pair in layout.pairs}
    for k, l, src, dst in _pair_runs(grid.values, labels, codebook.n_words, radius):
        if (k, l) not in acc:
            continue
        u, _, v = basis.factors[(k, l)]
        acc[(k, l)] += (src @ u).T @ (dst @ v)
        n_pairs[(k, l)] += len(src)

    vector = np.zeros(layout.total_dim)
    for k, l, sl in layout.slices():
        _, s, _ = basis.factors[(k, l)]
        block = acc[(k, l)] - n_pairs[(k, l)] * np.diag(s)
        vector[sl] = block.reshape(-1)
    return RawSignature(grid.image_id, vector, layout)


def _check_depth(grid: DescriptorGrid, codebook: VisualCodebook) -> None:
    if grid.depth != codebook.depth:
        raise ValidationError(
            f"{grid.image_id}: descriptor depth {grid.depth} does not match "
            f"codebook depth {codebook.depth}"
        )


# ---------------------------------------------------------------------------
# persistence

def save_pair_stats(stats: PairStatistics, path: str | Path) -> None:
    with open(path, "wb") as f:
        f.write(PAIRSTATS_MAGIC)
        write_u32(f, stats.n_words)
        write_u32(f, stats.depth)
        for k in range(stats.n_words):
            for l in range(stats.n_words):
                write_u64(f, int(stats.counts[k, l]))
                write_array(f, stats.sums[k, l], F64)


def load_pair_stats(path: str | Path) -> PairStatistics:
    path = Path(path)
    with open(path, "rb") as f:
        check_magic(f, PAIRSTATS_MAGIC, path)
        n = read_u32(f, path, "word count")
        d = read_u32(f, path, "depth")
        if min(n, d) < 1:
            raise FormatError(f"{path}: dimensions must be positive, got ({n}, {d})")
        stats = PairStatistics.zeros(n, d)
        for k in range(n):
            for l in range(n):
                stats.counts[k, l] = read_u64(f, path, f"count ({k}, {l})")
                stats.sums[k, l] = read_array(
                    f, d * d, F64, path, f"sum matrix ({k}, {l})"
                ).reshape(d, d)
        expect_eof(f, path)
    return stats


def save_pair_basis(basis: PairBasis, path: str | Path) -> None:
    """Write a ``.pairmodel``: counts, rank, singular values, and U/V columns per pair."""
    with open(path, "wb") as f:
        f.write(PAIRMODEL_MAGIC)
        write_u32(f, basis.n_words)
        write_u32(f, basis.depth)
        for k in range(basis.n_words):
            for l in range(basis.n_words):
                write_u64(f, int(basis.pair_counts[k, l]))
                r = int(basis.ranks[k, l])
                write_u32(f, r)
                if r == 0:
                    continue
                u, s, v = basis.factors[(k, l)]
                write_array(f, s, F64)
                write_array(f, u.T, F64)  # columns of U stored contiguously
                write_array(f, v.T, F64)


def load_pair_basis(path: str | Path, variance_target: float = 0.0) -> PairBasis:
    """Read a ``.pairmodel``.  The variance target is a fit parameter, not a
    stored field; pass it when known, else it loads as 0.0 (unspecified)."""
    path = Path(path)
    with open(path, "rb") as f:
        check_magic(f, PAIRMODEL_MAGIC, path)
        n = read_u32(f, path, "word count")
        d = read_u32(f, path, "depth")
        if min(n, d) < 1:
            raise FormatError(f"{path}: dimensions must be positive, got ({n}, {d})")
        counts = np.zeros((n, n), dtype=np.int64)
        ranks = np.zeros((n, n), dtype=np.int32)
        factors = {}
        for k in range(n):
            for l in range(n):
                counts[k, l] = read_u64(f, path, f"count ({k}, {l})")
                r = read_u32(f, path, f"rank ({k}, {l})")
                if r > d:
                    raise FormatError(f"{path}: rank {r} exceeds depth {d} at pair ({k}, {l})")
                ranks[k, l] = r
                if r == 0:
                    continue
                s = read_array(f, r, F64, path, f"singular values ({k}, {l})")
                u = read_array(f, r * d, F64, path, f"U columns ({k}, {l})").reshape(r, d).T
                v = read_array(f, r * d, F64, path, f"V columns ({k}, {l})").reshape(r, d).T
                factors[(k, l)] = (
                    np.ascontiguousarray(u),
                    s,
                    np.ascontiguousarray(v),
                )
        expect_eof(f, path)
    return PairBasis(
        n_words=n,
        depth=d,
        variance_target=variance_target,
        pair_counts=counts,
        ranks=ranks,
        factors=factors,
    )


# ---------------------------------------------------------------------------
# estimator facade

class PairTensorEncoder(BaseEstimator, TransformerMixin):
    """Fit pair statistics and bases on a grid corpus, then encode grids.

    Grids are l2-normalized per position on the way in.  `transform` returns
    an array whose rows are raw (unnormalized) signature vectors; use
    `transform_signatures` when the block structure is needed downstream.

    Parameters
    ----------
    codebook : VisualCodebook
        An already-fitted vocabulary; it is used as-is, never refitted.
    radius : int
        Chebyshev neighborhood radius for descriptor pairing.
    variance_target : float
        Explained-variance cutoff for per-pair ranks.
    min_pair_count : int
        Pairs observed fewer times than this are dropped from the layout.
    """

    def __init__(self, codebook: VisualCodebook | None = None, radius: int = 1,
                 variance_target: float = 0.8, min_pair_count: int = 1):
        self.codebook = codebook
        self.radius = radius
        self.variance_target = variance_target
        self.min_pair_count = min_pair_count

    def fit(self, X: Sequence[DescriptorGrid], y=None) -> "PairTensorEncoder":
        if self.codebook is None:
            raise ValidationError("PairTensorEncoder requires a fitted codebook")
        check_is_fitted(self.codebook, "cluster_centers_")
        grids = [normalize_grid(g) for g in X]
        self.stats_ = accumulate_pair_stats(grids, self.codebook, self.radius)
        self.basis_ = compute_pair_basis(self.stats_, self.variance_target, self.min_pair_count)
        self.layout_ = self.basis_.layout()
        if len(self.layout_.pairs) == 0:
            raise FitError("no cluster pair reached the minimum count; nothing to encode")
        return self

    def transform_signatures(self, X: Sequence[DescriptorGrid]) -> list[RawSignature]:
        check_is_fitted(self, "basis_")
        return [
            encode_raw(normalize_grid(g), self.codebook, self.basis_, self.stats_, self.radius)
            for g in X
        ]

    def transform(self, X: Sequence[DescriptorGrid]) -> np.ndarray:
        sigs = self.transform_signatures(X)
        return np.stack([s.vector for s in sigs]) if sigs else np.zeros((0, self.layout_.total_dim))
