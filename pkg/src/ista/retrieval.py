"""Final signatures, inner-product ranking, and retrieval evaluation.

Signatures persist in the ``.sig`` format: magic ``ISTASG01``, a u32
dimension, then the vector as little-endian float32.  Rankings serialize as
tab-separated ``rank<TAB>image_id<TAB>score`` lines.  Ground truth lives in a
plain text file with one ``query_id | positive ids | junk ids`` line per
query; converters from dataset-specific layouts belong in the CLI, keeping
the library format-agnostic.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ._binio import F32, check_magic, expect_eof, read_array, read_u32, write_array, write_u32
from .errors import EvaluationError, ValidationError
from .pairs import RawSignature, SignatureLayout

SIG_MAGIC = b"ISTASG01"
SIG_SUFFIX = ".sig"


@dataclass(eq=False)
class Signature:
    """A final, reduced image signature.

    `resolution_set` records which working resolutions were summed into the
    vector; it travels in memory only, the file format stores the vector.
    """

    image_id: str
    vector: np.ndarray
    resolution_set: tuple[int, ...] = ()

    def __post_init__(self):
        vec = np.asarray(self.vector, dtype=np.float64)
        if vec.ndim != 1 or len(vec) == 0:
            raise ValidationError(f"{self.image_id}: signature must be a nonempty vector")
        if not np.all(np.isfinite(vec)):
            raise ValidationError(f"{self.image_id}: signature contains non-finite values")
        object.__setattr__(self, "vector", vec)

    @property
    def dim(self) -> int:
        return len(self.vector)


def save_signature(sig: Signature, path: str | Path) -> None:
    with open(path, "wb") as f:
        f.write(SIG_MAGIC)
        write_u32(f, sig.dim)
        write_array(f, sig.vector, F32)


def load_signature(path: str | Path, resolution: int = 0) -> Signature:
    path = Path(path)
    with open(path, "rb") as f:
        check_magic(f, SIG_MAGIC, path)
        dim = read_u32(f, path, "dimension")
        vector = read_array(f, dim, F32, path, "signature payload").astype(np.float64)
        expect_eof(f, path)
    image_id = path.name[: -len(SIG_SUFFIX)] if path.name.endswith(SIG_SUFFIX) else path.name
    resolutions = (resolution,) if resolution else ()
    return Signature(image_id, vector, resolutions)


def combine_resolutions(signatures: Sequence[Signature]) -> Signature:
    """Sum one image's per-resolution signatures and re-normalize to unit l2."""
    if not signatures:
        raise ValidationError("cannot combine an empty signature list")
    first = signatures[0]
    for sig in signatures[1:]:
        if sig.image_id != first.image_id:
            raise ValidationError(
                f"cannot combine signatures of different images: "
                f"{first.image_id!r} vs {sig.image_id!r}"
            )
        if sig.dim != first.dim:
            raise ValidationError(
                f"{first.image_id}: resolution signatures disagree on dimension "
                f"({first.dim} vs {sig.dim})"
            )
    total = np.sum([sig.vector for sig in signatures], axis=0)
    norm = np.linalg.norm(total)
    if norm > 0.0:
        total = total / norm
    resolutions = tuple(sorted({r for sig in signatures for r in sig.resolution_set}))
    return Signature(first.image_id, total, resolutions)


def similarity(a: Signature, b: Signature) -> float:
    """Plain inner product; the vectors must share a dimension."""
    if a.dim != b.dim:
        raise ValidationError(f"signature dimensions differ: {a.dim} vs {b.dim}")
    return float(a.vector @ b.vector)


def rank(index: Sequence[Signature], query: Signature) -> list[tuple[str, float]]:
    """Score the whole index against `query`, best first.

    The query's own image id is excluded when present.  Exact score ties
    break lexicographically on image id so rankings are reproducible.
    """
    if not index:
        raise ValidationError("cannot rank an empty index")
    scored = [
        (sig.image_id, similarity(query, sig))
        for sig in index
        if sig.image_id != query.image_id
    ]
    scored.sort(key=lambda item: (-item[1], item[0]))
    return scored


@dataclass(frozen=True)
class GroundTruthEntry:
    query_id: str
    positives: frozenset[str]
    junk: frozenset[str] = frozenset()

    def __post_init__(self):
        if not self.positives:
            raise EvaluationError(f"{self.query_id}: ground truth has no positives")
        if self.positives & self.junk:
            raise EvaluationError(f"{self.query_id}: positives and junk overlap")
        if self.query_id in self.positives:
            raise EvaluationError(f"{self.query_id}: query listed among its own positives")


def average_precision(ranking_ids: Sequence[str], entry: GroundTruthEntry) -> float:
    """Mean of precision-at-rank over the ranks that hold positives.

    Junk ids are removed from the ranking before any precision is computed;
    positives missing from the ranking contribute zero but still count in the
    denominator.
    """
    kept = [image_id for image_id in ranking_ids if image_id not in entry.junk]
    if not kept:
        return 0.0
    relevant = np.array([image_id in entry.positives for image_id in kept])
    hits = np.cumsum(relevant)
    ranks = np.arange(1, len(kept) + 1)
    precision_at_hits = (hits / ranks)[relevant]
    return float(precision_at_hits.sum() / len(entry.positives))


def mean_ap(per_query: Sequence[tuple[Sequence[str], GroundTruthEntry]]) -> float:
    """Mean AP over queries; np.mean's pairwise reduction keeps it order-stable."""
    if not per_query:
        raise EvaluationError("mean average precision over zero queries is undefined")
    return float(np.mean([average_precision(ids, entry) for ids, entry in per_query]))


def contribution_by_pair(
    vec_a: np.ndarray | RawSignature,
    vec_b: np.ndarray | RawSignature,
    layout: SignatureLayout | None = None,
) -> np.ndarray:
    """Per-cluster-pair inner products, as an (N, N) matrix.

    The entries over live pairs sum to the full inner product exactly; pairs
    outside the layout read zero.  Works on raw signatures and, given the
    block-stage output layout, on block-reduced vectors.
    """
    if isinstance(vec_a, RawSignature):
        layout = layout or vec_a.layout
        vec_a = vec_a.vector
    if isinstance(vec_b, RawSignature):
        layout = layout or vec_b.layout
        vec_b = vec_b.vector
    if layout is None:
        raise ValidationError("contribution breakdown needs a layout")
    vec_a = np.asarray(vec_a, dtype=np.float64)
    vec_b = np.asarray(vec_b, dtype=np.float64)
    if vec_a.shape != (layout.total_dim,) or vec_b.shape != (layout.total_dim,):
        raise ValidationError("vector lengths do not match the layout dimension")
    out = np.zeros((layout.n_words, layout.n_words))
    for k, l, sl in layout.slices():
        out[k, l] = vec_a[sl] @ vec_b[sl]
    return out


# ---------------------------------------------------------------------------
# text artifacts

def save_ground_truth(entries: Iterable[GroundTruthEntry], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for entry in entries:
            positives = " ".join(sorted(entry.positives))
            junk = " ".join(sorted(entry.junk))
            f.write(f"{entry.query_id} | {positives} | {junk}\n")


def load_ground_truth(path: str | Path) -> list[GroundTruthEntry]:
    path = Path(path)
    entries = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("|")
            if len(parts) != 3:
                raise EvaluationError(
                    f"{path}:{lineno}: expected 'query | positives | junk', got {line!r}"
                )
            query_id = parts[0].strip()
            if not query_id:
                raise EvaluationError(f"{path}:{lineno}: empty query id")
            entries.append(
                GroundTruthEntry(
                    query_id,
                    frozenset(parts[1].split()),
                    frozenset(parts[2].split()),
                )
            )
    return entries


def write_ranking(ranking: Sequence[tuple[str, float]], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for position, (image_id, score) in enumerate(ranking, start=1):
            f.write(f"{position}\t{image_id}\t{score:.9g}\n")


def read_ranking(path: str | Path) -> list[tuple[str, float]]:
    out = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.rstrip("\n")
            if not line:
                continue
            _, image_id, score = line.split("\t")
            out.append((image_id, float(score)))
    return out
