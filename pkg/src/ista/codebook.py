"""Hard-assignment visual codebook fitted with seeded k-means.

The clusterer is written out here rather than borrowed because its observable
behavior is part of the model contract: classic k-means++ seeding driven by a
single integer seed, ties broken toward the lowest center index, empty
clusters repaired by reseeding from the farthest descriptor, and iteration
stopping as soon as no assignment changes.  Given the same descriptor order
and seed, a fit is fully deterministic.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._binio import F64, check_magic, expect_eof, read_array, read_u32, read_u64, write_array, write_u32, write_u64
from .errors import FitError, ValidationError

CODEBOOK_MAGIC = b"ISTACB01"


def _sqdist(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Squared euclidean distances, shape (len(x), len(centers))."""
    x2 = np.einsum("ij,ij->i", x, x)
    c2 = np.einsum("ij,ij->i", centers, centers)
    d2 = x2[:, None] + c2[None, :] - 2.0 * (x @ centers.T)
    return np.maximum(d2, 0.0)


def _check_distinct(centers: np.ndarray, err: type[Exception], what: str) -> None:
    if len(np.unique(centers, axis=0)) != len(centers):
        raise err(f"{what}: two centers are identical")


class VisualCodebook(BaseEstimator):
    """Quantize local descriptors to a vocabulary of `n_words` centers.

    Parameters
    ----------
    n_words : int
        Vocabulary size N.
    seed : int
        Drives both the training subsample and the k-means++ draws.
    max_iters : int
        Upper bound on Lloyd iterations.
    sample_cap : int
        Training descriptors beyond this count are subsampled (uniformly,
        seeded) before fitting.

    Attributes
    ----------
    cluster_centers_ : np.ndarray of shape (n_words, depth)
    labels_ : np.ndarray
        Final-center assignment of every input row, subsampled or not.
    inertia_ : float
        Sum of squared distances of all input rows to their assigned centers.
    inertia_history_ : list[float]
        Training inertia after each assignment pass; non-increasing.  Matches
        `inertia_` only when no subsampling happened and Lloyd converged
        before the iteration cap.
    n_iter_ : int
    """

    def __init__(self, n_words: int = 32, seed: int = 0, max_iters: int = 100,
                 sample_cap: int = 500_000):
        self.n_words = n_words
        self.seed = seed
        self.max_iters = max_iters
        self.sample_cap = sample_cap

    def fit(self, X, y=None) -> "VisualCodebook":
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2:
            raise ValidationError(f"descriptor stream must be 2-dimensional, got shape {X.shape}")
        if len(X) == 0:
            raise FitError("empty descriptor stream")
        if self.n_words < 1:
            raise ValidationError(f"n_words must be >= 1, got {self.n_words}")
        if not np.all(np.isfinite(X)):
            raise ValidationError("descriptor stream contains non-finite values")

        rng = np.random.default_rng(self.seed)
        train = X
        if len(X) > self.sample_cap:
            keep = np.sort(rng.choice(len(X), size=self.sample_cap, replace=False))
            train = X[keep]

        centers = self._init_plus_plus(train, rng)
        centers, history = self._lloyd(train, centers)
        _check_distinct(centers, FitError, "k-means result")

        # final assignment covers the full input, not just the training subsample
        d2 = _sqdist(X, centers)
        labels = np.argmin(d2, axis=1)
        self.cluster_centers_ = centers
        self.labels_ = labels
        self.inertia_ = float(d2[np.arange(len(X)), labels].sum())
        self.inertia_history_ = history
        self.n_iter_ = len(history)
        self.n_features_in_ = X.shape[1]
        return self

    def _init_plus_plus(self, X: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        n = len(X)
        chosen = [int(rng.integers(n))]
        closest = _sqdist(X, X[chosen[-1]][None])[:, 0]
        while len(chosen) < self.n_words:
            total = float(closest.sum())
            if total <= 0.0:
                raise FitError(
                    f"k-means needs at least {self.n_words} distinct descriptors, "
                    f"found only {len(chosen)}"
                )
            idx = int(rng.choice(n, p=closest / total))
            chosen.append(idx)
            closest = np.minimum(closest, _sqdist(X, X[idx][None])[:, 0])
        return X[chosen].copy()

    def _lloyd(self, X: np.ndarray, centers: np.ndarray):
        n_words = len(centers)
        prev_labels = None
        history: list[float] = []
        for _ in range(self.max_iters):
            d2 = _sqdist(X, centers)
            labels = np.argmin(d2, axis=1)  # ties resolve to the lowest index
            mind2 = d2[np.arange(len(X)), labels]
            self._repair_empty(X, centers, labels, mind2)
            history.append(float(mind2.sum()))
            if prev_labels is not None and np.array_equal(labels, prev_labels):
                break
            prev_labels = labels
            sums = np.zeros_like(centers)
            np.add.at(sums, labels, X)
            counts = np.bincount(labels, minlength=n_words)
            centers = sums / counts[:, None]
        return centers, history

    @staticmethod
    def _repair_empty(X, centers, labels, mind2) -> None:
        """Reseed empty clusters from the farthest currently-assigned point."""
        n_words = len(centers)
        for _ in range(len(X)):
            counts = np.bincount(labels, minlength=n_words)
            empty = np.flatnonzero(counts == 0)
            if len(empty) == 0:
                return
            if mind2.max() <= 0.0:
                raise FitError(
                    f"k-means needs at least {n_words} distinct descriptors to fill every cluster"
                )
            far = int(np.argmax(mind2))
            k = int(empty[0])
            centers[k] = X[far]
            labels[far] = k
            mind2[far] = 0.0
        raise FitError("empty-cluster repair did not converge")

    def predict(self, X) -> np.ndarray:
        """Assign each row of X to its nearest center (ties to the lowest index)."""
        check_is_fitted(self, "cluster_centers_")
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2:
            raise ValidationError(f"descriptors must be 2-dimensional, got shape {X.shape}")
        if X.shape[1] != self.cluster_centers_.shape[1]:
            raise ValidationError(
                f"descriptor depth {X.shape[1]} does not match codebook depth "
                f"{self.cluster_centers_.shape[1]}"
            )
        return np.argmin(_sqdist(X, self.cluster_centers_), axis=1)

    def assign(self, x: np.ndarray) -> int:
        """Cluster index for a single descriptor."""
        return int(self.predict(np.asarray(x, dtype=np.float64)[None, :])[0])

    def assign_grid(self, grid) -> np.ndarray:
        """Cluster indices for every grid position, shape (height, width)."""
        flat = self.predict(grid.values.reshape(-1, grid.depth))
        return flat.reshape(grid.height, grid.width)

    @property
    def depth(self) -> int:
        check_is_fitted(self, "cluster_centers_")
        return int(self.cluster_centers_.shape[1])

    @classmethod
    def from_centers(cls, centers: np.ndarray, seed: int = 0) -> "VisualCodebook":
        centers = np.asarray(centers, dtype=np.float64)
        if centers.ndim != 2 or min(centers.shape) < 1:
            raise ValidationError(f"centers must be 2-dimensional, got shape {centers.shape}")
        if not np.all(np.isfinite(centers)):
            raise ValidationError("centers must be finite")
        _check_distinct(centers, ValidationError, "codebook centers")
        cb = cls(n_words=centers.shape[0], seed=seed)
        cb.cluster_centers_ = centers.copy()
        cb.n_features_in_ = centers.shape[1]
        return cb

    def save(self, path: str | Path) -> None:
        check_is_fitted(self, "cluster_centers_")
        if not (0 <= self.seed < 2**64):
            raise ValidationError(f"seed must fit in u64, got {self.seed}")
        n, d = self.cluster_centers_.shape
        with open(path, "wb") as f:
            f.write(CODEBOOK_MAGIC)
            write_u32(f, n)
            write_u32(f, d)
            write_u64(f, self.seed)
            write_array(f, self.cluster_centers_, F64)

    @classmethod
    def load(cls, path: str | Path) -> "VisualCodebook":
        path = Path(path)
        with open(path, "rb") as f:
            check_magic(f, CODEBOOK_MAGIC, path)
            n = read_u32(f, path, "word count")
            d = read_u32(f, path, "depth")
            seed = read_u64(f, path, "seed")
            centers = read_array(f, n * d, F64, path, "centers").reshape(n, d)
            expect_eof(f, path)
        return cls.from_centers(centers, seed=seed)


def corpus_descriptor_matrix(grids) -> np.ndarray:
    """Stack every grid position into one (n_descriptors, depth) matrix."""
    mats = [g.values.reshape(-1, g.depth) for g in grids]
    if not mats:
        raise FitError("empty corpus")
    depths = {m.shape[1] for m in mats}
    if len(depths) != 1:
        raise ValidationError(f"grids disagree on descriptor depth: {sorted(depths)}")
    return np.concatenate(mats, axis=0)
