"""Self-contained corpus generator with planted neighborhood structure.

Class identity is written into WHICH word pairs sit side by side: every class
freezes a master grid built from a balanced multiset of word prototypes, with
a class-specific word domino planted at several horizontal sites through
count-preserving swaps.  Instances of a class perturb the master slightly, so
grids of the same class share both their planted word adjacencies and the
frozen appearance around them, while different classes agree only on
corpus-wide averages (which the encoder's centering removes).

`shuffle_grid_positions` is the matching ablation: it permutes a grid's cells,
preserving the descriptor multiset but destroying every planted adjacency.
A pipeline whose scores survive that shuffle is not using the spatial
coupling.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .grids import DescriptorGrid, grid_filename, save_grid
from .retrieval import GroundTruthEntry, save_ground_truth


@dataclass(eq=False)
class SyntheticCorpus:
    grids: list[DescriptorGrid]
    class_of: dict[str, int]
    ground_truth: list[GroundTruthEntry]


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def _balanced_words(n_cells: int, n_words: int, rng: np.random.Generator) -> np.ndarray:
    reps = -(-n_cells // n_words)
    words = np.tile(np.arange(n_words), reps)[:n_cells]
    return rng.permutation(words)


def _plant_dominoes(words: np.ndarray, height: int, width: int, pair: tuple[int, int],
                    dominoes: int, rng: np.random.Generator) -> np.ndarray:
    """Force `dominoes` horizontal (a, b) adjacencies via count-preserving swaps."""
    a, b = pair
    grid = words.reshape(height, width).copy()
    sites = [(y, x) for y in range(height) for x in range(width - 1)]
    rng.shuffle(sites)
    used: set[tuple[int, int]] = set()
    planted = 0
    for y, x in sites:
        if planted == dominoes:
            break
        left, right = (y, x), (y, x + 1)
        if left in used or right in used:
            continue

        def donor(word: int, avoid: tuple[int, int]) -> tuple[int, int] | None:
            ys, xs = np.nonzero(grid == word)
            for dy, dx in zip(ys, xs):
                cell = (int(dy), int(dx))
                if cell not in used and cell != avoid:
                    return cell
            return None

        cell_a = left if grid[left] == a else donor(a, right)
        if cell_a is None:
            continue
        grid[cell_a], grid[left] = grid[left], a
        cell_b = right if grid[right] == b else donor(b, left)
        if cell_b is None:
            # roll back the first swap to keep counts intact
            grid[cell_a], grid[left] = a, grid[cell_a]
            continue
        grid[cell_b], grid[right] = grid[right], b
        used.update((left, right))
        planted += 1
    return grid


def make_synthetic_corpus(
    n_classes: int = 20,
    per_class: int = 10,
    height: int = 12,
    width: int = 12,
    depth: int = 16,
    n_words: int = 8,
    dominoes: int = 12,
    master_jitter: float = 0.12,
    instance_jitter: float = 0.02,
    seed: int = 7,
) -> SyntheticCorpus:
    """Build `n_classes * per_class` grids with class-specific planted pairs."""
    if n_classes > n_words * (n_words - 1):
        raise ValidationError(
            f"{n_classes} classes need distinct ordered word pairs but only "
            f"{n_words * (n_words - 1)} exist"
        )
    if depth < n_words:
        raise ValidationError("depth must be at least n_words for distinct prototypes")
    rng = np.random.default_rng(seed)
    prototypes = np.linalg.qr(rng.normal(size=(depth, depth)))[0][:n_words]
    all_pairs = [(a, b) for a in range(n_words) for b in range(n_words) if a != b]
    class_pairs = [all_pairs[i] for i in rng.permutation(len(all_pairs))[:n_classes]]

    grids: list[DescriptorGrid] = []
    class_of: dict[str, int] = {}
    for c in range(n_classes):
        words = _balanced_words(height * width, n_words, rng)
        word_grid = _plant_dominoes(words, height, width, class_pairs[c], dominoes, rng)
        master = np.empty((height, width, depth))
        for y in range(height):
            for x in range(width):
                noisy = prototypes[word_grid[y, x]] + master_jitter * rng.normal(size=depth)
                master[y, x] = _unit(noisy)
        for i in range(per_class):
            noise = instance_jitter * rng.normal(size=master.shape)
            values = master + noise
            values /= np.linalg.norm(values, axis=2, keepdims=True)
            image_id = f"c{c:02d}_i{i:02d}"
            grids.append(DescriptorGrid(image_id, 512, values))
            class_of[image_id] = c

    ground_truth = [
        GroundTruthEntry(
            grid.image_id,
            frozenset(
                other.image_id
                for other in grids
                if other.image_id != grid.image_id
                and class_of[other.image_id] == class_of[grid.image_id]
            ),
        )
        for grid in grids
    ]
    return SyntheticCorpus(grids, class_of, ground_truth)


def shuffle_grid_positions(grid: DescriptorGrid, rng: np.random.Generator) -> DescriptorGrid:
    """Permute the grid cells, keeping the descriptor multiset intact."""
    h, w, d = grid.values.shape
    perm = rng.permutation(h * w)
    values = grid.values.reshape(h * w, d)[perm].reshape(h, w, d)
    return DescriptorGrid(grid.image_id, grid.resolution_tag, values)


def shuffled_corpus(corpus: SyntheticCorpus, seed: int) -> SyntheticCorpus:
    """Apply an independent position shuffle to every grid of `corpus`."""
    rng = np.random.default_rng(seed)
    grids = [shuffle_grid_positions(g, rng) for g in corpus.grids]
    return SyntheticCorpus(grids, dict(corpus.class_of), list(corpus.ground_truth))


def write_corpus(corpus: SyntheticCorpus, directory: str | Path) -> Path:
    """Write the grids as ``.desc`` files plus a ``groundtruth.txt`` alongside."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for grid in corpus.grids:
        save_grid(grid, directory / grid_filename(grid.image_id, grid.resolution_tag))
    gt_path = directory / "groundtruth.txt"
    save_ground_truth(corpus.ground_truth, gt_path)
    return gt_path
