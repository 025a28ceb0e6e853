from __future__ import annotations

import numpy as np
import pytest

from ista import DescriptorGrid, VisualCodebook, normalize_grid


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def make_grid(rng):
    """Factory for normalized random grids with stable per-call ids."""
    counter = {"n": 0}

    def factory(height=3, width=3, depth=4, image_id=None, resolution=0):
        counter["n"] += 1
        image_id = image_id or f"grid{counter['n']:03d}"
        values = rng.normal(size=(height, width, depth))
        return normalize_grid(DescriptorGrid(image_id, resolution, values))

    return factory


@pytest.fixture
def make_codebook(rng):
    """Factory for codebooks from random distinct centers."""

    def factory(n_words=3, depth=4):
        return VisualCodebook.from_centers(rng.normal(size=(n_words, depth)))

    return factory


@pytest.fixture
def checker_grid():
    """Fixed 3x3 depth-2 grid whose word assignment under e1/e2 centers is a
    checkerboard; the (2, 2) cell is equidistant and must land in word 0."""
    values = np.array([
        [[0.9, 0.1], [0.2, 0.8], [0.7, 0.3]],
        [[0.1, 0.9], [0.6, 0.4], [0.3, 0.7]],
        [[0.8, 0.2], [0.4, 0.6], [0.5, 0.5]],
    ])
    return normalize_grid(DescriptorGrid("checker", 0, values))


@pytest.fixture
def axis_codebook():
    return VisualCodebook.from_centers(np.array([[1.0, 0.0], [0.0, 1.0]]))
