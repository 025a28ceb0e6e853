"""Brute-force kernel reference and the linearization identity."""
from __future__ import annotations

import numpy as np
import pytest

from ista import (
    DescriptorGrid,
    ResourceError,
    ValidationError,
    VisualCodebook,
    identity_trial,
    matching_kernel_oracle,
    naive_sta_tensor,
    normalize_grid,
)

# frozen: kernel of the checkerboard fixture against a 1x2 grid holding the
# two codebook centers themselves, and that small grid against itself
CHECKER_VS_AXES = 19.578984915530377


@pytest.fixture
def axes_grid():
    return normalize_grid(DescriptorGrid("axes", 0, np.array([[[1.0, 0.0], [0.0, 1.0]]])))


def test_frozen_kernel_values(checker_grid, axis_codebook, axes_grid):
    got = matching_kernel_oracle(checker_grid, axes_grid, axis_codebook)
    assert got == pytest.approx(CHECKER_VS_AXES, rel=1e-12)
    assert matching_kernel_oracle(axes_grid, axes_grid, axis_codebook) == pytest.approx(2.0)


def test_kernel_is_symmetric(make_grid, make_codebook):
    cb = make_codebook(3, 4)
    a, b = make_grid(3, 2, 4), make_grid(2, 3, 4)
    assert matching_kernel_oracle(a, b, cb) == pytest.approx(
        matching_kernel_oracle(b, a, cb), rel=1e-12
    )


def test_identity_holds_on_random_instances():
    for seed in range(10):
        assert identity_trial(seed, include_center=False) < 1e-9
        assert identity_trial(seed, include_center=True) < 1e-9


def test_tensor_inner_product_equals_kernel(checker_grid, axis_codebook, axes_grid):
    lhs = float(
        naive_sta_tensor(checker_grid, axis_codebook)
        @ naive_sta_tensor(axes_grid, axis_codebook)
    )
    assert lhs == pytest.approx(CHECKER_VS_AXES, rel=1e-12)


def test_single_cell_grid_center_toggle(axis_codebook):
    grid = normalize_grid(DescriptorGrid("dot", 0, np.array([[[3.0, 4.0]]])))
    # no neighbors at all without the center pair
    assert np.all(naive_sta_tensor(grid, axis_codebook, include_center=False) == 0.0)
    with_center = naive_sta_tensor(grid, axis_codebook, include_center=True)
    assert float(with_center @ with_center) == pytest.approx(1.0)  # unit vector outer
    assert matching_kernel_oracle(grid, grid, axis_codebook, include_center=True) == (
        pytest.approx(1.0)
    )


def test_include_center_changes_the_tensor(make_grid, make_codebook):
    cb = make_codebook(2, 3)
    grid = make_grid(2, 2, 3)
    without = naive_sta_tensor(grid, cb, include_center=False)
    with_center = naive_sta_tensor(grid, cb, include_center=True)
    assert not np.allclose(without, with_center)


def test_depth_mismatch_rejected(make_grid, make_codebook):
    cb = make_codebook(2, 3)
    with pytest.raises(ValidationError):
        matching_kernel_oracle(make_grid(2, 2, 3), make_grid(2, 2, 4), cb)


def test_naive_tensor_size_guard(make_grid, rng):
    cb = VisualCodebook.from_centers(rng.normal(size=(120, 30)))
    grid = normalize_grid(DescriptorGrid("big", 0, rng.normal(size=(2, 2, 30))))
    with pytest.raises(ResourceError):
        naive_sta_tensor(grid, cb)
