"""Brute-force reference computations for the pair-matching kernel.

These enumerate every descriptor pair explicitly and exist to cross-check the
aggregation path: the inner product of two naive pair tensors must equal the
quadruple-sum matching kernel between the underlying grids exactly, for any
codebook, grid contents, or neighborhood radius.  Cost grows with the square
of (positions * neighborhood size), so keep inputs tiny.

Both functions take `include_center`, which adds each position to its own
neighborhood; the production pipeline always excludes the center, but the
identity holds either way and both readings stay testable here.
"""
from __future__ import annotations

import numpy as np

from .codebook import VisualCodebook
from .errors import ResourceError, ValidationError
from .grids import DescriptorGrid, GridPosition, neighborhood, normalize_grid

# naive tensors materialize N*N*D*D floats; anything bigger than this is a bug
_NAIVE_GUARD = 10_000_000


def _pair_lists(grid: DescriptorGrid, codebook: VisualCodebook, radius: int,
                include_center: bool):
    """All (center word, neighbor word, center vector, neighbor vector) pairs."""
    labels = codebook.assign_grid(grid)
    ks, ls, xr, xu = [], [], [], []
    for y in range(grid.height):
        for x in range(grid.width):
            p = GridPosition(y, x)
            neigh = neighborhood(grid, p, radius)
            if include_center:
                neigh = neigh + [p]
            for q in neigh:
                ks.append(labels[y, x])
                ls.append(labels[q.y, q.x])
                xr.append(grid.values[y, x])
                xu.append(grid.values[q.y, q.x])
    if not ks:
        d = grid.depth
        empty = np.zeros((0, d))
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64), empty, empty
    return (
        np.asarray(ks, dtype=np.int64),
        np.asarray(ls, dtype=np.int64),
        np.asarray(xr),
        np.asarray(xu),
    )


def matching_kernel_oracle(
    grid_a: DescriptorGrid,
    grid_b: DescriptorGrid,
    codebook: VisualCodebook,
    radius: int = 1,
    include_center: bool = False,
) -> float:
    """Quadruple sum over both grids' descriptor pairs.

    Each term multiplies the word-match indicators of centers and neighbors by
    the corresponding descriptor dot products:

        sum over pairs (r, u) of a, (s, v) of b:
            [word(r) == word(s)] * [word(u) == word(v)] * <x_r, x_s> * <x_u, x_v>
    """
    if grid_a.depth != grid_b.depth:
        raise ValidationError(
            f"grids disagree on depth: {grid_a.depth} vs {grid_b.depth}"
        )
    ka, la, ra, ua = _pair_lists(grid_a, codebook, radius, include_center)
    kb, lb, rb, ub = _pair_lists(grid_b, codebook, radius, include_center)
    if len(ka) == 0 or len(kb) == 0:
        return 0.0
    match = (ka[:, None] == kb[None, :]) & (la[:, None] == lb[None, :])
    dots = (ra @ rb.T) * (ua @ ub.T)
    return float(dots[match].sum())


def naive_sta_tensor(
    grid: DescriptorGrid,
    codebook: VisualCodebook,
    radius: int = 1,
    include_center: bool = False,
) -> np.ndarray:
    """Fully materialized pair tensor, flattened in (k, l, i, j) row-major order.

    Entry (k, l, i, j) is the sum of x_r[i] * x_u[j] over pairs whose center
    falls in word k and neighbor in word l; the nesting matches the block
    order of raw signatures.  Inner products of these tensors reproduce the
    matching kernel exactly.
    """
    n, d = codebook.n_words, grid.depth
    if n * n * d * d > _NAIVE_GUARD:
        raise ResourceError(
            f"naive tensor of {n * n * d * d} entries exceeds the {_NAIVE_GUARD} guard"
        )
    ks, ls, xr, xu = _pair_lists(grid, codebook, radius, include_center)
    tensor = np.zeros((n, n, d, d))
    for k, l, r_vec, u_vec in zip(ks, ls, xr, xu):
        tensor[k, l] += np.outer(r_vec, u_vec)
    return tensor.reshape(-1)


def identity_trial(seed: int, include_center: bool = False) -> float:
    """Relative gap of the linearization identity on one seeded random instance.

    Draws a small random codebook plus two random grids, then compares the
    inner product of their naive pair tensors against the matching kernel.
    Returns |lhs - rhs| / max(1, |lhs|, |rhs|); a correct implementation keeps
    this at rounding-noise level.
    """
    rng = np.random.default_rng(seed)
    n_words = int(rng.integers(2, 5))
    depth = int(rng.integers(2, 7))
    codebook = VisualCodebook.from_centers(rng.normal(size=(n_words, depth)))

    def random_grid(tag: str) -> DescriptorGrid:
        height = int(rng.integers(1, 5))
        width = int(rng.integers(1, 5))
        values = rng.normal(size=(height, width, depth))
        return normalize_grid(DescriptorGrid(tag, 0, values))

    grid_a = random_grid("trial_a")
    grid_b = random_grid("trial_b")
    lhs = float(
        naive_sta_tensor(grid_a, codebook, 1, include_center)
        @ naive_sta_tensor(grid_b, codebook, 1, include_center)
    )
    rhs = matching_kernel_oracle(grid_a, grid_b, codebook, 1, include_center)
    return abs(lhs - rhs) / max(1.0, abs(lhs), abs(rhs))
