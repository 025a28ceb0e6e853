"""Descriptor grids and their spatial structure.

A grid is the unit of input to the whole pipeline: an H x W arrangement of
D-dimensional local descriptors for one image at one working resolution.
Grids persist in the ``.desc`` format: the 8-byte magic ``ISTA0001``, three
little-endian u32 fields (height, width, depth), then height*width*depth
little-endian float32 values in row-major (y, x, channel) order.  The image
id and nominal resolution are carried by the ``<image_id>.<pixels>.desc``
filename convention, not by the payload.

Values are stored in 32-bit precision but held in 64-bit in memory, so a
grid loaded from disk round-trips bit-exactly through save/load.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from ._binio import F32, check_magic, expect_eof, read_array, read_u32, write_array, write_u32
from .errors import FormatError, ValidationError

GRID_MAGIC = b"ISTA0001"
DESC_SUFFIX = ".desc"


class GridPosition(NamedTuple):
    y: int
    x: int


@dataclass(frozen=True, eq=False)
class DescriptorGrid:
    """One image's local descriptors on a regular spatial grid.

    Parameters
    ----------
    image_id : str
        Corpus-unique identifier, usually the source image stem.
    resolution_tag : int
        Nominal longer-side pixel count of the working resolution
        (512 and 1024 are the common settings; 0 means unknown).
    values : np.ndarray
        Array of shape (height, width, depth), finite, float64 in memory.
    """

    image_id: str
    resolution_tag: int
    values: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 3:
            raise ValidationError(
                f"{self.image_id}: descriptor grid must be 3-dimensional, got shape {arr.shape}"
            )
        if min(arr.shape) < 1:
            raise ValidationError(f"{self.image_id}: grid dimensions must be positive, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValidationError(f"{self.image_id}: descriptor values must be finite")
        object.__setattr__(self, "values", arr)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def depth(self) -> int:
        return self.values.shape[2]

    def __eq__(self, other) -> bool:
        if not isinstance(other, DescriptorGrid):
            return NotImplemented
        return (
            self.image_id == other.image_id
            and self.resolution_tag == other.resolution_tag
            and self.values.shape == other.values.shape
            and np.array_equal(self.values, other.values)
        )


def normalize_grid(grid: DescriptorGrid) -> DescriptorGrid:
    """Return a copy with each position's descriptor scaled to unit l2 norm.

    Exact zero vectors stay zero.  Applying this twice changes nothing beyond
    last-bit rounding, so ingest code may call it unconditionally.
    """
    norms = np.linalg.norm(grid.values, axis=2, keepdims=True)
    scale = np.where(norms > 0.0, norms, 1.0)
    return DescriptorGrid(grid.image_id, grid.resolution_tag, grid.values / scale)


def neighbor_offsets(radius: int) -> list[tuple[int, int]]:
    """Row-major (dy, dx) offsets with Chebyshev distance in [1, radius]."""
    if radius < 1:
        raise ValidationError(f"radius must be >= 1, got {radius}")
    return [
        (dy, dx)
        for dy in range(-radius, radius + 1)
        for dx in range(-radius, radius + 1)
        if (dy, dx) != (0, 0)
    ]


def neighborhood(grid: DescriptorGrid, p: GridPosition, radius: int = 1) -> list[GridPosition]:
    """In-bounds positions within Chebyshev distance `radius` of `p`, excluding `p`.

    Results come back in row-major order.  Positions on the grid border simply
    have smaller neighborhoods; nothing wraps.
    """
    y, x = p
    if not (0 <= y < grid.height and 0 <= x < grid.width):
        raise ValidationError(
            f"position {tuple(p)} outside grid of shape "
            f"({grid.height}, {grid.width})"
        )
    out = []
    for dy, dx in neighbor_offsets(radius):
        ny, nx = y + dy, x + dx
        if 0 <= ny < grid.height and 0 <= nx < grid.width:
            out.append(GridPosition(ny, nx))
    return out


def save_grid(grid: DescriptorGrid, path: str | Path) -> None:
    """Write `grid` to `path` in the ``.desc`` format (float32 payload).

    Validation runs before the file is opened, so a rejected grid leaves no
    partial file behind.
    """
    # values is exposed and mutable, so re-check what __post_init__ checked
    if not np.all(np.isfinite(grid.values)):
        raise ValidationError(f"{grid.image_id}: descriptor values must be finite")
    h, w, d = grid.values.shape
    if max(h, w, d) >= 2**32:
        raise ValidationError(f"{grid.image_id}: grid dimensions exceed u32 range")
    with open(path, "wb") as f:
        f.write(GRID_MAGIC)
        write_u32(f, h)
        write_u32(f, w)
        write_u32(f, d)
        write_array(f, grid.values, F32)


def load_grid(path: str | Path) -> DescriptorGrid:
    """Read a ``.desc`` file; image id and resolution come from the filename."""
    path = Path(path)
    with open(path, "rb") as f:
        check_magic(f, GRID_MAGIC, path)
        h = read_u32(f, path, "height")
        w = read_u32(f, path, "width")
        d = read_u32(f, path, "depth")
        if min(h, w, d) < 1:
            raise FormatError(f"{path}: grid dimensions must be positive, got ({h}, {w}, {d})")
        values = read_array(f, h * w * d, F32, path, "descriptor payload")
        expect_eof(f, path)
    image_id, resolution = parse_desc_filename(path.name)
    return DescriptorGrid(image_id, resolution, values.astype(np.float64).reshape(h, w, d))


def grid_filename(image_id: str, pixels: int) -> str:
    """``<image_id>.<pixels>.desc``; a zero pixel tag is left out entirely."""
    if pixels:
        return f"{image_id}.{pixels}{DESC_SUFFIX}"
    return f"{image_id}{DESC_SUFFIX}"


def parse_desc_filename(name: str) -> tuple[str, int]:
    """Split ``<image_id>.<pixels>.desc`` into its parts.

    A name without a numeric pixel field degrades to (stem, 0).
    """
    stem = name[: -len(DESC_SUFFIX)] if name.endswith(DESC_SUFFIX) else name
    head, sep, tail = stem.rpartition(".")
    if sep and tail.isdigit():
        return head, int(tail)
    return stem, 0


def corpus_paths(directory: str | Path) -> list[Path]:
    """Sorted ``.desc`` paths directly inside `directory`."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"descriptor directory not found: {directory}")
    return sorted(p for p in directory.iterdir() if p.name.endswith(DESC_SUFFIX))


def load_corpus(directory: str | Path, normalize: bool = True) -> list[DescriptorGrid]:
    """Load every ``.desc`` grid under `directory` in sorted filename order."""
    grids = [load_grid(p) for p in corpus_paths(directory)]
    if normalize:
        grids = [normalize_grid(g) for g in grids]
    return grids
