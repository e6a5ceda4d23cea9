"""Common-centroid placement of device-instance sets on the 32x32 farm grid.

Identical device designs are scattered over the array so that process
gradients (litho loading, stress, implant tilt) average out: cells are
assigned in mirrored pairs (r, c) <-> (N-1-r, N-1-c), which pins every
set's centroid to the exact center of the grid for any random draw.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import DeviceClass
from .stats import kld_uniform

GRID_SIZE = 32


@dataclass(frozen=True)
class FarmLayout:
    """Assignment of instance-set ids to grid cells.

    device_id is tied to the cell by the multiplexer addressing rule
    device_id = GRID_SIZE*row + col.
    """

    set_grid: np.ndarray  # (N, N) int array of set ids

    def __post_init__(self):
        g = np.asarray(self.set_grid, dtype=int)
        if g.ndim != 2 or g.shape[0] != g.shape[1]:
            raise ValueError("set grid must be square")
        object.__setattr__(self, "set_grid", g)

    @property
    def grid_size(self) -> int:
        return self.set_grid.shape[0]

    @property
    def n_devices(self) -> int:
        return self.set_grid.size

    @property
    def set_ids(self) -> np.ndarray:
        return np.unique(self.set_grid)

    def set_of(self, device_id: int) -> int:
        n = self.grid_size
        if not 0 <= device_id < n * n:
            raise ValueError(f"device id {device_id} out of range")
        return int(self.set_grid[device_id // n, device_id % n])

    def cells_in_set(self, set_id: int) -> np.ndarray:
        """(k, 2) array of (row, col) indices occupied by the set."""
        rows, cols = np.nonzero(self.set_grid == set_id)
        if rows.size == 0:
            raise KeyError(f"unknown set id {set_id}")
        return np.column_stack([rows, cols])

    def devices_in_set(self, set_id: int) -> np.ndarray:
        cells = self.cells_in_set(set_id)
        return np.sort(self.grid_size * cells[:, 0] + cells[:, 1])


def place_farm(set_sizes, seed: int = 0, grid_size: int = GRID_SIZE) -> FarmLayout:
    """Randomized common-centroid placement.

    Cells are consumed as mirrored pairs about the array center, drawn in
    seeded random order, so each set's centroid is exactly the grid center
    regardless of seed.  Set sizes must therefore be even.
    """
    sizes = [int(s) for s in set_sizes]
    if any(s <= 0 for s in sizes):
        raise ValueError("set sizes must be positive")
    if sum(sizes) != grid_size * grid_size:
        raise ValueError(f"set sizes must total {grid_size * grid_size} cells")
    if any(s % 2 for s in sizes):
        raise ValueError("set sizes must be even to pair about the grid center")

    # anchors enumerate the top half; each anchor owns its mirror cell too
    anchors = [(r, c) for r in range(grid_size // 2) for c in range(grid_size)]
    rng = np.random.default_rng(seed)
    rng.shuffle(anchors)

    grid = np.full((grid_size, grid_size), -1, dtype=int)
    k = 0
    for set_id, size in enumerate(sizes):
        for r, c in anchors[k:k + size // 2]:
            grid[r, c] = set_id
            grid[grid_size - 1 - r, grid_size - 1 - c] = set_id
        k += size // 2
    return FarmLayout(set_grid=grid)


def centroid(layout: FarmLayout, set_id: int) -> tuple[float, float]:
    """Arithmetic mean (row, col) of the cells the set occupies."""
    cells = layout.cells_in_set(set_id)
    return float(cells[:, 0].mean()), float(cells[:, 1].mean())


@dataclass
class UniformityStats:
    """Spatial- and set-uniformity diagnostics of the class assignment."""

    row_kld: dict = field(default_factory=dict)     # DeviceClass -> KLD of row histogram
    col_kld: dict = field(default_factory=dict)     # DeviceClass -> KLD of column histogram
    set_kld: dict = field(default_factory=dict)     # DeviceClass -> KLD of per-set histogram
    row_hist: dict = field(default_factory=dict)
    col_hist: dict = field(default_factory=dict)
    set_hist: dict = field(default_factory=dict)

    @property
    def mean_row_col_kld(self) -> float:
        vals = list(self.row_kld.values()) + list(self.col_kld.values())
        return float(np.mean(vals))

    @property
    def mean_set_kld(self) -> float:
        return float(np.mean(list(self.set_kld.values())))


def uniformity(layout: FarmLayout, class_of) -> UniformityStats:
    """Per-class row/column/set histograms and their divergence from uniform.

    class_of maps device_id -> DeviceClass (a dict or callable).  A spatially
    unbiased farm gives small row/col KLDs; when quality is driven by the
    device design itself, the per-set KLD is much larger.
    """
    getter = class_of.__getitem__ if hasattr(class_of, "__getitem__") else class_of
    n = layout.grid_size
    set_ids = layout.set_ids

    members: dict[DeviceClass, list[int]] = {}
    for device_id in range(layout.n_devices):
        members.setdefault(getter(device_id), []).append(device_id)

    stats = UniformityStats()
    for cls, ids in members.items():
        ids = np.asarray(ids)
        rows, cols = ids // n, ids % n
        row_hist = np.bincount(rows, minlength=n)
        col_hist = np.bincount(cols, minlength=n)
        sets = np.asarray([layout.set_of(i) for i in ids])
        set_hist = np.asarray([(sets == s).sum() for s in set_ids])
        stats.row_hist[cls] = row_hist
        stats.col_hist[cls] = col_hist
        stats.set_hist[cls] = set_hist
        stats.row_kld[cls] = kld_uniform(row_hist)
        stats.col_kld[cls] = kld_uniform(col_hist)
        stats.set_kld[cls] = kld_uniform(set_hist)
    return stats


__all__ = [
    "GRID_SIZE",
    "FarmLayout",
    "place_farm",
    "centroid",
    "uniformity",
    "UniformityStats",
]
