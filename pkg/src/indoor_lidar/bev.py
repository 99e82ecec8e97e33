"""Bird's-eye-view rasterization of point clouds."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError, StorageError

CHANNELS = ("max_height", "mean_intensity", "density")


@dataclass(frozen=True, eq=False)
class BevGrid:
    """Per-cell channels indexed ``[ix, iy]`` with ``ix`` along x.

    ``max_height`` is ``-inf`` in empty cells and ``mean_intensity`` is 0 there.
    """

    cell_size: float
    extent: tuple  # (x_min, x_max, y_min, y_max)
    max_height: np.ndarray
    mean_intensity: np.ndarray
    density: np.ndarray
    dropped: int = 0

    @property
    def shape(self) -> tuple:
        return self.density.shape


def grid_shape(cell_size: float, extent) -> tuple:
    x0, x1, y0, y1 = extent
    nx = int(math.ceil((x1 - x0) / cell_size - 1e-9))
    ny = int(math.ceil((y1 - y0) / cell_size - 1e-9))
    return nx, ny


def rasterize_bev(cloud, cell_size: float, extent) -> BevGrid:
    """Bin points into half-open cells ``[x0 + i c, x0 + (i+1) c)``.

    Points outside the extent (including on its max edges) are dropped and
    counted. Intensities are summed per cell in sorted order, so the grid is
    bit-identical under any permutation of the input.
    """
    if not (math.isfinite(cell_size) and cell_size > 0):
        raise InvalidArgumentError(f"cell_size must be positive, got {cell_size}")
    x0, x1, y0, y1 = (float(v) for v in extent)
    if not all(math.isfinite(v) for v in (x0, x1, y0, y1)) or not (x1 > x0 and y1 > y0):
        raise InvalidArgumentError(f"extent must satisfy x_min < x_max and y_min < y_max, got {extent}")
    pts = np.asarray(getattr(cloud, "points", cloud), dtype=np.float64).reshape(-1, 4)
    nx, ny = grid_shape(cell_size, (x0, x1, y0, y1))

    ix = np.floor((pts[:, 0] - x0) / cell_size)
    iy = np.floor((pts[:, 1] - y0) / cell_size)
    ok = (pts[:, 0] >= x0) & (pts[:, 0] < x1) & (pts[:, 1] >= y0) & (pts[:, 1] < y1)
    ok &= (ix >= 0) & (ix < nx) & (iy >= 0) & (iy < ny)
    cell = (ix[ok] * ny + iy[ok]).astype(np.int64)
    z = pts[ok, 2]
    inten = pts[ok, 3]

    n_cells = nx * ny
    density = np.bincount(cell, minlength=n_cells).astype(np.int64)
    height = np.full(n_cells, -np.inf)
    np.maximum.at(height, cell, z)
    order = np.lexsort((inten, cell))
    sums = np.zeros(n_cells)
    if len(order):
        c_sorted = cell[order]
        starts = np.flatnonzero(np.r_[True, c_sorted[1:] != c_sorted[:-1]])
        sums[c_sorted[starts]] = np.add.reduceat(inten[order], starts)
    mean = np.zeros(n_cells)
    filled = density > 0
    mean[filled] = sums[filled] / density[filled]
    return BevGrid(cell_size, (x0, x1, y0, y1), height.reshape(nx, ny), mean.reshape(nx, ny),
                   density.reshape(nx, ny), int(len(pts) - np.count_nonzero(ok)))


def write_bev(grid: BevGrid, prefix) -> tuple:
    """Write ``<prefix>.bin`` (float32 LE channels, C order) and ``<prefix>.json`` header."""
    prefix = Path(prefix)
    bin_path = prefix.with_name(prefix.name + ".bin")
    hdr_path = prefix.with_name(prefix.name + ".json")
    data = np.stack([grid.max_height, grid.mean_intensity, grid.density]).astype("<f4")
    header = {
        "rows": grid.shape[0],
        "cols": grid.shape[1],
        "cell_size": grid.cell_size,
        "extent": list(grid.extent),
        "channels": list(CHANNELS),
        "dtype": "float32-le",
        "dropped": grid.dropped,
    }
    try:
        bin_path.parent.mkdir(parents=True, exist_ok=True)
        bin_path.write_bytes(data.tobytes())
        hdr_path.write_text(json.dumps(header, indent=1) + "\n", encoding="utf-8")
    except OSError as exc:
        raise StorageError(f"cannot write BEV grid {bin_path}: {exc}") from exc
    return bin_path, hdr_path


def read_bev(prefix) -> BevGrid:
    prefix = Path(prefix)
    header = json.loads(prefix.with_name(prefix.name + ".json").read_text(encoding="utf-8"))
    nx, ny = header["rows"], header["cols"]
    raw = np.frombuffer(prefix.with_name(prefix.name + ".bin").read_bytes(), dtype="<f4")
    if raw.size != 3 * nx * ny:
        raise StorageError(f"{prefix}.bin: expected {3 * nx * ny} floats, found {raw.size}")
    h, m, d = raw.reshape(3, nx, ny).astype(np.float64)
    return BevGrid(header["cell_size"], tuple(header["extent"]), h, m, d.astype(np.int64), header["dropped"])
