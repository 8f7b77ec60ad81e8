"""Front, top and right-side orthographic depth rasters of a canonical cloud."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .cloud_io import PointCloud, _frozen
from .errors import BadResolution, EmptyCloud

VIEWS = ("front", "top", "right")
DEFAULT_RESOLUTION = (64, 64)
MIN_OCCUPIED = 1e-6

# view -> (horizontal axis, vertical axis, depth axis) as coordinate indices
VIEW_AXES = {
    "front": (1, 2, 0),  # YZ plane, looking along X
    "top": (0, 1, 2),  # XY plane, looking along Z
    "right": (0, 2, 1),  # XZ plane, looking along Y
}


@dataclass(frozen=True, eq=False)
class ViewGrid:
    """Depth raster; ``values[row, col]`` with row 0 at vertical -1, col 0 at horizontal -1."""

    view: str
    values: np.ndarray

    def __post_init__(self):
        if self.view not in VIEWS:
            raise ValueError(f"unknown view {self.view!r}")
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError("grid values must be 2-D")
        object.__setattr__(self, "values", _frozen(values))

    @property
    def resolution(self) -> Tuple[int, int]:
        h, w = self.values.shape
        return w, h

    def to_csv(self) -> str:
        return "".join(",".join(repr(float(v)) for v in row) + "\n" for row in self.values)

    def to_pgm(self) -> bytes:
        """Binary 8-bit PGM with the +1 vertical edge at the top of the image."""
        w, h = self.resolution
        pixels = np.rint(np.flipud(self.values) * 255).astype(np.uint8)
        return f"P5\n{w} {h}\n255\n".encode("ascii") + pixels.tobytes()


def cell_index(coord: np.ndarray, n: int) -> np.ndarray:
    """Map coordinates in [-1, 1] to cells 0..n-1; +1 lands in the last cell."""
    idx = np.floor((np.asarray(coord, dtype=np.float64) + 1.0) * 0.5 * n).astype(np.int64)
    return np.clip(idx, 0, n - 1)


def _check_resolution(resolution) -> Tuple[int, int]:
    try:
        w, h = (int(r) for r in resolution)
    except (TypeError, ValueError):
        raise BadResolution(f"resolution must be a (W, H) pair, got {resolution!r}") from None
    if w < 4 or h < 4:
        raise BadResolution(f"resolution must be at least 4x4, got {w}x{h}")
    return w, h


def project(canonical: PointCloud, view: str, resolution=DEFAULT_RESOLUTION) -> ViewGrid:
    """Rasterise one orthographic view.

    A cell holds ``1 - d`` for the nearest point in it, where ``d`` is that
    point's depth coordinate remapped from [-1, 1] to [0, 1]. Empty cells are 0
    and occupied cells are at least ``MIN_OCCUPIED``.
    """
    if view not in VIEW_AXES:
        raise ValueError(f"unknown view {view!r}")
    w, h = _check_resolution(resolution)
    if canonical.is_empty:
        raise EmptyCloud("cannot project an empty cloud")
    pts = canonical.points
    hor, ver, dep = VIEW_AXES[view]
    cols = cell_index(pts[:, hor], w)
    rows = cell_index(pts[:, ver], h)
    depth = np.clip((pts[:, dep] + 1.0) * 0.5, 0.0, 1.0)
    nearest = np.full(h * w, np.inf)
    np.minimum.at(nearest, rows * w + cols, depth)
    nearest = nearest.reshape(h, w)
    occupied = np.isfinite(nearest)
    values = np.zeros((h, w))
    values[occupied] = np.maximum(1.0 - nearest[occupied], MIN_OCCUPIED)
    return ViewGrid(view, values)


def project_all(canonical: PointCloud, resolution=DEFAULT_RESOLUTION) -> Tuple[ViewGrid, ViewGrid, ViewGrid]:
    return tuple(project(canonical, view, resolution) for view in VIEWS)
