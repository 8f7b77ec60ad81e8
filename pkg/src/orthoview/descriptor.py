"""View descriptors, external embedding import and max-pooled global features."""

from __future__ import annotations

import math
import os
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from .cloud_io import PointCloud, _frozen
from .errors import BadConfig, DimensionMismatch, NonFiniteValue, ZeroVector
from .frame import ReferenceFrame, canonical_scale, canonicalize, compute_reference_frame
from .ortho import DEFAULT_RESOLUTION, VIEWS, ViewGrid, project_all

N_ORIENTATION_BINS = 8
BLOCK_FIELDS = 2 + N_ORIENTATION_BINS


@dataclass(frozen=True, eq=False)
class ViewFeature:
    values: np.ndarray
    descriptor_id: str

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64).reshape(-1)
        if values.size == 0:
            raise DimensionMismatch("feature must have at least one dimension")
        if not np.all(np.isfinite(values)):
            raise NonFiniteValue("feature values must be finite")
        object.__setattr__(self, "values", _frozen(values))

    @property
    def dim(self) -> int:
        return self.values.size


@dataclass(frozen=True, eq=False)
class GlobalFeature(ViewFeature):
    """Unit-norm object feature (element-wise max over the three view features)."""


@dataclass(frozen=True)
class DescriptorConfig:
    resolution: Tuple[int, int] = DEFAULT_RESOLUTION
    blocks: int = 8

    def __post_init__(self):
        object.__setattr__(self, "resolution", tuple(int(r) for r in self.resolution))
        if self.blocks < 1:
            raise BadConfig("blocks must be positive")
        w, h = self.resolution
        if w % self.blocks or h % self.blocks:
            raise BadConfig(f"{self.blocks} blocks do not divide a {w}x{h} grid")

    @property
    def descriptor_id(self) -> str:
        w, h = self.resolution
        return f"blockgrad:r{w}x{h}:b{self.blocks}"

    @property
    def dim(self) -> int:
        return self.blocks * self.blocks * BLOCK_FIELDS


def central_gradients(values: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Central differences; returns (d/dcol, d/drow).

    A component is zero on the border cells where one of its two neighbours is
    missing, so a constant grid has no gradient anywhere.
    """
    values = np.asarray(values, dtype=np.float64)
    gx = np.zeros_like(values)
    gy = np.zeros_like(values)
    gx[:, 1:-1] = (values[:, 2:] - values[:, :-2]) / 2.0
    gy[1:-1, :] = (values[2:, :] - values[:-2, :]) / 2.0
    return gx, gy


def orientation_bin(gx, gy):
    angle = np.mod(np.arctan2(gy, gx), 2 * np.pi)
    bins = np.floor(angle / (2 * np.pi / N_ORIENTATION_BINS)).astype(np.int64)
    return np.clip(bins, 0, N_ORIENTATION_BINS - 1)


def describe_view(grid: ViewGrid, blocks: int = 8) -> ViewFeature:
    """Block gradient descriptor of a view grid.

    The grid is cut into ``blocks x blocks`` equal tiles. Each tile contributes
    its mean value, its occupied-cell fraction and an 8-bin histogram of
    gradient orientations weighted by gradient magnitude, giving
    ``blocks**2 * 10`` values in block row-major order.
    """
    values = grid.values
    h, w = values.shape
    if blocks < 1 or w % blocks or h % blocks:
        raise BadConfig(f"{blocks} blocks do not divide a {w}x{h} grid")
    bh, bw = h // blocks, w // blocks

    tiles = values.reshape(blocks, bh, blocks, bw)
    mean = tiles.mean(axis=(1, 3)).reshape(-1)
    occupancy = (tiles > 0).mean(axis=(1, 3)).reshape(-1)

    gx, gy = central_gradients(values)
    magnitude = np.hypot(gx, gy)
    bins = orientation_bin(gx, gy)
    rows, cols = np.indices((h, w))
    block = (rows // bh) * blocks + cols // bw
    hist = np.bincount(
        (block * N_ORIENTATION_BINS + bins).ravel(),
        weights=magnitude.ravel(),
        minlength=blocks * blocks * N_ORIENTATION_BINS,
    ).reshape(blocks * blocks, N_ORIENTATION_BINS)

    feature = np.column_stack([mean, occupancy, hist]).reshape(-1)
    return ViewFeature(feature, f"blockgrad:r{w}x{h}:b{blocks}")


_SEPARATORS = re.compile(r"[\s,]+")


def load_external_view_feature(path: Union[str, os.PathLike], expected_dim: int,
                               source: Optional[str] = None) -> ViewFeature:
    """Read one externally computed view embedding (whitespace/comma separated reals).

    The descriptor id is ``external:<source>``; ``source`` defaults to the file's
    basename. Pass a shared source name when the three views of an object must
    be pooled together.
    """
    path = Path(path)
    tokens = [t for t in _SEPARATORS.split(path.read_text()) if t]
    try:
        values = [float(t) for t in tokens]
    except ValueError as exc:
        raise NonFiniteValue(f"{path}: {exc}") from None
    if len(values) != expected_dim:
        raise DimensionMismatch(f"{path}: expected {expected_dim} values, found {len(values)}")
    if not all(math.isfinite(v) for v in values):
        raise NonFiniteValue(f"{path}: non-finite value")
    return ViewFeature(np.array(values), f"external:{source or path.name}")


def pool_max(front: ViewFeature, top: ViewFeature, right: ViewFeature) -> GlobalFeature:
    views = (front, top, right)
    ids = {v.descriptor_id for v in views}
    if len(ids) != 1:
        raise DimensionMismatch(f"cannot pool features from different descriptors: {sorted(ids)}")
    dims = {v.dim for v in views}
    if len(dims) != 1:
        raise DimensionMismatch(f"cannot pool features of dimensions {sorted(dims)}")
    pooled = np.maximum(np.maximum(front.values, top.values), right.values)
    norm = float(np.linalg.norm(pooled))
    if norm == 0.0:
        raise ZeroVector("all pooled view features are zero")
    return GlobalFeature(pooled / norm, front.descriptor_id)


class Extraction(NamedTuple):
    """Every intermediate product of the global-feature pipeline for one cloud."""

    frame: ReferenceFrame
    scale: float
    canonical: PointCloud
    grids: Tuple[ViewGrid, ViewGrid, ViewGrid]
    views: Tuple[ViewFeature, ViewFeature, ViewFeature]
    feature: GlobalFeature


def extract(cloud: PointCloud, config: DescriptorConfig = DescriptorConfig()) -> Extraction:
    frame = compute_reference_frame(cloud)
    canonical = canonicalize(cloud, frame)
    grids = project_all(canonical, config.resolution)
    views = tuple(describe_view(g, config.blocks) for g in grids)
    return Extraction(frame, canonical_scale(cloud, frame), canonical, grids, views, pool_max(*views))


def global_feature(cloud: PointCloud, config: DescriptorConfig = DescriptorConfig()) -> GlobalFeature:
    return extract(cloud, config).feature


def load_external_dataset(root: Union[str, os.PathLike], expected_dim: int) -> Dict[str, List[GlobalFeature]]:
    """Pool ``<root>/<category>/<instance>.<view>.feat`` triples into global features."""
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"feature root {root} is not a directory")
    dataset: Dict[str, List[GlobalFeature]] = {}
    for category in sorted(p for p in root.iterdir() if p.is_dir()):
        instances = sorted({f.name[: -len(".front.feat")] for f in category.glob("*.front.feat")})
        features = []
        for name in instances:
            views = [
                load_external_view_feature(category / f"{name}.{view}.feat", expected_dim, source=root.name)
                for view in VIEWS
            ]
            features.append(pool_max(*views))
        if features:
            dataset[category.name] = features
    return dataset
