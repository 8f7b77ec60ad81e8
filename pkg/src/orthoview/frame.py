"""Principal-axis object reference frame and canonicalisation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cloud_io import PointCloud, _frozen
from .errors import DegenerateCloud, EmptyCloud

# lambda2 / lambda1 below this means the points are effectively collinear
COLLINEAR_RATIO = 1e-6
# lambda3 / lambda1 above this means no principal direction stands out (sphere, cube)
ISOTROPIC_RATIO = 0.9


@dataclass(frozen=True, eq=False)
class ReferenceFrame:
    origin: np.ndarray
    axes: np.ndarray  # columns are the object X, Y, Z axes
    eigenvalues: np.ndarray  # descending, m^2

    def __post_init__(self):
        object.__setattr__(self, "origin", _frozen(np.array(self.origin, dtype=np.float64).reshape(3)))
        object.__setattr__(self, "axes", _frozen(np.array(self.axes, dtype=np.float64).reshape(3, 3)))
        object.__setattr__(self, "eigenvalues", _frozen(np.array(self.eigenvalues, dtype=np.float64).reshape(3)))

    def to_local(self, points: np.ndarray) -> np.ndarray:
        """Rotate world points into the frame (no scale normalisation)."""
        return (np.asarray(points, dtype=np.float64) - self.origin) @ self.axes

    def to_world(self, local: np.ndarray) -> np.ndarray:
        return np.asarray(local, dtype=np.float64) @ self.axes.T + self.origin


def centroid(cloud: PointCloud) -> np.ndarray:
    return cloud.require_points().mean(axis=0)


def _orient(axis: np.ndarray, centered: np.ndarray) -> np.ndarray:
    proj = centered @ axis
    pos = int(np.count_nonzero(proj > 0))
    neg = int(np.count_nonzero(proj < 0))
    if pos != neg:
        return axis if pos > neg else -axis
    skew = float(np.sum(proj ** 3))
    return -axis if skew < 0 else axis


def compute_reference_frame(cloud: PointCloud) -> ReferenceFrame:
    """PCA frame with deterministic axis signs.

    X and Y are the two leading eigenvectors of the point covariance, each
    flipped so that at least as many points project positively as negatively
    (ties resolved by the sign of the summed cubed projections). Z = X x Y.
    """
    points = cloud.require_points()
    if len(points) < 4:
        raise DegenerateCloud(f"degenerate reference frame: need at least 4 points, got {len(points)}")
    origin = points.mean(axis=0)
    centered = points - origin
    cov = centered.T @ centered / len(points)
    values, vectors = np.linalg.eigh(cov)
    order = np.argsort(values)[::-1]
    values = np.clip(values[order], 0.0, None)
    vectors = vectors[:, order]
    if values[0] <= 0 or values[1] / values[0] < COLLINEAR_RATIO:
        raise DegenerateCloud("degenerate reference frame: points are collinear")
    if values[2] / values[0] > ISOTROPIC_RATIO:
        raise DegenerateCloud(
            "degenerate reference frame: covariance is isotropic "
            f"(eigenvalue ratio {values[2] / values[0]:.3f})"
        )
    x = _orient(vectors[:, 0], centered)
    y = _orient(vectors[:, 1], centered)
    z = np.cross(x, y)
    z /= np.linalg.norm(z)
    return ReferenceFrame(origin, np.column_stack([x, y, z]), values)


def canonical_scale(cloud: PointCloud, frame: ReferenceFrame) -> float:
    """Half-edge of the bounding cube of the cloud expressed in ``frame``."""
    extent = float(np.max(np.abs(frame.to_local(cloud.require_points()))))
    if extent == 0.0:
        raise DegenerateCloud("degenerate reference frame: all points coincide with the origin")
    return extent


def canonicalize(cloud: PointCloud, frame: ReferenceFrame) -> PointCloud:
    """Express the cloud in ``frame`` and shrink it into the [-1, 1] cube."""
    if cloud.is_empty:
        raise EmptyCloud("cannot canonicalize an empty cloud")
    local = frame.to_local(cloud.points)
    extent = float(np.max(np.abs(local)))
    if extent == 0.0:
        raise DegenerateCloud("degenerate reference frame: all points coincide with the origin")
    return PointCloud(local / extent, cloud.source_id)
