"""Grasp templates: demonstrated gripper poses tied to affordance labels and object features."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.transform import Rotation

from .cloud_io import PointCloud, _frozen
from .descriptor import DescriptorConfig, GlobalFeature, ViewFeature, describe_view, extract
from .errors import EmptyStore, NotFamiliar, PoseOutsideObject
from .ortho import ViewGrid, cell_index

POSE_BOUND = 1.5
STORE_VERSION = 1


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product of (w, x, y, z) quaternions."""
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_from_matrix(matrix: np.ndarray) -> np.ndarray:
    x, y, z, w = Rotation.from_matrix(matrix).as_quat()
    return np.array([w, x, y, z])


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return Rotation.from_quat([x, y, z, w]).as_matrix()


@dataclass(frozen=True, eq=False)
class GripperPose:
    position: np.ndarray
    orientation: np.ndarray  # unit quaternion (w, x, y, z)

    def __post_init__(self):
        pos = np.array(self.position, dtype=np.float64).reshape(3)
        quat = np.array(self.orientation, dtype=np.float64).reshape(4)
        if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(quat))):
            raise ValueError("pose values must be finite")
        if abs(np.linalg.norm(quat) - 1.0) > 1e-9:
            raise ValueError(f"orientation must be a unit quaternion, norm is {np.linalg.norm(quat)}")
        object.__setattr__(self, "position", _frozen(pos))
        object.__setattr__(self, "orientation", _frozen(quat))

    @classmethod
    def from_values(cls, values: Sequence[float], normalize: bool = True) -> "GripperPose":
        """Build from ``px py pz qw qx qy qz``."""
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (7,):
            raise ValueError("a pose needs 7 values: px py pz qw qx qy qz")
        quat = values[3:]
        if normalize:
            quat = quat / np.linalg.norm(quat)
        return cls(values[:3], quat)

    def as_values(self) -> List[float]:
        return self.position.tolist() + self.orientation.tolist()


@dataclass(frozen=True, eq=False)
class GraspTemplate:
    affordance_label: str
    pose: GripperPose  # object frame, position in bounding-cube units
    global_feature: GlobalFeature
    local_feature: ViewFeature


@dataclass
class TemplateStore:
    config: DescriptorConfig = field(default_factory=DescriptorConfig)
    local_size: int = 16
    local_blocks: int = 4
    weights: Tuple[float, float] = (0.5, 0.5)
    templates: List[GraspTemplate] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.templates)

    def to_json(self) -> str:
        doc = {
            "version": STORE_VERSION,
            "resolution": list(self.config.resolution),
            "blocks": self.config.blocks,
            "local_size": self.local_size,
            "local_blocks": self.local_blocks,
            "weights": list(self.weights),
            "templates": [
                {
                    "label": t.affordance_label,
                    "pose": t.pose.as_values(),
                    "global_feature": {"id": t.global_feature.descriptor_id,
                                       "values": t.global_feature.values.tolist()},
                    "local_feature": {"id": t.local_feature.descriptor_id,
                                      "values": t.local_feature.values.tolist()},
                }
                for t in self.templates
            ],
        }
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "TemplateStore":
        doc = json.loads(text)
        if doc.get("version") != STORE_VERSION:
            raise ValueError(f"unsupported template store version {doc.get('version')!r}")
        store = cls(
            DescriptorConfig(tuple(doc["resolution"]), doc["blocks"]),
            doc["local_size"], doc["local_blocks"], tuple(doc["weights"]),
        )
        for t in doc["templates"]:
            store.templates.append(GraspTemplate(
                t["label"],
                GripperPose.from_values(t["pose"], normalize=False),
                GlobalFeature(np.array(t["global_feature"]["values"]), t["global_feature"]["id"]),
                ViewFeature(np.array(t["local_feature"]["values"]), t["local_feature"]["id"]),
            ))
        return store


@dataclass(frozen=True)
class GraspMatch:
    affordance_label: str
    pose: GripperPose  # world frame of the query cloud
    distance: float
    template_index: int

    @property
    def similarity(self) -> float:
        return 1.0 - self.distance


def cosine_distance(a: np.ndarray, b: np.ndarray) -> float:
    """1 - cos(a, b); two zero vectors are identical, one zero vector is maximally far."""
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0 if na == nb else 1.0
    return 1.0 - float(a @ b) / (na * nb)


def local_patch(front: ViewGrid, position: np.ndarray, size: int) -> ViewGrid:
    """``size x size`` window of the front view centred on the grasp's projection."""
    w, h = front.resolution
    col = int(cell_index(position[1], w))
    row = int(cell_index(position[2], h))
    half = size // 2
    padded = np.pad(front.values, half)
    return ViewGrid("front", padded[row:row + size, col:col + size])


def _local_feature(front: ViewGrid, position: np.ndarray, store: TemplateStore) -> ViewFeature:
    return describe_view(local_patch(front, position, store.local_size), store.local_blocks)


def learn_grasp(store: TemplateStore, cloud: PointCloud, affordance_label: str,
                world_pose: GripperPose) -> TemplateStore:
    """Append a template for a demonstrated grasp (pose given in the cloud's world frame)."""
    ex = extract(cloud, store.config)
    position = ex.frame.to_local(world_pose.position) / ex.scale
    if np.any(np.abs(position) > POSE_BOUND):
        raise PoseOutsideObject(
            f"grasp position {np.round(position, 3).tolist()} lies outside the object's "
            f"[-{POSE_BOUND}, {POSE_BOUND}] bounding cube"
        )
    orientation = quat_multiply(quat_conjugate(quat_from_matrix(ex.frame.axes)), world_pose.orientation)
    orientation /= np.linalg.norm(orientation)
    template = GraspTemplate(
        affordance_label,
        GripperPose(position, orientation),
        ex.feature,
        _local_feature(ex.grids[0], position, store),
    )
    store.templates.append(template)
    return store


def rank_templates(store: TemplateStore, cloud: PointCloud) -> Tuple[np.ndarray, "object"]:
    """Combined global/local distance from ``cloud`` to every template."""
    if not store.templates:
        raise EmptyStore("no grasp templates have been learned")
    ex = extract(cloud, store.config)
    wg, wl = store.weights
    dist = np.empty(len(store.templates))
    for i, t in enumerate(store.templates):
        local = _local_feature(ex.grids[0], t.pose.position, store)
        dist[i] = wg * (1.0 - float(t.global_feature.values @ ex.feature.values)) + \
            wl * cosine_distance(t.local_feature.values, local.values)
    return dist, ex


def recognize_grasp(store: TemplateStore, cloud: PointCloud, tau_familiar: float) -> GraspMatch:
    """Transfer the closest template's grasp onto ``cloud``.

    Raises NotFamiliar when even the closest template is farther than
    ``tau_familiar``. Ties go to the earliest-learned template.
    """
    dist, ex = rank_templates(store, cloud)
    best = int(np.argmin(dist))
    d = max(float(dist[best]), 0.0)
    template = store.templates[best]
    if d > tau_familiar:
        raise NotFamiliar(
            f"object is not familiar: nearest template {template.affordance_label!r} "
            f"at distance {d:.4f} > {tau_familiar}"
        )
    position = ex.frame.to_world(template.pose.position * ex.scale)
    orientation = quat_multiply(quat_from_matrix(ex.frame.axes), template.pose.orientation)
    orientation /= np.linalg.norm(orientation)
    return GraspMatch(template.affordance_label, GripperPose(position, orientation), d, best)
