"""Open-ended, instance-based category memory with nearest-neighbour recognition."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from .descriptor import GlobalFeature
from .errors import DimensionMismatch, UnknownLabel

METRICS = ("euclidean", "cosine", "chisquare")
CHISQUARE_EPS = 1e-12
SNAPSHOT_VERSION = 1


def distances(stored: np.ndarray, query: np.ndarray, metric: str) -> np.ndarray:
    """Distance from ``query`` to every row of ``stored``."""
    if metric == "euclidean":
        return np.sqrt(np.sum((stored - query) ** 2, axis=1))
    if metric == "cosine":
        # features are unit-norm, so 1 - dot is the cosine distance
        return 1.0 - stored @ query
    if metric == "chisquare":
        return np.sum((stored - query) ** 2 / (stored + query + CHISQUARE_EPS), axis=1)
    raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}")


@dataclass(frozen=True)
class Prediction:
    label: str
    distance: float
    runner_up_distance: Optional[float] = None


@dataclass(frozen=True)
class MemoryStats:
    counts: Dict[str, int]
    n_categories: int
    n_instances: int
    average: float


class CategoryMemory:
    """label -> stored instance features.

    Teaching only appends; stored features are read-only arrays and are never
    rewritten, so adding a category cannot disturb what is already known.
    """

    def __init__(self):
        self._categories: Dict[str, List[GlobalFeature]] = {}
        self.creation_order: List[str] = []
        self.descriptor_id: Optional[str] = None
        self.dim: Optional[int] = None
        # flattened view rebuilt lazily for classification
        self._matrix: Optional[np.ndarray] = None
        self._labels: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self._categories)

    def __contains__(self, label: str) -> bool:
        return label in self._categories

    def labels(self) -> List[str]:
        return list(self.creation_order)

    def instances(self, label: str) -> Tuple[GlobalFeature, ...]:
        if label not in self._categories:
            raise UnknownLabel(f"unknown label {label!r}")
        return tuple(self._categories[label])

    def items(self) -> Iterator[Tuple[str, Tuple[GlobalFeature, ...]]]:
        for label in self.creation_order:
            yield label, tuple(self._categories[label])

    @property
    def n_instances(self) -> int:
        return sum(len(v) for v in self._categories.values())

    def teach(self, label: str, feature: GlobalFeature) -> "CategoryMemory":
        if self.dim is not None and (feature.dim != self.dim or feature.descriptor_id != self.descriptor_id):
            raise DimensionMismatch(
                f"memory holds {self.descriptor_id} features of dimension {self.dim}, "
                f"got {feature.descriptor_id} of dimension {feature.dim}"
            )
        if self.dim is None:
            self.dim, self.descriptor_id = feature.dim, feature.descriptor_id
        if label not in self._categories:
            self._categories[label] = []
            self.creation_order.append(label)
        self._categories[label].append(feature)
        self._matrix = None
        return self

    def forget(self, label: str) -> "CategoryMemory":
        if label not in self._categories:
            raise UnknownLabel(f"unknown label {label!r}")
        del self._categories[label]
        self.creation_order.remove(label)
        if not self._categories:
            self.dim = self.descriptor_id = None
        self._matrix = None
        return self

    def _index(self) -> Tuple[np.ndarray, np.ndarray]:
        if self._matrix is None:
            labels, rows = [], []
            for label in self.creation_order:
                for feature in self._categories[label]:
                    labels.append(label)
                    rows.append(feature.values)
            self._matrix = np.array(rows).reshape(len(rows), self.dim or 0)
            self._labels = np.array(labels, dtype=object)
        return self._matrix, self._labels

    def classify(self, feature: GlobalFeature, metric: str = "cosine",
                 tau_unknown: float = math.inf) -> Optional[Prediction]:
        """Nearest stored instance wins; ``None`` means unknown.

        Exact distance ties go to the lexicographically smallest label. The
        runner-up distance is the nearest instance of any other category.
        """
        if metric not in METRICS:
            raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}")
        if not self._categories:
            return None
        if feature.dim != self.dim:
            raise DimensionMismatch(f"memory holds dimension {self.dim}, query has {feature.dim}")
        matrix, labels = self._index()
        dist = distances(matrix, feature.values, metric)
        best = float(dist.min())
        if best > tau_unknown:
            return None
        label = min(labels[dist == best])
        others = dist[labels != label]
        runner_up = float(others.min()) if others.size else None
        return Prediction(label, best, runner_up)

    def stats(self) -> MemoryStats:
        counts = {label: len(self._categories[label]) for label in self.creation_order}
        total = sum(counts.values())
        return MemoryStats(counts, len(counts), total, total / len(counts) if counts else 0.0)

    # ------------------------------------------------------------------ snapshots

    def to_json(self) -> str:
        doc = {
            "version": SNAPSHOT_VERSION,
            "descriptor_id": self.descriptor_id,
            "dim": self.dim,
            "categories": [
                {"label": label, "instances": [f.values.tolist() for f in self._categories[label]]}
                for label in self.creation_order
            ],
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "CategoryMemory":
        doc = json.loads(text)
        if doc.get("version") != SNAPSHOT_VERSION:
            raise ValueError(f"unsupported memory snapshot version {doc.get('version')!r}")
        memory = cls()
        for entry in doc["categories"]:
            for values in entry["instances"]:
                memory.teach(entry["label"], GlobalFeature(np.array(values), doc["descriptor_id"]))
        return memory
