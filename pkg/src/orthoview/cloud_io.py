"""Point cloud containers, ASCII parsers/writers, transforms and synthetic shapes."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import (
    CountMismatch,
    EmptyCloud,
    InvalidDimension,
    MalformedHeader,
    NonFiniteValue,
    ParseError,
)

FORMATS = ("pcd_ascii", "ply_ascii", "xyz")
EXTENSIONS = {".pcd": "pcd_ascii", ".ply": "ply_ascii", ".xyz": "xyz"}
SHAPE_KINDS = ("box", "cylinder", "sphere", "lshape")


def _frozen(array: np.ndarray) -> np.ndarray:
    array.flags.writeable = False
    return array


@dataclass(frozen=True, eq=False)
class PointCloud:
    """An (N, 3) set of points in meters, stored in float64."""

    points: np.ndarray
    source_id: Optional[str] = None

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64, copy=True)
        if pts.size == 0:
            pts = pts.reshape(0, 3)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"points must have shape (N, 3), got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise NonFiniteValue("point coordinates must be finite")
        object.__setattr__(self, "points", _frozen(pts))

    def __len__(self) -> int:
        return self.points.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, PointCloud):
            return NotImplemented
        return self.points.shape == other.points.shape and bool(
            np.array_equal(self.points, other.points)
        )

    __hash__ = None

    @property
    def is_empty(self) -> bool:
        return len(self) == 0

    def require_points(self) -> np.ndarray:
        if self.is_empty:
            name = f" {self.source_id!r}" if self.source_id else ""
            raise EmptyCloud(f"cloud{name} has no points")
        return self.points


@dataclass(frozen=True, eq=False)
class RigidScaleTransform:
    """p -> scale * rotation @ p + translation."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    scale: float = 1.0

    def __post_init__(self):
        rot = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        trans = np.array(self.translation, dtype=np.float64).reshape(3)
        if not np.allclose(rot.T @ rot, np.eye(3), atol=1e-9, rtol=0):
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(rot) - 1.0) > 1e-9:
            raise ValueError("rotation must have determinant +1")
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise ValueError("scale must be a positive finite number")
        object.__setattr__(self, "rotation", _frozen(rot))
        object.__setattr__(self, "translation", _frozen(trans))
        object.__setattr__(self, "scale", float(self.scale))

    def apply_points(self, points: np.ndarray) -> np.ndarray:
        return self.scale * (np.asarray(points) @ self.rotation.T) + self.translation

    def compose(self, first: "RigidScaleTransform") -> "RigidScaleTransform":
        """Return the transform equal to applying ``first`` and then ``self``."""
        return RigidScaleTransform(
            rotation=self.rotation @ first.rotation,
            translation=self.scale * (self.rotation @ first.translation) + self.translation,
            scale=self.scale * first.scale,
        )

    @classmethod
    def random(cls, rng: np.random.Generator, scale_range=(0.5, 2.0),
               translation_scale: float = 1.0) -> "RigidScaleTransform":
        from scipy.spatial.transform import Rotation

        rot = Rotation.random(random_state=rng).as_matrix()
        # scipy's matrices are orthonormal to ~1e-16 but re-orthonormalize anyway
        u, _, vt = np.linalg.svd(rot)
        rot = u @ vt
        return cls(
            rotation=rot,
            translation=rng.uniform(-translation_scale, translation_scale, size=3),
            scale=float(rng.uniform(*scale_range)),
        )


def apply_transform(cloud: PointCloud, t: RigidScaleTransform) -> PointCloud:
    return PointCloud(t.apply_points(cloud.require_points()), cloud.source_id)


# --------------------------------------------------------------------------- parsing


def _floats(tokens: Sequence[str], lineno: int) -> List[float]:
    try:
        values = [float(tok) for tok in tokens]
    except ValueError as exc:
        raise ParseError(f"line {lineno}: non-numeric value ({exc})") from None
    if not all(math.isfinite(v) for v in values):
        raise NonFiniteValue(f"line {lineno}: non-finite coordinate")
    return values


def _data_lines(lines: Iterable[Tuple[int, str]]):
    for lineno, line in lines:
        stripped = line.strip()
        if stripped:
            yield lineno, stripped.split()


def _parse_pcd(lines: List[str]) -> np.ndarray:
    header: Dict[str, List[str]] = {}
    data_start = None
    for i, line in enumerate(lines):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, *rest = stripped.split()
        key = key.upper()
        header[key] = rest
        if key == "DATA":
            data_start = i + 1
            break
    if data_start is None:
        raise MalformedHeader("PCD header has no DATA line")
    if header["DATA"][:1] != ["ascii"]:
        raise MalformedHeader(f"unsupported PCD DATA mode {' '.join(header['DATA'])!r}")
    fields = header.get("FIELDS")
    if not fields:
        raise MalformedHeader("PCD header has no FIELDS line")
    for axis in "xyz":
        if axis not in fields:
            raise MalformedHeader(f"PCD FIELDS lacks {axis!r}")
    for key in ("SIZE", "TYPE", "COUNT"):
        if key in header and len(header[key]) != len(fields):
            raise MalformedHeader(f"PCD {key} has {len(header[key])} entries for {len(fields)} fields")
    try:
        counts = [int(c) for c in header.get("COUNT", ["1"] * len(fields))]
        width = int(header["WIDTH"][0]) if "WIDTH" in header else None
        height = int(header["HEIGHT"][0]) if "HEIGHT" in header else 1
        n_points = int(header["POINTS"][0]) if "POINTS" in header else None
    except (ValueError, IndexError):
        raise MalformedHeader("PCD COUNT/WIDTH/HEIGHT/POINTS must be integers") from None
    if n_points is None:
        if width is None:
            raise MalformedHeader("PCD header declares neither POINTS nor WIDTH")
        n_points = width * height
    elif width is not None and width * height != n_points:
        raise MalformedHeader(f"PCD WIDTH*HEIGHT={width * height} disagrees with POINTS={n_points}")

    offsets = np.cumsum([0] + counts)
    cols = [int(offsets[fields.index(axis)]) for axis in "xyz"]
    n_cols = int(offsets[-1])
    rows = []
    for lineno, tokens in _data_lines(enumerate(lines[data_start:], start=data_start + 1)):
        if len(tokens) != n_cols:
            raise CountMismatch(f"line {lineno}: expected {n_cols} values, got {len(tokens)}")
        rows.append(_floats([tokens[c] for c in cols], lineno))
    if len(rows) != n_points:
        raise CountMismatch(f"PCD declares {n_points} points but contains {len(rows)} rows")
    return np.array(rows, dtype=np.float64).reshape(-1, 3)


def _parse_ply(lines: List[str]) -> np.ndarray:
    if not lines or lines[0].strip() != "ply":
        raise MalformedHeader("PLY file must start with 'ply'")
    elements: List[Tuple[str, int, List[str]]] = []
    fmt = None
    body_start = None
    for i, line in enumerate(lines[1:], start=1):
        tokens = line.split()
        if not tokens or tokens[0] in ("comment", "obj_info"):
            continue
        if tokens[0] == "format":
            fmt = tokens[1:2]
        elif tokens[0] == "element":
            if len(tokens) != 3:
                raise MalformedHeader(f"bad element line {line.strip()!r}")
            try:
                elements.append((tokens[1], int(tokens[2]), []))
            except ValueError:
                raise MalformedHeader(f"bad element count in {line.strip()!r}") from None
        elif tokens[0] == "property":
            if not elements:
                raise MalformedHeader("property declared before any element")
            elements[-1][2].append(" ".join(tokens[1:]))
        elif tokens[0] == "end_header":
            body_start = i + 1
            break
        else:
            raise MalformedHeader(f"unexpected header line {line.strip()!r}")
    if body_start is None:
        raise MalformedHeader("PLY header has no end_header")
    if fmt != ["ascii"]:
        raise MalformedHeader(f"unsupported PLY format {fmt}")

    body = list(_data_lines(enumerate(lines[body_start:], start=body_start + 1)))
    cursor = 0
    for name, count, props in elements:
        if name != "vertex":
            # other elements (faces, edges) are skipped row by row
            cursor += count
            continue
        names = []
        for prop in props:
            parts = prop.split()
            if parts[0] == "list":
                raise MalformedHeader("list properties on vertices are not supported")
            names.append(parts[-1])
        for axis in "xyz":
            if axis not in names:
                raise MalformedHeader(f"vertex element lacks property {axis!r}")
        cols = [names.index(axis) for axis in "xyz"]
        rows = body[cursor:cursor + count]
        if len(rows) != count:
            raise CountMismatch(f"PLY declares {count} vertices but contains {len(rows)} rows")
        out = []
        for lineno, tokens in rows:
            if len(tokens) != len(names):
                raise CountMismatch(f"line {lineno}: expected {len(names)} values, got {len(tokens)}")
            out.append(_floats([tokens[c] for c in cols], lineno))
        return np.array(out, dtype=np.float64).reshape(-1, 3)
    raise MalformedHeader("PLY header declares no vertex element")


def _parse_xyz(lines: List[str]) -> np.ndarray:
    rows = []
    for lineno, line in enumerate(lines, start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        tokens = stripped.replace(",", " ").split()
        if len(tokens) < 3:
            raise ParseError(f"line {lineno}: expected 'x y z', got {stripped!r}")
        rows.append(_floats(tokens[:3], lineno))
    return np.array(rows, dtype=np.float64).reshape(-1, 3)


_PARSERS = {"pcd_ascii": _parse_pcd, "ply_ascii": _parse_ply, "xyz": _parse_xyz}


def parse_cloud(text: Union[bytes, str], format: str, source_id: Optional[str] = None) -> PointCloud:
    """Parse a complete ASCII PCD, PLY or XYZ file body.

    Colour, normal and any other per-point attributes are dropped. Points are
    returned in file order.
    """
    if format not in _PARSERS:
        raise ValueError(f"unknown cloud format {format!r}; expected one of {FORMATS}")
    if isinstance(text, bytes):
        try:
            text = text.decode("ascii")
        except UnicodeDecodeError:
            raise MalformedHeader("binary content; only ASCII variants are supported") from None
    points = _PARSERS[format](text.splitlines())
    return PointCloud(points, source_id)


def _num(value: float) -> str:
    # repr is the shortest string that round-trips the double exactly
    return repr(float(value))


def write_cloud(cloud: PointCloud, format: str) -> bytes:
    points = cloud.require_points()
    rows = "".join(f"{_num(x)} {_num(y)} {_num(z)}\n" for x, y, z in points.tolist())
    n = len(points)
    if format == "pcd_ascii":
        header = (
            "# .PCD v0.7 - Point Cloud Data file format\n"
            "VERSION 0.7\nFIELDS x y z\nSIZE 8 8 8\nTYPE F F F\nCOUNT 1 1 1\n"
            f"WIDTH {n}\nHEIGHT 1\nVIEWPOINT 0 0 0 1 0 0 0\nPOINTS {n}\nDATA ascii\n"
        )
    elif format == "ply_ascii":
        header = (
            "ply\nformat ascii 1.0\n"
            f"element vertex {n}\n"
            "property double x\nproperty double y\nproperty double z\nend_header\n"
        )
    elif format == "xyz":
        header = ""
    else:
        raise ValueError(f"unknown cloud format {format!r}")
    return (header + rows).encode("ascii")


def format_for_path(path: Union[str, os.PathLike]) -> str:
    ext = Path(path).suffix.lower()
    if ext not in EXTENSIONS:
        raise ValueError(f"cannot infer cloud format from extension {ext!r}")
    return EXTENSIONS[ext]


def read_cloud(path: Union[str, os.PathLike], format: Optional[str] = None) -> PointCloud:
    path = Path(path)
    return parse_cloud(path.read_bytes(), format or format_for_path(path), source_id=path.stem)


def save_cloud(cloud: PointCloud, path: Union[str, os.PathLike], format: Optional[str] = None) -> None:
    path = Path(path)
    path.write_bytes(write_cloud(cloud, format or format_for_path(path)))


def load_dataset(root: Union[str, os.PathLike]) -> Dict[str, List[PointCloud]]:
    """Read ``<root>/<category>/<instance>.<ext>``; categories and files sorted by name."""
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset root {root} is not a directory")
    dataset: Dict[str, List[PointCloud]] = {}
    for category in sorted(p for p in root.iterdir() if p.is_dir()):
        files = sorted(f for f in category.iterdir() if f.suffix.lower() in EXTENSIONS)
        if files:
            dataset[category.name] = [read_cloud(f) for f in files]
    return dataset


# --------------------------------------------------------------------------- synthetic shapes


def _rect(origin, u, v):
    return np.asarray(origin, float), np.asarray(u, float), np.asarray(v, float)


def _box_faces(wx, wy, wz, corner=(0.0, 0.0, 0.0)):
    x0, y0, z0 = corner
    ex, ey, ez = np.array([wx, 0, 0]), np.array([0, wy, 0]), np.array([0, 0, wz])
    c = np.array([x0, y0, z0], float)
    return [
        _rect(c, ey, ez), _rect(c + ex, ey, ez),
        _rect(c, ex, ez), _rect(c + ey, ex, ez),
        _rect(c, ex, ey), _rect(c + ez, ex, ey),
    ]


def _lshape_faces(arm, t):
    # L profile in the xy plane (arms along +x and +y), extruded by t along z
    faces = []
    for z in (0.0, t):
        faces.append(_rect((0, 0, z), (arm, 0, 0), (0, t, 0)))
        faces.append(_rect((0, t, z), (t, 0, 0), (0, arm - t, 0)))
    up = (0, 0, t)
    outline = [(0, 0), (arm, 0), (arm, t), (t, t), (t, arm), (0, arm), (0, 0)]
    for (xa, ya), (xb, yb) in zip(outline[:-1], outline[1:]):
        faces.append(_rect((xa, ya, 0), (xb - xa, yb - ya, 0), up))
    return faces


def _sample_rects(faces, n, rng):
    areas = np.array([np.linalg.norm(np.cross(u, v)) for _, u, v in faces])
    which = rng.choice(len(faces), size=n, p=areas / areas.sum())
    st = rng.random((n, 2))
    origins = np.array([f[0] for f in faces])[which]
    us = np.array([f[1] for f in faces])[which]
    vs = np.array([f[2] for f in faces])[which]
    return origins + st[:, :1] * us + st[:, 1:] * vs


def generate_shape(kind: str, dims: Sequence[float], n_points: int = 2000,
                   noise_sigma: float = 0.0, seed: int = 0) -> PointCloud:
    """Sample ``n_points`` uniformly on the surface of an axis-aligned shape at the origin.

    ``dims`` per kind: box ``(wx, wy, wz)``, cylinder ``(radius, height)`` with the
    axis along z, sphere ``(radius,)``, lshape ``(arm, thickness)`` with arms along
    x and y and the extrusion along z. The lshape is centred on its bounding box.
    """
    dims = tuple(float(d) for d in np.atleast_1d(dims))
    expected = {"box": 3, "cylinder": 2, "sphere": 1, "lshape": 2}
    if kind not in expected:
        raise InvalidDimension(f"unknown shape kind {kind!r}")
    if len(dims) != expected[kind]:
        raise InvalidDimension(f"{kind} takes {expected[kind]} dimensions, got {len(dims)}")
    if not all(d > 0 and math.isfinite(d) for d in dims):
        raise InvalidDimension(f"{kind} dimensions must be positive, got {dims}")
    if n_points < 50:
        raise InvalidDimension("n_points must be at least 50")
    if noise_sigma < 0:
        raise InvalidDimension("noise_sigma must be non-negative")

    rng = np.random.default_rng(seed)
    if kind == "box":
        wx, wy, wz = dims
        pts = _sample_rects(_box_faces(wx, wy, wz, (-wx / 2, -wy / 2, -wz / 2)), n_points, rng)
    elif kind == "cylinder":
        r, h = dims
        side, cap = 2 * math.pi * r * h, math.pi * r * r
        part = rng.choice(3, size=n_points, p=np.array([side, cap, cap]) / (side + 2 * cap))
        theta = rng.uniform(0, 2 * math.pi, n_points)
        rad = np.where(part == 0, r, r * np.sqrt(rng.random(n_points)))
        z = np.where(part == 0, rng.uniform(-h / 2, h / 2, n_points),
                     np.where(part == 1, -h / 2, h / 2))
        pts = np.column_stack([rad * np.cos(theta), rad * np.sin(theta), z])
    elif kind == "sphere":
        g = rng.standard_normal((n_points, 3))
        pts = dims[0] * g / np.linalg.norm(g, axis=1, keepdims=True)
    else:
        arm, t = dims
        if t >= arm:
            raise InvalidDimension("lshape thickness must be smaller than the arm length")
        pts = _sample_rects(_lshape_faces(arm, t), n_points, rng) - np.array([arm / 2, arm / 2, t / 2])
    if noise_sigma > 0:
        pts = pts + rng.normal(0.0, noise_sigma, size=pts.shape)
    return PointCloud(pts, f"{kind}({','.join(f'{d:g}' for d in dims)})")


# Ten shape categories whose proportions differ enough to survive scale normalisation.
SYNTHETIC_CATALOG: Tuple[Tuple[str, str, Tuple[float, ...]], ...] = (
    ("block", "box", (4.0, 2.0, 1.0)),
    ("plate", "box", (3.0, 2.2, 0.3)),
    ("stick", "box", (5.0, 0.9, 0.5)),
    ("brick", "box", (2.0, 1.6, 1.2)),
    ("can", "cylinder", (1.0, 3.0)),
    ("disc", "cylinder", (1.0, 0.5)),
    ("rod", "cylinder", (0.3, 4.0)),
    ("bracket", "lshape", (1.0, 0.2)),
    ("corner", "lshape", (1.0, 0.45)),
    ("puck", "cylinder", (1.0, 1.2)),
)


def synthetic_category_dataset(n_categories: int = 10, n_instances: int = 30, n_points: int = 2000,
                               noise_sigma: float = 0.005, jitter: float = 0.03,
                               seed: int = 0) -> Dict[str, List[PointCloud]]:
    """Labelled clouds for protocol runs.

    Each instance re-samples its category's shape with dimensions jittered by up
    to ``jitter`` (relative), then applies a random rotation, translation and
    scale so the learner never sees two instances in the same pose.
    """
    if not 1 <= n_categories <= len(SYNTHETIC_CATALOG):
        raise InvalidDimension(f"n_categories must be in [1, {len(SYNTHETIC_CATALOG)}]")
    rng = np.random.default_rng(seed)
    dataset: Dict[str, List[PointCloud]] = {}
    for label, kind, dims in SYNTHETIC_CATALOG[:n_categories]:
        clouds = []
        for i in range(n_instances):
            scaled = tuple(d * (1 + rng.uniform(-jitter, jitter)) for d in dims)
            if kind == "lshape" and scaled[1] >= scaled[0]:
                scaled = dims
            cloud = generate_shape(kind, scaled, n_points, noise_sigma, int(rng.integers(2**31)))
            posed = apply_transform(cloud, RigidScaleTransform.random(rng))
            clouds.append(PointCloud(posed.points, f"{label}_{i:03d}"))
        dataset[label] = clouds
    return dataset


def save_dataset(dataset: Dict[str, List[PointCloud]], root: Union[str, os.PathLike],
                 format: str = "pcd_ascii") -> None:
    ext = {v: k for k, v in EXTENSIONS.items()}[format]
    root = Path(root)
    for label, clouds in dataset.items():
        (root / label).mkdir(parents=True, exist_ok=True)
        for i, cloud in enumerate(clouds):
            name = cloud.source_id or f"{label}_{i:03d}"
            save_cloud(cloud, root / label / f"{name}{ext}", format)
