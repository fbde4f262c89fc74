"""Core geometry: rigid transforms, surface sampling, and exact nearest neighbors.

Conventions used throughout the package:

- points are float64 numpy arrays, shape (3,) for a single point and (n, 3)
  for clouds; units are meters
- rotations are unit quaternions (w, x, y, z) with the canonical sign w >= 0,
  converted to 3x3 matrices only where a solver needs them
- a rigid transform maps p to R @ p + t and composition is applied right to
  left: apply(compose(a, b), p) == apply(a, apply(b, p))
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import EmptyCloud, EmptyMesh

_UNIT_NORM_TOL = 1e-9


def _as_vec3(value) -> np.ndarray:
    v = np.asarray(value, dtype=np.float64).reshape(3)
    return v


@dataclass(frozen=True)
class UnitQuaternion:
    """Rotation as a unit quaternion, canonicalized so w >= 0.

    Negating a quaternion leaves the rotation unchanged, so the constructor
    normalizes and flips the sign to make serialization comparisons exact.
    """

    w: float
    x: float
    y: float
    z: float

    def __post_init__(self):
        norm = math.sqrt(self.w**2 + self.x**2 + self.y**2 + self.z**2)
        if not math.isfinite(norm) or norm < 1e-12:
            raise ValueError("quaternion norm is zero or non-finite")
        w, x, y, z = self.w / norm, self.x / norm, self.y / norm, self.z / norm
        # Canonical sign: w > 0; on the w == 0 great circle use the first
        # nonzero component.
        if w < 0 or (w == 0 and (x < 0 or (x == 0 and (y < 0 or (y == 0 and z < 0))))):
            w, x, y, z = -w, -x, -y, -z
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "z", z)

    @classmethod
    def identity(cls) -> "UnitQuaternion":
        return cls(1.0, 0.0, 0.0, 0.0)

    @classmethod
    def from_axis_angle(cls, axis, angle: float) -> "UnitQuaternion":
        axis = _as_vec3(axis)
        norm = float(np.linalg.norm(axis))
        if norm < 1e-15:
            if abs(angle) > 1e-12:
                raise ValueError("rotation axis must be nonzero")
            return cls.identity()
        half = 0.5 * angle
        s = math.sin(half) / norm
        return cls(math.cos(half), axis[0] * s, axis[1] * s, axis[2] * s)

    @classmethod
    def from_matrix(cls, m) -> "UnitQuaternion":
        """Shepperd's method; stable for all rotation matrices."""
        m = np.asarray(m, dtype=np.float64).reshape(3, 3)
        tr = m[0, 0] + m[1, 1] + m[2, 2]
        if tr > 0:
            s = math.sqrt(tr + 1.0) * 2.0
            return cls((0.25 * s), (m[2, 1] - m[1, 2]) / s,
                       (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s)
        if m[0, 0] >= m[1, 1] and m[0, 0] >= m[2, 2]:
            s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
            return cls((m[2, 1] - m[1, 2]) / s, 0.25 * s,
                       (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s)
        if m[1, 1] >= m[2, 2]:
            s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
            return cls((m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s,
                       0.25 * s, (m[1, 2] + m[2, 1]) / s)
        s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
        return cls((m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s,
                   (m[1, 2] + m[2, 1]) / s, 0.25 * s)

    def to_matrix(self) -> np.ndarray:
        w, x, y, z = self.w, self.x, self.y, self.z
        return np.array([
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ])

    def multiply(self, other: "UnitQuaternion") -> "UnitQuaternion":
        """Hamilton product self * other (apply `other` first)."""
        w1, x1, y1, z1 = self.w, self.x, self.y, self.z
        w2, x2, y2, z2 = other.w, other.x, other.y, other.z
        return UnitQuaternion(
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        )

    def conjugate(self) -> "UnitQuaternion":
        return UnitQuaternion(self.w, -self.x, -self.y, -self.z)

    inverse = conjugate

    def rotate(self, v) -> np.ndarray:
        """Rotate one vector (3,) or a stack of vectors (n, 3)."""
        v = np.asarray(v, dtype=np.float64)
        if v.ndim == 1:
            return self.to_matrix() @ v
        return v @ self.to_matrix().T

    def angle(self) -> float:
        """Rotation angle in radians, in [0, pi]."""
        s = math.sqrt(self.x**2 + self.y**2 + self.z**2)
        return 2.0 * math.atan2(s, abs(self.w))

    def axis_angle(self) -> tuple[np.ndarray, float]:
        """(unit axis, angle in [0, pi]); axis is +x for the identity."""
        s = math.sqrt(self.x**2 + self.y**2 + self.z**2)
        if s < 1e-15:
            return np.array([1.0, 0.0, 0.0]), 0.0
        return np.array([self.x / s, self.y / s, self.z / s]), self.angle()

    def scaled(self, fraction: float) -> "UnitQuaternion":
        """Rotation about the same axis by fraction * angle."""
        axis, angle = self.axis_angle()
        return UnitQuaternion.from_axis_angle(axis, fraction * angle)

    def wxyz(self) -> tuple[float, float, float, float]:
        return (self.w, self.x, self.y, self.z)


def rotation_angle_between(a: UnitQuaternion, b: UnitQuaternion) -> float:
    """Geodesic angle (radians) between two rotations."""
    return a.conjugate().multiply(b).angle()


@dataclass(frozen=True)
class RigidTransform:
    """Rotation-then-translation map p -> R p + t."""

    rotation: UnitQuaternion = field(default_factory=UnitQuaternion.identity)
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        t = _as_vec3(self.translation)
        if not np.all(np.isfinite(t)):
            raise ValueError("translation must be finite")
        t.setflags(write=False)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls()

    @classmethod
    def from_rotation_about(cls, rotation: UnitQuaternion, pivot) -> "RigidTransform":
        """Rotation about an arbitrary world-space pivot point."""
        pivot = _as_vec3(pivot)
        return cls(rotation, pivot - rotation.rotate(pivot))

    def apply(self, p) -> np.ndarray:
        """Transform one point (3,) or a stack of points (n, 3)."""
        p = np.asarray(p, dtype=np.float64)
        return self.rotation.rotate(p) + self.translation

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self after other: apply(self.compose(other), p) == self(other(p))."""
        return RigidTransform(
            self.rotation.multiply(other.rotation),
            self.rotation.rotate(other.translation) + self.translation,
        )

    def inverse(self) -> "RigidTransform":
        inv_rot = self.rotation.conjugate()
        return RigidTransform(inv_rot, -inv_rot.rotate(self.translation))


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    return a.compose(b)


def apply(t: RigidTransform, p) -> np.ndarray:
    return t.apply(p)


@dataclass(frozen=True)
class PointCloud:
    """Immutable ordered point set; colors are carried but ignored by fitting."""

    points: np.ndarray
    colors: np.ndarray | None = None

    def __post_init__(self):
        pts = np.ascontiguousarray(np.asarray(self.points, dtype=np.float64))
        if pts.size == 0:
            pts = pts.reshape(0, 3)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"points must have shape (n, 3), got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("point cloud contains NaN/Inf coordinates")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if self.colors is not None:
            col = np.ascontiguousarray(np.asarray(self.colors, dtype=np.uint8))
            if col.shape != (len(pts), 3):
                raise ValueError("colors must have shape (n, 3)")
            col.setflags(write=False)
            object.__setattr__(self, "colors", col)

    def __len__(self) -> int:
        return len(self.points)

    def centroid(self) -> np.ndarray:
        if len(self.points) == 0:
            raise EmptyCloud("centroid of empty cloud")
        return self.points.mean(axis=0)

    def transformed(self, t: RigidTransform) -> "PointCloud":
        return PointCloud(t.apply(self.points), self.colors)


@dataclass(frozen=True)
class TriangleMesh:
    """Triangle soup; faces with non-positive area are dropped at creation."""

    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.vertices, dtype=np.float64))
        if v.size == 0:
            v = v.reshape(0, 3)
        f = np.ascontiguousarray(np.asarray(self.faces, dtype=np.int64))
        if f.size == 0:
            f = f.reshape(0, 3)
        if v.ndim != 2 or v.shape[1] != 3:
            raise ValueError("vertices must have shape (n, 3)")
        if f.ndim != 2 or f.shape[1] != 3:
            raise ValueError("faces must have shape (m, 3)")
        if not np.all(np.isfinite(v)):
            raise ValueError("mesh vertices contain NaN/Inf")
        if len(f) and (f.min() < 0 or f.max() >= len(v)):
            raise IndexError("face index out of range")
        areas = _face_areas(v, f)
        keep = areas > 0.0
        f = f[keep]
        v.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)

    def face_areas(self) -> np.ndarray:
        return _face_areas(self.vertices, self.faces)

    def surface_area(self) -> float:
        return float(self.face_areas().sum())


def _face_areas(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    if len(faces) == 0:
        return np.zeros(0)
    a = vertices[faces[:, 0]]
    b = vertices[faces[:, 1]]
    c = vertices[faces[:, 2]]
    return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


def merge_meshes(meshes) -> TriangleMesh:
    """Concatenate meshes into one, offsetting face indices."""
    verts, faces, offset = [], [], 0
    for m in meshes:
        verts.append(m.vertices)
        faces.append(m.faces + offset)
        offset += len(m.vertices)
    return TriangleMesh(np.vstack(verts), np.vstack(faces))


def sample_mesh(mesh: TriangleMesh, n: int, rng: np.random.Generator) -> PointCloud:
    """Draw n points on the mesh surface, area-weighted, uniform per face.

    Faces are chosen by an area-weighted categorical draw, then a point is
    placed with uniform barycentric coordinates. Deterministic given the
    generator state.
    """
    if n < 1:
        raise ValueError("sample count must be >= 1")
    if len(mesh.faces) == 0:
        raise EmptyMesh("mesh has no valid faces")
    areas = mesh.face_areas()
    cdf = np.cumsum(areas)
    cdf /= cdf[-1]
    face_idx = np.searchsorted(cdf, rng.random(n), side="right")
    face_idx = np.minimum(face_idx, len(areas) - 1)

    a = mesh.vertices[mesh.faces[face_idx, 0]]
    b = mesh.vertices[mesh.faces[face_idx, 1]]
    c = mesh.vertices[mesh.faces[face_idx, 2]]
    u = rng.random((n, 1))
    v = rng.random((n, 1))
    flip = (u + v) > 1.0
    u = np.where(flip, 1.0 - u, u)
    v = np.where(flip, 1.0 - v, v)
    return PointCloud(a + u * (b - a) + v * (c - a))


def model_diameter(cloud: PointCloud) -> float:
    """Characteristic size: diagonal of the cloud's axis-aligned bounding box."""
    if len(cloud) == 0:
        raise EmptyCloud("diameter of empty cloud")
    extent = cloud.points.max(axis=0) - cloud.points.min(axis=0)
    return float(np.linalg.norm(extent))


def random_rotation(rng: np.random.Generator) -> UnitQuaternion:
    """Uniform random rotation (Shoemake's subgroup-algorithm construction)."""
    u1, u2, u3 = rng.random(3)
    a = math.sqrt(1.0 - u1)
    b = math.sqrt(u1)
    return UnitQuaternion(
        a * math.sin(2.0 * math.pi * u2),
        a * math.cos(2.0 * math.pi * u2),
        b * math.sin(2.0 * math.pi * u3),
        b * math.cos(2.0 * math.pi * u3),
    )


class SpatialIndex:
    """Exact nearest-neighbor index over an immutable point cloud.

    Ties in distance are broken by the lowest point index, so queries are
    reproducible even on gridded data with exact equidistant points.
    """

    def __init__(self, cloud: PointCloud):
        if len(cloud) == 0:
            raise EmptyCloud("cannot index an empty cloud")
        self.cloud = cloud
        self._tree = cKDTree(cloud.points)

    def __len__(self) -> int:
        return len(self.cloud)

    def nearest(self, q) -> tuple[int, float]:
        """Index and distance of the exact nearest point to q."""
        q = _as_vec3(q)
        if len(self.cloud) == 1:
            return 0, float(np.linalg.norm(self.cloud.points[0] - q))
        dist, idx = self._tree.query(q, k=2)
        if dist[0] == dist[1]:
            return self._resolve_tie(q, float(dist[0])), float(dist[0])
        return int(idx[0]), float(dist[0])

    def _resolve_tie(self, q: np.ndarray, dist: float) -> int:
        candidates = self._tree.query_ball_point(q, dist * (1.0 + 1e-12) + 1e-300)
        d = np.linalg.norm(self.cloud.points[candidates] - q, axis=1)
        best = d.min()
        return min(int(candidates[i]) for i in range(len(candidates)) if d[i] == best)

    def query(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized nearest neighbors: (indices, distances) per query row.

        Applies the same lowest-index tie-break as nearest(); the tie path
        only triggers on exactly equal distances, so the common case stays a
        single batched k=2 query.
        """
        points = np.asarray(points, dtype=np.float64)
        if len(self.cloud) == 1:
            dist = np.linalg.norm(points - self.cloud.points[0], axis=1)
            return np.zeros(len(points), dtype=np.int64), dist
        dist, idx = self._tree.query(points, k=2)
        out_idx = idx[:, 0].astype(np.int64)
        out_dist = dist[:, 0]
        ties = np.nonzero(dist[:, 0] == dist[:, 1])[0]
        for row in ties:
            out_idx[row] = self._resolve_tie(points[row], float(dist[row, 0]))
        return out_idx, out_dist


def nearest(index: SpatialIndex, q) -> tuple[int, float]:
    return index.nearest(q)
