"""Weighted iterative-closest-point fitting with outlier rejection.

One ICP run alternates two steps until the weighted RMS residual stops
improving:

1. correspondence search: each model sample, placed at the current pose, is
   paired with its nearest scene point; pairs farther apart than the
   rejection radius (the model diameter) are rejected outright, and the
   survivors are down-weighted by w = 1 / (1 + d)
2. alignment: the rigid transform minimizing the weighted sum of squared
   pair distances is solved in closed form via the SVD of the weighted
   cross-covariance, with a determinant correction that forbids reflections

The residual reported after each accepted iteration is non-increasing; an
update that would raise the re-measured residual terminates the run at the
prior pose.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DegenerateCorrespondences, NoValidCorrespondences
from .geometry import PointCloud, RigidTransform, SpatialIndex, UnitQuaternion

DEFAULT_LIKELIHOOD_EPSILON = 1e-9

# Centered source configurations whose second singular value falls below
# this fraction of the first are treated as collinear (rotation
# underdetermined).
_COLLINEAR_RTOL = 1e-9


@dataclass(frozen=True)
class Correspondence:
    """One model-sample-to-scene pairing."""

    source: np.ndarray
    target: np.ndarray
    distance: float
    weight: float
    rejected: bool


class Correspondences:
    """Column-oriented batch of correspondences (sequence of Correspondence).

    Kept as parallel arrays so the per-iteration math stays vectorized;
    indexing materializes individual Correspondence records.
    """

    __slots__ = ("source", "target", "distance", "weight", "rejected")

    def __init__(self, source, target, distance, weight, rejected):
        self.source = source
        self.target = target
        self.distance = distance
        self.weight = weight
        self.rejected = rejected

    def __len__(self) -> int:
        return len(self.distance)

    def __getitem__(self, i: int) -> Correspondence:
        return Correspondence(
            self.source[i], self.target[i],
            float(self.distance[i]), float(self.weight[i]), bool(self.rejected[i]),
        )

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @property
    def usable(self) -> np.ndarray:
        return ~self.rejected

    def usable_count(self) -> int:
        return int(np.count_nonzero(~self.rejected))

    def weighted_rms(self) -> float:
        """sqrt(sum(w d^2) / sum(w)) over non-rejected pairs."""
        keep = ~self.rejected
        w = self.weight[keep]
        d = self.distance[keep]
        total = w.sum()
        if total <= 0.0:
            raise NoValidCorrespondences("all correspondences rejected")
        return float(np.sqrt((w * d * d).sum() / total))

    @classmethod
    def from_pairs(cls, pairs) -> "Correspondences":
        pairs = list(pairs)
        return cls(
            np.array([p.source for p in pairs], dtype=np.float64).reshape(-1, 3),
            np.array([p.target for p in pairs], dtype=np.float64).reshape(-1, 3),
            np.array([p.distance for p in pairs], dtype=np.float64),
            np.array([p.weight for p in pairs], dtype=np.float64),
            np.array([p.rejected for p in pairs], dtype=bool),
        )


@dataclass(frozen=True)
class IcpParams:
    """Termination and rejection settings for a single ICP run."""

    rejection_radius: float
    max_iterations: int = 100
    relative_residual_tolerance: float = 1e-6
    absolute_residual_floor: float = 1e-12

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.relative_residual_tolerance <= 0 or self.absolute_residual_floor <= 0:
            raise ValueError("tolerances must be positive")
        if self.rejection_radius <= 0:
            raise ValueError("rejection_radius must be positive")


@dataclass(frozen=True)
class FitResult:
    """Converged pose with its quality measures."""

    transform: RigidTransform
    weighted_residual: float
    likelihood: float
    iterations: int
    converged: bool
    restart_index: int = 0

    def with_likelihood(self, epsilon: float) -> "FitResult":
        return replace(self, likelihood=1.0 / (self.weighted_residual + epsilon))


def find_correspondences(
    model_points: PointCloud,
    pose: RigidTransform,
    scene: SpatialIndex,
    rejection_radius: float,
) -> Correspondences:
    """Pair every posed model sample with its nearest scene point.

    Distance weighting is w = 1 / (1 + d); pairs with d above the rejection
    radius get weight 0 and the rejected flag.
    """
    if len(model_points) == 0:
        raise ValueError("model_points must be non-empty")
    moved = pose.apply(model_points.points)
    idx, dist = scene.query(moved)
    rejected = dist > rejection_radius
    weight = np.where(rejected, 0.0, 1.0 / (1.0 + dist))
    return Correspondences(moved, scene.cloud.points[idx], dist, weight, rejected)


def weighted_alignment(correspondences) -> RigidTransform:
    """Closed-form weighted rigid alignment of source onto target points.

    Minimizes sum_i w_i |R p_i + t - q_i|^2 by subtracting the weighted
    centroids and taking the SVD of the weighted cross-covariance; the sign
    of the last singular vector is flipped when needed so det(R) = +1.

    Rejected pairs are filtered out before any arithmetic, so deleting them
    from the input produces a bit-identical transform.
    """
    if not isinstance(correspondences, Correspondences):
        correspondences = Correspondences.from_pairs(correspondences)
    keep = ~correspondences.rejected
    p = correspondences.source[keep]
    q = correspondences.target[keep]
    w = correspondences.weight[keep]
    if len(p) < 3:
        raise DegenerateCorrespondences(f"only {len(p)} usable pairs")

    w_sum = w.sum()
    wc = w[:, None]
    p_bar = (wc * p).sum(axis=0) / w_sum
    q_bar = (wc * q).sum(axis=0) / w_sum
    pc = p - p_bar
    qc = q - q_bar
    cov = (wc * pc).T @ qc

    u, s, vt = np.linalg.svd(cov)
    if s[1] <= s[0] * _COLLINEAR_RTOL:
        raise DegenerateCorrespondences("source points are collinear")
    d = np.sign(np.linalg.det(vt.T @ u.T))
    if d == 0:
        d = 1.0
    rot_m = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    rotation = UnitQuaternion.from_matrix(rot_m)
    translation = q_bar - rotation.rotate(p_bar)
    return RigidTransform(rotation, translation)


def _centroid_shift(correspondences: Correspondences) -> RigidTransform:
    """Translation-only fallback aligning weighted centroids."""
    keep = ~correspondences.rejected
    w = correspondences.weight[keep][:, None]
    p = correspondences.source[keep]
    q = correspondences.target[keep]
    w_sum = w.sum()
    return RigidTransform(UnitQuaternion.identity(), (w * (q - p)).sum(axis=0) / w_sum)


def alignment_objective(correspondences, transform: RigidTransform) -> float:
    """Weighted sum of squared distances at a candidate transform.

    Shared by tests and the brute-force/numerical oracles; uses only
    non-rejected pairs, like weighted_alignment itself.
    """
    if not isinstance(correspondences, Correspondences):
        correspondences = Correspondences.from_pairs(correspondences)
    keep = ~correspondences.rejected
    p = transform.apply(correspondences.source[keep])
    diff = p - correspondences.target[keep]
    return float((correspondences.weight[keep] * (diff * diff).sum(axis=1)).sum())


def run_icp(
    model_points: PointCloud,
    scene: SpatialIndex,
    init: RigidTransform,
    params: IcpParams,
) -> FitResult:
    """Single-initialization weighted ICP.

    Terminates when the relative change in weighted RMS residual drops below
    the tolerance, at the iteration cap, or as soon as a step would increase
    the re-measured residual (the prior pose is kept). Raises
    NoValidCorrespondences when every pair is rejected at the initial pose.
    """
    if len(model_points) < 3:
        raise ValueError("model must have at least 3 sample points")

    pose = init
    corrs = find_correspondences(model_points, pose, scene, params.rejection_radius)
    if corrs.usable_count() == 0:
        raise NoValidCorrespondences("no correspondences within rejection radius at init")
    residual = corrs.weighted_rms()

    iterations = 0
    converged = False
    for _ in range(params.max_iterations):
        try:
            step = weighted_alignment(corrs)
        except DegenerateCorrespondences:
            step = _centroid_shift(corrs)
        candidate = step.compose(pose)
        new_corrs = find_correspondences(
            model_points, candidate, scene, params.rejection_radius
        )
        if new_corrs.usable_count() == 0:
            break
        new_residual = new_corrs.weighted_rms()
        if new_residual > residual:
            break
        iterations += 1
        change = abs(new_residual - residual) / max(residual, params.absolute_residual_floor)
        pose, corrs, residual = candidate, new_corrs, new_residual
        if change < params.relative_residual_tolerance:
            converged = True
            break

    return FitResult(
        transform=pose,
        weighted_residual=residual,
        likelihood=1.0 / (residual + DEFAULT_LIKELIHOOD_EPSILON),
        iterations=iterations,
        converged=converged,
    )
