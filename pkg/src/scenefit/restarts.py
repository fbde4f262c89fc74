"""Random-restart global search around a user-selected anchor point.

ICP converges to whatever local minimum its initialization leads to, so the
search runs many initializations: restart 0 is the canonical start (identity
rotation, model centroid placed exactly at the anchor, preserving the user's
intent), and every further restart draws a uniform random orientation plus a
translation offset uniform in the ball whose radius is the model diameter.

Each restart's randomness is derived from hash(seed, restart_index), which
makes the restart list for count n a prefix of the list for count n+1 and
lets restarts run on a worker pool without changing the result.
"""

from __future__ import annotations

from dataclasses import dataclass
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .errors import AllRestartsFailed, NoValidCorrespondences
from .geometry import PointCloud, RigidTransform, SpatialIndex, random_rotation
from .icp import FitResult, IcpParams, run_icp
from .seeding import derive_rng


@dataclass(frozen=True)
class RestartParams:
    """Search breadth, translation bound, and the seed all restarts hash from."""

    translation_radius: float
    seed: int
    restart_count: int = 32
    epsilon: float = 1e-9

    def __post_init__(self):
        if self.restart_count < 1:
            raise ValueError("restart_count must be >= 1")
        if self.translation_radius <= 0:
            raise ValueError("translation_radius must be positive")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")


@dataclass(frozen=True)
class RankedFit:
    model_id: str
    fit: FitResult


def _uniform_in_ball(rng: np.random.Generator, radius: float) -> np.ndarray:
    direction = rng.normal(size=3)
    norm = np.linalg.norm(direction)
    while norm < 1e-12:
        direction = rng.normal(size=3)
        norm = np.linalg.norm(direction)
    r = radius * rng.random() ** (1.0 / 3.0)
    return direction * (r / norm)


def generate_initializations(
    anchor,
    params: RestartParams,
    model_centroid,
) -> list[RigidTransform]:
    """Initial poses placing the model centroid at the anchor plus an offset.

    Restart 0 keeps the identity rotation and zero offset so a well-placed
    click can succeed without any search.
    """
    anchor = np.asarray(anchor, dtype=np.float64).reshape(3)
    centroid = np.asarray(model_centroid, dtype=np.float64).reshape(3)
    inits = []
    for i in range(params.restart_count):
        if i == 0:
            inits.append(RigidTransform(translation=anchor - centroid))
            continue
        rng = derive_rng(params.seed, "restart", i)
        rotation = random_rotation(rng)
        offset = _uniform_in_ball(rng, params.translation_radius)
        translation = anchor + offset - rotation.rotate(centroid)
        inits.append(RigidTransform(rotation, translation))
    return inits


def fit_with_restarts(
    model_points: PointCloud,
    scene: SpatialIndex,
    anchor,
    icp: IcpParams,
    restarts: RestartParams,
    workers: int = 1,
) -> list[FitResult]:
    """Run ICP from every restart and rank the outcomes.

    Returns one FitResult per restart that produced valid correspondences,
    sorted by likelihood descending with ties broken by lower restart index.
    The sorted output is identical for any worker count because every
    restart is independently seeded and the merge order is fixed.
    """
    inits = generate_initializations(anchor, restarts, model_points.centroid())

    def attempt(item: tuple[int, RigidTransform]) -> FitResult | None:
        index, init = item
        try:
            fit = run_icp(model_points, scene, init, icp)
        except NoValidCorrespondences:
            return None
        fit = FitResult(
            transform=fit.transform,
            weighted_residual=fit.weighted_residual,
            likelihood=1.0 / (fit.weighted_residual + restarts.epsilon),
            iterations=fit.iterations,
            converged=fit.converged,
            restart_index=index,
        )
        return fit

    items = list(enumerate(inits))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(attempt, items))
    else:
        outcomes = [attempt(item) for item in items]

    fits = [f for f in outcomes if f is not None]
    if not fits:
        raise AllRestartsFailed(
            f"all {restarts.restart_count} restarts produced no valid correspondences"
        )
    fits.sort(key=lambda f: (-f.likelihood, f.restart_index))
    return fits
