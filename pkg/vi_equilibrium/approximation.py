'''Continuous approximation of polytope valued correspondences.

A finite covering of the domain by balls of radius r, hat functions subordinated to
it, and one selection per ball center give a continuous map whose value at x is a
convex combination of values of the correspondence at centers within r of x. The
Carathéodory reduction trims any such combination to at most N+1 terms.
'''

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.spatial import cKDTree

from .geometry import TAU_GEO, PointNotInSetError, Vector, as_vector
from .maps import MapOracle

if TYPE_CHECKING:
    from .geometry import ConvexCompactSet
    from .maps import CorrespondenceOracle

logger = logging.getLogger(__name__)

DEFAULT_PROBES = 10_000
DEFAULT_CAP = 100_000
# Independent points used to estimate how finely the probes fill the set
_FILL_CHECKS = 2_000


class ApproximationError(Exception):
    pass


class RadiusTooSmallError(ApproximationError):
    def __init__(self, radius: float, reason: str) -> None:  # noqa: D107
        super().__init__(f'radius {radius:.3e}: {reason}')
        self.radius = radius
        self.reason = reason


class UncoveredPointError(ApproximationError):
    def __init__(self, point: Vector) -> None:  # noqa: D107
        super().__init__(f'{point.tolist()} is not within the radius of any center')
        self.point = point


class InvalidWeightsError(ApproximationError):
    pass


@dataclass(frozen=True, eq=False)
class Covering:
    centers: NDArray[np.float64]
    radius: float
    domain: ConvexCompactSet

    def __len__(self) -> int:
        return int(self.centers.shape[0])


def build_covering(
    domain: ConvexCompactSet,
    radius: float,
    seed: int,
    *,
    cap: int = DEFAULT_CAP,
    probes: int = DEFAULT_PROBES,
) -> Covering:
    '''Greedy farthest-point covering of the set by balls of the given radius.

    Starting from the set's center, the probe point farthest from every center
    becomes the next center until all probes are within the radius less 1.5 times
    the estimated fill distance of the probes. A second seeded sample measures that
    fill distance, so points between probes are covered too.

    Parameters
    ----------
    domain
        The set to cover
    radius
        Ball radius r > 0
    seed
        Seed for the probe sample
    cap
        Most centers allowed before giving up
    probes
        Number of probe points
    '''
    if radius <= 0:
        raise RadiusTooSmallError(radius, 'must be positive')
    rng = np.random.default_rng(seed)
    points = domain.sample(probes, rng)
    checks = domain.sample(_FILL_CHECKS, rng)
    fill = float(np.max(cKDTree(points).query(checks)[0]))
    target = radius - 1.5 * fill
    if target <= 0:
        raise RadiusTooSmallError(radius, f'below the probe fill distance {fill:.3e}')

    centers = [domain.center()]
    dist = np.linalg.norm(points - centers[0], axis=1)
    while dist.max() > target:
        if len(centers) >= cap:
            raise RadiusTooSmallError(radius, f'covering needs more than {cap} centers')
        far = int(np.argmax(dist))
        centers.append(points[far])
        dist = np.minimum(dist, np.linalg.norm(points - points[far], axis=1))
    logger.debug('Covering radius %.3e uses %d centers (fill %.2e)', radius, len(centers), fill)
    return Covering(np.array(centers), radius, domain)


@dataclass(frozen=True, eq=False)
class PartitionOfUnity:
    '''Hat functions max(0, r - ||x - x_i||), normalized to sum to one.'''

    covering: Covering
    _tree: cKDTree = field(init=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, '_tree', cKDTree(self.covering.centers))

    def weights(self, x: ArrayLike) -> Vector:
        return partition_weights(self, x)


def partition_weights(pu: PartitionOfUnity, x: ArrayLike, tol: float = TAU_GEO) -> Vector:
    covering = pu.covering
    x = as_vector(x, covering.domain.dim)
    violation = covering.domain.violation(x)
    if violation > tol:
        raise PointNotInSetError(x, violation)
    near = np.asarray(pu._tree.query_ball_point(x, covering.radius), dtype=int)  # noqa: SLF001
    raw = np.zeros(len(covering))
    if near.size:
        dist = np.linalg.norm(covering.centers[near] - x, axis=1)
        raw[near] = np.maximum(0.0, covering.radius - dist)
    total = raw.sum()
    if total <= 0:
        raise UncoveredPointError(x)
    return raw / total


@dataclass(frozen=True, eq=False)
class CaratheodoryDecomposition:
    points: NDArray[np.float64]
    weights: Vector

    @property
    def target(self) -> Vector:
        return self.weights @ self.points

    def __len__(self) -> int:
        return int(self.points.shape[0])


def caratheodory_reduce(
    points: ArrayLike, weights: ArrayLike, tol: float = 1e-15
) -> CaratheodoryDecomposition:
    '''Rewrite a convex combination using at most N+1 of its points.

    While more than N+1 points carry weight they are affinely dependent: some v with
    sum(v) = 0 has sum(v_i p_i) = 0. Moving the weights along -v until the first one
    hits zero keeps the combination's value and drops that point.
    '''
    pts = np.asarray(points, dtype=float)
    w = np.asarray(weights, dtype=float)
    if pts.ndim != 2 or w.ndim != 1 or pts.shape[0] != w.shape[0] or pts.shape[0] == 0:
        raise InvalidWeightsError('need one weight per point and at least one point')
    if not (np.all(np.isfinite(pts)) and np.all(np.isfinite(w))):
        raise InvalidWeightsError('points and weights must be finite')
    if np.any(w < -tol) or abs(float(w.sum()) - 1.0) > 1e-9:
        raise InvalidWeightsError(f'weights must be nonnegative and sum to 1, got {w.sum()}')

    keep = w > tol
    pts, w = pts[keep], w[keep]
    dim = pts.shape[1]
    while pts.shape[0] > dim + 1:
        affine = np.vstack([pts.T, np.ones(pts.shape[0])])
        v = np.linalg.svd(affine)[2][-1]
        if not np.any(v > 0):
            v = -v
        pos = v > 0
        ratios = np.full(v.shape, np.inf)
        ratios[pos] = w[pos] / v[pos]
        drop = int(np.argmin(ratios))
        w = w - ratios[drop] * v
        w[drop] = 0.0
        keep = w > tol
        pts, w = pts[keep], w[keep]
    return CaratheodoryDecomposition(pts, w / w.sum())


@dataclass(frozen=True, eq=False)
class ApproxMap:
    '''x -> sum_i alpha_i(x) y_i for selections y_i in the correspondence at center i.'''

    partition: PartitionOfUnity
    selections: NDArray[np.float64]

    def __call__(self, x: ArrayLike) -> Vector:
        return self.partition.weights(x) @ self.selections

    @property
    def radius(self) -> float:
        return self.partition.covering.radius

    def representation(self, x: ArrayLike) -> CaratheodoryDecomposition:
        '''The value at x as a combination of at most N+1 selections near x.'''
        alpha = self.partition.weights(x)
        used = alpha > 0
        return caratheodory_reduce(self.selections[used], alpha[used])

    def as_oracle(self) -> MapOracle:
        covering = self.partition.covering
        return MapOracle(
            covering.domain.dim,
            self,
            {'kind': 'approximation', 'radius': covering.radius, 'centers': len(covering)},
        )


def approximate_map(
    zeta: CorrespondenceOracle, pu: PartitionOfUnity, seed: int
) -> ApproxMap:
    '''Fix one selection per center, a seeded random convex combination of branches.'''
    centers = pu.covering.centers
    if centers.shape[1] != zeta.dim:
        raise ValueError(f'covering dimension {centers.shape[1]} != correspondence {zeta.dim}')
    rng = np.random.default_rng(seed)
    selections = np.empty_like(centers)
    for i, c in enumerate(centers):
        values = zeta.branch_values(c)
        selections[i] = rng.dirichlet(np.ones(values.shape[0])) @ values
    return ApproxMap(pu, selections)


def correspondence_distance(zeta: CorrespondenceOracle, x: ArrayLike, z: ArrayLike) -> float:
    return zeta.distance(x, z)
