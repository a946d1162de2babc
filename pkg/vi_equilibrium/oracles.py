'''Brute force ground truth for checking the solvers.

Everything here is slow and exhaustive on purpose and only sized for small problems.
'''

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.optimize import linprog

from .geometry import Vector, as_vector
from .solver import hs_gap

if TYPE_CHECKING:
    from collections.abc import Callable

    from .geometry import ConvexCompactSet

logger = logging.getLogger(__name__)

MAX_GRID_DIM = 4
MAX_HULL_POINTS = 50
MAX_HULL_DIM = 6


class OracleError(Exception):
    pass


class GridTooLargeError(OracleError):
    def __init__(self, points: int, limit: int) -> None:  # noqa: D107
        super().__init__(f'grid of {points} points exceeds the limit of {limit}')
        self.points = points
        self.limit = limit


class SizeLimitError(OracleError):
    pass


@dataclass(frozen=True)
class GridSpec:
    resolution: int = 200
    max_points: int = 10**7


@dataclass(frozen=True, eq=False)
class GridResult:
    point: Vector
    residual: float
    spacing: float

    def as_dict(self) -> dict[str, Any]:
        return {
            'oracle': True,
            'point': self.point.tolist(),
            'residual': self.residual,
            'spacing': self.spacing,
        }


def grid_hs_oracle(
    domain: ConvexCompactSet,
    f: Callable[[Vector], Vector],
    grid: GridSpec | None = None,
) -> GridResult:
    '''Minimize the HS residual over every grid point of the set.

    Ties go to the lexicographically smallest point.
    '''
    grid = grid or GridSpec()
    if domain.dim > MAX_GRID_DIM:
        raise GridTooLargeError(domain.lattice_size(grid.resolution), grid.max_points)
    size = domain.lattice_size(grid.resolution)
    if size > grid.max_points:
        raise GridTooLargeError(size, grid.max_points)
    points = domain.lattice(grid.resolution)
    residuals = np.array([hs_gap(domain, p, f(p)) for p in points])
    order = np.lexsort((*points.T[::-1], residuals))
    best = order[0]
    logger.debug('Grid oracle searched %d points', points.shape[0])
    return GridResult(points[best], float(residuals[best]), domain.lattice_step(grid.resolution))


def membership_oracle(
    points: ArrayLike,
    target: ArrayLike,
    weights: ArrayLike | None = None,
    tol: float = 1e-9,
) -> bool:
    '''Whether target lies in conv(points), by a linear feasibility program.

    Minimizes the L1 slack s in P^T w + s = target over convex weights w. When weights
    are supplied they must also be convex and reproduce the target within tol.
    '''
    target = as_vector(target)
    pts: NDArray[np.float64] = np.atleast_2d(np.asarray(points, dtype=float))
    m, dim = pts.shape
    if dim != target.shape[0]:
        raise SizeLimitError(f'points have dimension {dim}, target {target.shape[0]}')
    if m > MAX_HULL_POINTS or dim > MAX_HULL_DIM:
        raise SizeLimitError(
            f'{m} points in dimension {dim}, limit {MAX_HULL_POINTS} points and N <= {MAX_HULL_DIM}'
        )

    if weights is not None:
        w = as_vector(weights, m)
        if np.any(w < -tol) or abs(float(w.sum()) - 1.0) > tol:
            return False
        if np.linalg.norm(w @ pts - target) > tol:
            return False

    # Variables are w (m), then positive and negative slack (dim each)
    cost = np.concatenate([np.zeros(m), np.ones(2 * dim)])
    equality = np.zeros((dim + 1, m + 2 * dim))
    equality[:dim, :m] = pts.T
    equality[:dim, m : m + dim] = np.eye(dim)
    equality[:dim, m + dim :] = -np.eye(dim)
    equality[dim, :m] = 1.0
    rhs = np.concatenate([target, [1.0]])
    result = linprog(cost, A_eq=equality, b_eq=rhs, bounds=(0, None), method='highs-ds')
    if not result.success:
        logger.debug('Membership LP failed: %s', result.message)
        return False
    return bool(result.fun <= tol)


@dataclass(frozen=True, eq=False)
class ContinuityReport:
    max_ratio: float
    worst_point: Vector | None
    flagged: bool
    ratio_limit: float


def continuity_probe(
    f: Callable[[Vector], Vector],
    domain: ConvexCompactSet,
    samples: int = 200,
    h: float = 1e-6,
    *,
    seed: int = 0,
    points: ArrayLike | None = None,
    ratio_limit: float = 1e3,
) -> ContinuityReport:
    '''Largest ||f(y) - f(x)|| / ||y - x|| over small random moves inside the set.

    Moves x by h in a random direction and projects back onto the set. A ratio above
    ratio_limit flags a suspected discontinuity.

    Parameters
    ----------
    f
        The map to probe
    domain
        Set the probes stay in
    samples
        Number of sampled base points, ignored when points is given
    h
        Move length, must be positive
    seed
        Seed for base points and directions
    points
        Explicit base points to probe
    ratio_limit
        Ratio above which the report is flagged
    '''
    if h <= 0:
        raise ValueError(f'h must be positive, got {h}')
    rng = np.random.default_rng(seed)
    if points is None:
        base = domain.sample(samples, rng)
    else:
        base = np.atleast_2d(np.asarray(points, dtype=float))
    worst, where = 0.0, None
    for x in base:
        d = rng.standard_normal(domain.dim)
        d /= np.linalg.norm(d)
        y = domain.project(x + h * d)
        step = float(np.linalg.norm(y - x))
        if step < h / 10:
            # Projected straight back, try the opposite direction
            y = domain.project(x - h * d)
            step = float(np.linalg.norm(y - x))
            if step < h / 10:
                continue
        ratio = float(np.linalg.norm(f(y) - f(x))) / step
        if ratio > worst:
            worst, where = ratio, x
    return ContinuityReport(worst, where, worst > ratio_limit, ratio_limit)
