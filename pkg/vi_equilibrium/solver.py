'''Hartman-Stampacchia variational inequality solvers.

Given a compact convex K and a continuous f, find x in K with <v, f(x)> <= <x, f(x)>
for every v in K, that is f(x) in the normal cone of K at x. The residual
max_v <v, f(x)> - <x, f(x)> is computed exactly from the support function of K, so a
candidate is either certified or not, however it was found.
'''

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import StrEnum
from typing import TYPE_CHECKING, Any, NamedTuple

import numpy as np
from numpy.typing import ArrayLike

from .approximation import (
    ApproximationError,
    PartitionOfUnity,
    RadiusTooSmallError,
    approximate_map,
    build_covering,
)
from .geometry import (
    TAU_GEO,
    BallCapCone,
    DimensionError,
    PointNotInSetError,
    Vector,
    as_vector,
    support_max,
)

if TYPE_CHECKING:
    from collections.abc import Callable, Sequence

    from .config import SolverConfig
    from .geometry import ConvexCompactSet
    from .maps import CorrespondenceOracle, MapOracle

logger = logging.getLogger(__name__)

# Accept an extragradient step when step * ||f(y) - f(x)|| <= this * ||y - x||
LIPSCHITZ_FACTOR = 0.9
_MIN_STEP = 1e-14
# Rough number of lattice points evaluated by the grid phase
_GRID_POINTS = 5_000
_REFINE_STEPS = 7
_MIN_SPACING = 1e-13


class Method(StrEnum):
    EXTRAGRADIENT = 'extragradient'
    GRID = 'grid'
    HYBRID = 'hybrid'
    APPROXIMATION = 'approximation'
    SELECTION = 'selection'


class TracePoint(NamedTuple):
    iteration: int
    residual: float
    point: Vector


class SolverError(Exception):
    pass


class NoConvergenceError(SolverError):
    def __init__(  # noqa: D107
        self,
        message: str,
        best_point: Vector | None,
        residual: float,
        *,
        trace: Sequence[TracePoint] = (),
        stages: Sequence[Stage] = (),
    ) -> None:
        super().__init__(f'{message} (best residual {residual:.3e})')
        self.best_point = best_point
        self.residual = residual
        self.trace = tuple(trace)
        self.stages = tuple(stages)


class Check(NamedTuple):
    name: str
    value: float
    limit: float

    @property
    def passed(self) -> bool:
        return bool(self.value <= self.limit)

    @property
    def margin(self) -> float:
        return self.limit - self.value

    def as_dict(self) -> dict[str, Any]:
        return {
            'name': self.name,
            'value': self.value,
            'limit': self.limit,
            'margin': self.margin,
            'passed': self.passed,
        }


@dataclass
class CertificateReport:
    checks: list[Check] = field(default_factory=list)

    def add(self, name: str, value: float, limit: float) -> None:
        self.checks.append(Check(name, float(value), float(limit)))

    def extend(self, other: CertificateReport) -> None:
        self.checks.extend(other.checks)

    def __getitem__(self, name: str) -> Check:
        for check in self.checks:
            if check.name == name:
                return check
        raise KeyError(name)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failing(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed]

    def as_list(self) -> list[dict[str, Any]]:
        return [c.as_dict() for c in self.checks]


@dataclass(frozen=True, eq=False)
class VISolution:
    point: Vector
    value: Vector
    residual: float
    iterations: int
    trace: tuple[TracePoint, ...]
    method: Method


@dataclass(frozen=True, eq=False)
class Stage:
    epsilon: float
    point: Vector
    residual: float
    membership_gap: float
    centers: int


@dataclass(frozen=True, eq=False)
class CorrespondenceVISolution:
    point: Vector
    witness: Vector
    residual: float
    membership_gap: float
    epsilon_final: float
    method: Method
    stages: tuple[Stage, ...]


def hs_gap(
    domain: ConvexCompactSet, x: Vector, z: Vector, *, via_polar: bool = False
) -> float:
    '''max_v <v, z> - <x, z> over the set, without checking that x is in it.'''
    value, _ = support_max(domain, z, via_polar=via_polar)
    return value - float(x @ z)


def hs_residual(
    domain: ConvexCompactSet, f: Callable[[Vector], Vector], x: ArrayLike, tol: float = TAU_GEO
) -> float:
    '''Return max_v <v, f(x)> - <x, f(x)>. At most tol certifies that x solves HS.'''
    x = as_vector(x, domain.dim)
    violation = domain.violation(x)
    if violation > tol:
        raise PointNotInSetError(x, violation)
    return hs_gap(domain, x, as_vector(f(x), domain.dim))


def fixed_point_gap(
    domain: ConvexCompactSet, f: Callable[[Vector], Vector], x: ArrayLike
) -> float:
    '''||proj(x + f(x)) - x||, zero exactly at HS solutions.

    Bounded above by sqrt(residual), and the residual is at most this gap times
    (diameter + ||f(x)||).
    '''
    x = as_vector(x, domain.dim)
    return float(np.linalg.norm(domain.project(x + f(x)) - x))


class _Search:
    '''Bookkeeping shared by the phases of one HS solve.'''

    def __init__(
        self, domain: ConvexCompactSet, f: Callable[[Vector], Vector], cfg: SolverConfig
    ) -> None:
        self.domain = domain
        self.f = f
        self.cfg = cfg
        self.iterations = 0
        self.trace: list[TracePoint] = []
        self.best_point: Vector | None = None
        self.best_residual = np.inf

    def note(self, x: Vector, residual: float) -> None:
        self.trace.append(TracePoint(self.iterations, residual, x.copy()))
        if residual < self.best_residual:
            self.best_residual = residual
            self.best_point = x.copy()

    def gap(self, x: Vector) -> float:
        return hs_gap(self.domain, x, self.f(x))

    def extragradient(self, start: Vector, budget: int) -> tuple[Vector, float]:
        '''Projected extragradient with a Lipschitz backtracking test on the step.'''
        domain, f, cfg = self.domain, self.f, self.cfg
        x = domain.project(start)
        fx = f(x)
        gamma = cfg.step
        for _ in range(budget):
            residual = hs_gap(domain, x, fx)
            self.note(x, residual)
            if residual <= cfg.tol:
                return x, residual
            while True:
                y = domain.project(x + gamma * fx)
                fy = f(y)
                lipschitz_ok = gamma * np.linalg.norm(fy - fx) <= LIPSCHITZ_FACTOR * np.linalg.norm(
                    y - x
                )
                if lipschitz_ok or gamma < _MIN_STEP:
                    break
                gamma *= cfg.backtrack
            nxt = domain.project(x + gamma * fy)
            self.iterations += 1
            if np.linalg.norm(nxt - x) <= 1e-16 * (1.0 + np.linalg.norm(x)):
                break
            x = nxt
            fx = f(x)
            gamma = min(cfg.step, gamma / cfg.backtrack)
        residual = hs_gap(domain, x, fx)
        self.note(x, residual)
        return x, residual

    def grid(self) -> tuple[Vector, float]:
        '''Best lattice point, then repeated local refinement around it.'''
        domain, cfg = self.domain, self.cfg
        resolution = 2
        while domain.lattice_size(resolution * 2) <= _GRID_POINTS:
            resolution *= 2
        points = domain.lattice(resolution)
        residuals = np.array([self.gap(p) for p in points])
        best = int(np.argmin(residuals))
        x, residual = points[best], float(residuals[best])
        self.note(x, residual)

        axis = np.linspace(-1.0, 1.0, _REFINE_STEPS)
        mesh = np.meshgrid(*([axis] * domain.dim), indexing='ij')
        offsets = np.stack([m.ravel() for m in mesh], axis=1)
        spacing = domain.lattice_step(resolution)
        while residual > cfg.tol and spacing > _MIN_SPACING:
            candidates = [domain.project(x + spacing * o) for o in offsets]
            values = [self.gap(c) for c in candidates]
            i = int(np.argmin(values))
            if values[i] < residual:
                x, residual = candidates[i], float(values[i])
            spacing /= 3.0
            self.iterations += 1
            self.note(x, residual)
        return x, residual

    def solution(self, x: Vector, method: Method) -> VISolution:
        value = as_vector(self.f(x), self.domain.dim)
        residual = hs_gap(self.domain, x, value)
        return VISolution(x, value, residual, self.iterations, tuple(self.trace), method)


def solve_hs(
    domain: ConvexCompactSet,
    f: MapOracle,
    cfg: SolverConfig,
    *,
    start: ArrayLike | None = None,
) -> VISolution:
    '''Find x in the set with f(x) in its normal cone.

    Extragradient runs from the optional start, the set's center and seeded random
    points, splitting cfg.max_iter between them. Every start runs; among the ones that
    certify the lowest residual wins, ties going to the earlier start. If none does and
    the dimension is cfg.grid_fallback_dim or lower, a grid search with local
    refinement follows, polished by one more extragradient run.

    Parameters
    ----------
    domain
        Compact convex feasible set
    f
        The continuous map
    cfg
        Solver settings, cfg.tol is the certification target
    start
        Optional warm start, tried first
    '''
    if f.dim != domain.dim:
        raise DimensionError(domain.dim, f.dim)
    search = _Search(domain, f, cfg)
    rng = np.random.default_rng(cfg.seed)
    starts = [] if start is None else [as_vector(start, domain.dim)]
    starts.append(domain.center())
    starts.extend(domain.sample(max(0, cfg.restarts - 1), rng))
    budget = max(1, cfg.max_iter // len(starts))

    certified: list[tuple[float, int, Vector]] = []
    for index, x0 in enumerate(starts):
        x, residual = search.extragradient(x0, budget)
        logger.debug('Start %d ended at residual %.3e', index, residual)
        if residual <= cfg.tol:
            certified.append((residual, index, x))
    if certified:
        _, index, x = min(certified, key=lambda c: (c[0], c[1]))
        logger.debug('Start %d wins', index)
        return search.solution(x, Method.EXTRAGRADIENT)

    if domain.dim <= cfg.grid_fallback_dim:
        logger.info(
            'Extragradient stalled at residual %.3e, falling back to grid search',
            search.best_residual,
        )
        x, residual = search.grid()
        if residual <= cfg.tol:
            return search.solution(x, Method.GRID)
        x, residual = search.extragradient(x, budget)
        if residual <= cfg.tol:
            return search.solution(x, Method.HYBRID)

    raise NoConvergenceError(
        'HS solve did not certify',
        search.best_point,
        float(search.best_residual),
        trace=search.trace,
    )


def solve_hs_correspondence(
    domain: ConvexCompactSet,
    zeta: CorrespondenceOracle,
    cfg: SolverConfig,
) -> CorrespondenceVISolution:
    '''Find x and z in zeta(x) with <v, z> <= <x, z> for every v in the set.

    Stage k covers the set at radius epsilon0 * decay**k, solves HS for the
    continuous approximation built on that covering and takes z as the projection of
    the approximation's value onto zeta(x). If that pair does not certify at 10 * tol
    and cfg.polish is set, the weights of z define a continuous selection of zeta whose
    own HS solution is tried. Stages end when the covering gets too fine.
    '''
    if zeta.dim != domain.dim:
        raise DimensionError(domain.dim, zeta.dim)
    limit = 10 * cfg.tol
    stage_cfg = cfg.merged(max_iter=cfg.stage_max_iter)
    stages: list[Stage] = []
    previous: Vector | None = None
    best: tuple[float, Vector] | None = None

    for k in range(cfg.max_stages):
        epsilon = cfg.epsilon0 * cfg.decay**k
        try:
            covering = build_covering(
                domain, epsilon, cfg.seed + k, cap=cfg.covering_cap, probes=cfg.probes
            )
        except RadiusTooSmallError as e:
            logger.info('Approximation schedule ends at stage %d: %s', k, e)
            break
        approx = approximate_map(zeta, PartitionOfUnity(covering), cfg.seed + k)
        try:
            x = solve_hs(domain, approx.as_oracle(), stage_cfg, start=previous).point
        except NoConvergenceError as e:
            if e.best_point is None:
                continue
            x = e.best_point
        except ApproximationError as e:
            logger.warning('Stage %d at radius %.3e failed: %s', k, epsilon, e)
            continue

        nearest = zeta.nearest(x, approx(x))
        z = nearest.point
        residual = hs_gap(domain, x, z)
        membership = zeta.distance(x, z)
        stages.append(Stage(epsilon, x, residual, membership, len(covering)))
        logger.debug('Stage %d radius %.3e residual %.3e', k, epsilon, residual)
        if best is None or residual < best[0]:
            best = (residual, x)
        if residual <= limit and membership <= limit:
            return CorrespondenceVISolution(
                x, z, residual, membership, epsilon, Method.APPROXIMATION, tuple(stages)
            )

        if cfg.polish:
            selection = zeta.selection(nearest.weights)
            try:
                polished = solve_hs(domain, selection, stage_cfg, start=x)
            except NoConvergenceError:
                logger.debug('Selection polish at stage %d did not certify', k)
            else:
                z = polished.value
                residual = hs_gap(domain, polished.point, z)
                membership = zeta.distance(polished.point, z)
                if residual <= limit and membership <= limit:
                    return CorrespondenceVISolution(
                        polished.point,
                        z,
                        residual,
                        membership,
                        epsilon,
                        Method.SELECTION,
                        tuple(stages),
                    )
        previous = x

    raise NoConvergenceError(
        'correspondence HS solve did not certify',
        None if best is None else best[1],
        np.inf if best is None else best[0],
        stages=stages,
    )


def verify_hs(
    domain: ConvexCompactSet,
    x: ArrayLike,
    *,
    f: MapOracle | None = None,
    z: ArrayLike | None = None,
    zeta: CorrespondenceOracle | None = None,
    tol: float,
) -> CertificateReport:
    '''Recheck an HS candidate from scratch.

    Either f or the witness z must be given. With zeta, z is also checked to lie in
    zeta(x). Ball-cone sets get a second residual computed through the polar cone.
    '''
    x = as_vector(x, domain.dim)
    if z is None:
        if f is None:
            raise ValueError('verify_hs needs either f or a witness z')
        z = f(x)
    z = as_vector(z, domain.dim)
    report = CertificateReport()
    report.add('in_set', domain.violation(x), TAU_GEO)
    report.add('hs_residual', hs_gap(domain, x, z), tol)
    if isinstance(domain, BallCapCone):
        report.add('hs_residual_polar', hs_gap(domain, x, z, via_polar=True), tol)
    if zeta is not None:
        report.add('membership_gap', zeta.distance(x, z), tol)
    return report
