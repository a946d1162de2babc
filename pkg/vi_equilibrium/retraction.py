'''Retraction of the ball-cone intersection B∩P onto the sphere slice S∩P.

For a cone that is not a linear subspace there is a unit vector a lying in the polar
cone and in -P but outside P. Pushing x away from a along the ray x + t(x - a) until it
reaches the unit sphere is continuous, stays inside P and leaves sphere points alone.
'''

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any

import numpy as np
from numpy.typing import ArrayLike

from .geometry import (
    TAU_GEO,
    PointNotInSetError,
    PolyhedralCone,
    Vector,
    as_vector,
    polar_contains,
    project_cone,
)

logger = logging.getLogger(__name__)


class RetractionError(Exception):
    pass


class SubspaceConeError(RetractionError):
    def __init__(self, cone: PolyhedralCone) -> None:  # noqa: D107
        super().__init__('cone is a linear subspace, no retraction witness exists')
        self.cone = cone


class DegenerateDirectionError(RetractionError):
    def __init__(self, point: Vector) -> None:  # noqa: D107
        super().__init__(f'point {point.tolist()} coincides with the witness')
        self.point = point


class InvalidWitnessError(RetractionError):
    def __init__(self, witness: Vector, reason: str) -> None:  # noqa: D107
        super().__init__(f'witness {witness.tolist()}: {reason}')
        self.witness = witness
        self.reason = reason


def is_subspace(cone: PolyhedralCone, tol: float = TAU_GEO) -> bool:
    '''True when -g lies in the cone for every generator g, so P = span(P).'''
    return all(cone.contains(-g, tol) for g in cone.generators)


def _check_witness(cone: PolyhedralCone, a: Vector, tol: float) -> None:
    if np.linalg.norm(a) < tol:
        raise InvalidWitnessError(a, 'must be nonzero')
    if not polar_contains(cone, a, tol):
        raise InvalidWitnessError(a, 'must lie in the polar cone')
    if not cone.contains(-a, tol):
        raise InvalidWitnessError(a, 'its negation must lie in the cone')
    if cone.contains(a, tol):
        raise InvalidWitnessError(a, 'must lie outside the cone')


def find_polar_vector(cone: PolyhedralCone, tol: float = TAU_GEO) -> Vector:
    '''Find a unit a in P° ∩ (-P) outside P.

    The first generator x (in input order) with -x outside P is projected onto -P,
    giving y, and a = y - x. Since x - y lies in the polar of -P, a is in P°, and as
    a sum of points of -P it is in -P. A nonzero vector in both P and P° would be
    orthogonal to itself, so a is outside P.
    '''
    if is_subspace(cone, tol):
        raise SubspaceConeError(cone)
    negated = cone.negated()
    for g in cone.generators:
        if negated.contains(g, tol):
            continue
        y = project_cone(negated, g).point
        a = y - g
        a /= np.linalg.norm(a)
        _check_witness(cone, a, tol)
        logger.debug('Retraction witness %s from generator %s', a, g)
        return a
    # is_subspace() returning False guarantees a generator outside -P
    raise SubspaceConeError(cone)


@dataclass(frozen=True, eq=False)
class RetractionMap:
    cone: PolyhedralCone
    a: Vector
    dim: int

    def __post_init__(self) -> None:
        if is_subspace(self.cone):
            raise SubspaceConeError(self.cone)
        object.__setattr__(self, 'a', as_vector(self.a, self.dim))
        _check_witness(self.cone, self.a, TAU_GEO)

    @classmethod
    def for_cone(cls, cone: PolyhedralCone, a: ArrayLike | None = None) -> RetractionMap:
        '''Build the retraction, using the given witness as-is or finding a unit one.'''
        if a is None:
            a = find_polar_vector(cone)
        return cls(cone, as_vector(a, cone.dim), cone.dim)

    def __call__(self, x: ArrayLike) -> Vector:
        arr = np.asarray(x, dtype=float)
        if arr.ndim == 2:
            return np.array([retract(self, row) for row in arr])
        return retract(self, arr)

    def describe(self) -> dict[str, Any]:
        return {'witness': self.a.tolist(), **self.cone.describe()}


def lambda_coefficient(r: RetractionMap, x: ArrayLike, tol: float = TAU_GEO) -> float:
    '''Nonnegative root of ||x + t(x - a)|| = 1.

    With d = x - a, b = <x, d> and c = 1 - ||x||^2 the root is
    (-b + sqrt(b^2 + c||d||^2)) / ||d||^2, evaluated in the conjugate form
    c / (b + sqrt(b^2 + c||d||^2)) when b > 0 to avoid cancellation near the sphere.
    '''
    x = as_vector(x, r.dim)
    violation = max(0.0, float(np.linalg.norm(x)) - 1.0, r.cone.violation(x))
    if violation > tol:
        raise PointNotInSetError(x, violation)
    d = x - r.a
    dd = float(d @ d)
    if np.sqrt(dd) < tol:
        raise DegenerateDirectionError(x)
    b = float(x @ d)
    c = max(0.0, 1.0 - float(x @ x))
    if c == 0.0:
        return 0.0
    root = np.sqrt(b * b + c * dd)
    if b > 0:
        return c / (b + root)
    return (root - b) / dd


def retract(r: RetractionMap, x: ArrayLike, tol: float = TAU_GEO) -> Vector:
    x = as_vector(x, r.dim)
    lam = lambda_coefficient(r, x, tol)
    return x + lam * (x - r.a)
