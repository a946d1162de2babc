from __future__ import annotations

import logging
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .geometry import (
    TAU_GEO,
    DimensionError,
    PolytopeProjection,
    Vector,
    as_vector,
    project_polytope,
)

if TYPE_CHECKING:
    from .geometry import ConvexCompactSet
    from .retraction import RetractionMap

logger = logging.getLogger(__name__)

# Prices below this are raised to it before evaluating demand
PRICE_FLOOR = 1e-7


@dataclass(frozen=True, eq=False)
class MapOracle:
    '''A continuous map R^N -> R^N with a description of where it came from.'''

    dim: int
    evaluator: Callable[[Vector], ArrayLike]
    descriptor: Mapping[str, Any] = field(default_factory=dict)

    def __call__(self, x: ArrayLike) -> Vector:
        x = as_vector(x, self.dim)
        return as_vector(self.evaluator(x), self.dim)

    @classmethod
    def affine(
        cls, matrix: ArrayLike, offset: ArrayLike, project_onto: ConvexCompactSet | None = None
    ) -> MapOracle:
        '''x -> A x + b, optionally followed by projection onto a set.'''
        a = np.asarray(matrix, dtype=float)
        b = as_vector(offset)
        if a.shape != (b.shape[0], b.shape[0]):
            raise DimensionError(f'{b.shape[0]}x{b.shape[0]}', f'{a.shape}')
        descriptor = {'kind': 'affine', 'A': a.tolist(), 'b': b.tolist()}
        if project_onto is None:
            return cls(b.shape[0], lambda x: a @ x + b, descriptor)
        descriptor['project'] = True
        return cls(b.shape[0], lambda x: project_onto.project(a @ x + b), descriptor)

    @classmethod
    def polynomial(cls, dim: int, terms: Sequence[Mapping[str, ArrayLike]]) -> MapOracle:
        '''Sum of coef * prod(x_i ** powers_i) over the terms.'''
        coefs = np.array([as_vector(t['coef'], dim) for t in terms]).reshape(-1, dim)
        powers = np.array([np.asarray(t['powers'], dtype=int) for t in terms]).reshape(-1, dim)
        if np.any(powers < 0):
            raise ValueError('polynomial powers must be nonnegative')

        def evaluate(x: Vector) -> Vector:
            monomials = np.prod(x[None, :] ** powers, axis=1)
            return monomials @ coefs

        descriptor = {
            'kind': 'polynomial',
            'terms': [
                {'coef': c.tolist(), 'powers': p.tolist()}
                for c, p in zip(coefs, powers, strict=True)
            ],
        }
        return cls(dim, evaluate, descriptor)

    @classmethod
    def neg_identity(cls, dim: int) -> MapOracle:
        return cls(dim, lambda x: -x, {'kind': 'neg-identity'})

    @classmethod
    def rotation(cls) -> MapOracle:
        '''The quarter turn field (x1, x2) -> (-x2, x1).'''
        return cls(2, lambda x: np.array([-x[1], x[0]]), {'kind': 'rotation'})

    @classmethod
    def constant(cls, value: ArrayLike) -> MapOracle:
        c = as_vector(value)
        return cls(c.shape[0], lambda _: c, {'kind': 'constant', 'value': c.tolist()})

    @classmethod
    def ramp(cls, high: float, low: float, start: float, stop: float) -> MapOracle:
        '''Piecewise linear step on the 2-simplex read as an interval through p[0].

        p[0] <= start maps to (high, 1 - high), p[0] >= stop maps to (low, 1 - low)
        and the values in between are interpolated.
        '''
        if not stop > start:
            raise ValueError(f'ramp needs start < stop, got {start} and {stop}')

        def evaluate(p: Vector) -> Vector:
            t = min(1.0, max(0.0, (p[0] - start) / (stop - start)))
            v = high + t * (low - high)
            return np.array([v, 1.0 - v])

        descriptor = {'kind': 'ramp', 'high': high, 'low': low, 'start': start, 'stop': stop}
        return cls(2, evaluate, descriptor)

    def compose(self, inner: RetractionMap) -> MapOracle:
        '''self ∘ inner.'''
        return MapOracle(
            self.dim,
            lambda x: self(inner(x)),
            {'kind': 'composed', 'outer': dict(self.descriptor), 'inner': inner.describe()},
        )

    def displacement(self) -> MapOracle:
        '''x -> f(x) - x, whose HS solutions are the fixed points of f.'''
        return MapOracle(
            self.dim,
            lambda x: self(x) - x,
            {'kind': 'displacement', 'of': dict(self.descriptor)},
        )


@dataclass(frozen=True, eq=False)
class CobbDouglasEconomy:
    '''Exchange economy whose agents have Cobb-Douglas utilities.

    Agent i spends share alpha_ij of the value of its endowment w_i on good j, so its
    demand is alpha_ij <p, w_i> / p_j. Demand has a pole at p_j = 0, prices are
    raised to the floor first so the excess demand is defined on the whole simplex.
    '''

    shares: NDArray[np.float64]
    endowments: NDArray[np.float64]
    floor: float = PRICE_FLOOR

    def __post_init__(self) -> None:
        shares = np.atleast_2d(np.asarray(self.shares, dtype=float))
        endowments = np.atleast_2d(np.asarray(self.endowments, dtype=float))
        if shares.shape != endowments.shape:
            raise DimensionError(f'{shares.shape}', f'{endowments.shape}')
        object.__setattr__(self, 'shares', shares)
        object.__setattr__(self, 'endowments', endowments)

    @property
    def dim(self) -> int:
        return int(self.shares.shape[1])

    def excess_demand(self, p: Vector) -> Vector:
        q = np.maximum(p, self.floor)
        income = self.endowments @ q
        demand = self.shares * income[:, None] / q[None, :]
        return np.sum(demand, axis=0) - np.sum(self.endowments, axis=0)

    def as_oracle(self) -> MapOracle:
        descriptor = {
            'kind': 'economy',
            'agents': [
                {'shares': s.tolist(), 'endowment': w.tolist()}
                for s, w in zip(self.shares, self.endowments, strict=True)
            ],
            'floor': self.floor,
        }
        return MapOracle(self.dim, self.excess_demand, descriptor)


@dataclass(frozen=True, eq=False)
class CorrespondenceOracle:
    '''Set valued map x -> conv{f_1(x), ..., f_J(x)} with continuous branches.

    Parameters
    ----------
    dim
        Dimension of the domain and of the values
    branches
        The continuous maps whose values span each polytope
    walras_filtered
        Keep only branch values z with <x, z> <= 0, the weak form restriction of an
        excess demand. Ties are kept. When no branch survives all are used.
    '''

    dim: int
    branches: tuple[MapOracle, ...]
    walras_filtered: bool = False

    def __post_init__(self) -> None:
        if not self.branches:
            raise ValueError('a correspondence needs at least one branch')
        for branch in self.branches:
            if branch.dim != self.dim:
                raise DimensionError(self.dim, branch.dim)
        object.__setattr__(self, 'branches', tuple(self.branches))

    @classmethod
    def from_map(cls, f: MapOracle) -> CorrespondenceOracle:
        return cls(f.dim, (f,))

    @property
    def descriptor(self) -> dict[str, Any]:
        return {
            'branches': [dict(b.descriptor) for b in self.branches],
            'weak_form': self.walras_filtered,
        }

    def filtered(self) -> CorrespondenceOracle:
        return CorrespondenceOracle(self.dim, self.branches, walras_filtered=True)

    def all_values(self, x: ArrayLike) -> NDArray[np.float64]:
        x = as_vector(x, self.dim)
        return np.array([b(x) for b in self.branches])

    def _mask(self, x: Vector, values: NDArray[np.float64]) -> NDArray[np.bool_]:
        if not self.walras_filtered:
            return np.ones(values.shape[0], dtype=bool)
        keep = values @ x <= TAU_GEO
        if not np.any(keep):
            logger.debug('No branch satisfies the weak form at %s, keeping all', x)
            return np.ones(values.shape[0], dtype=bool)
        return keep

    def branch_values(self, x: ArrayLike) -> NDArray[np.float64]:
        '''Vertices spanning the value at x, after the weak form filter if enabled.'''
        x = as_vector(x, self.dim)
        values = self.all_values(x)
        return values[self._mask(x, values)]

    def nearest(self, x: ArrayLike, z: ArrayLike) -> PolytopeProjection:
        '''Project z onto the value at x, weights indexed by branch.'''
        x = as_vector(x, self.dim)
        values = self.all_values(x)
        mask = self._mask(x, values)
        found = project_polytope(values[mask], as_vector(z, self.dim))
        weights = np.zeros(values.shape[0])
        weights[mask] = found.weights
        return PolytopeProjection(found.point, weights, found.distance)

    def distance(self, x: ArrayLike, z: ArrayLike) -> float:
        return self.nearest(x, z).distance

    def selection(self, weights: ArrayLike) -> MapOracle:
        '''The continuous selection x -> sum_j mu_j f_j(x) for fixed convex weights mu.'''
        mu = as_vector(weights, len(self.branches))
        if np.any(mu < -1e-12) or abs(float(mu.sum()) - 1.0) > 1e-9:
            raise ValueError(f'selection weights must be convex, got {mu.tolist()}')
        mu = np.clip(mu, 0.0, None)
        mu /= mu.sum()
        used = [(m, b) for m, b in zip(mu, self.branches, strict=True) if m > 0]

        def evaluate(x: Vector) -> Vector:
            return sum((m * b(x) for m, b in used), start=np.zeros(self.dim))

        return MapOracle(
            self.dim, evaluate, {'kind': 'selection', 'weights': mu.tolist(), **self.descriptor}
        )

    def compose(self, inner: RetractionMap) -> CorrespondenceOracle:
        return CorrespondenceOracle(
            self.dim, tuple(b.compose(inner) for b in self.branches), self.walras_filtered
        )
