from __future__ import annotations

import logging
from abc import ABCMeta, abstractmethod
from dataclasses import dataclass
from itertools import combinations
from math import comb
from typing import Any, NamedTuple, TypeAlias

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.linalg import null_space, orth
from scipy.optimize import nnls

logger = logging.getLogger(__name__)

Vector: TypeAlias = NDArray[np.float64]

TAU_GEO = 1e-9
# Facet enumeration enumerates (m choose d-1) candidate facets, so keep it at desk scale
MAX_CONE_DIM = 6


class GeometryError(Exception):
    pass


class DimensionError(GeometryError):
    def __init__(self, expect: int | str, actual: int | str) -> None:  # noqa: D107
        super().__init__(f'expected dimension {expect}, got {actual}')
        self.expect = expect
        self.actual = actual


class NonFiniteError(GeometryError):
    def __init__(self, value: ArrayLike) -> None:  # noqa: D107
        super().__init__(f'non-finite entries in {value}')
        self.value = value


class PointNotInSetError(GeometryError):
    def __init__(self, point: Vector, violation: float) -> None:  # noqa: D107
        super().__init__(f'{point.tolist()} lies outside the set by {violation:.3e}')
        self.point = point
        self.violation = violation


class ConeError(GeometryError):
    pass


def as_vector(value: ArrayLike, dim: int | None = None) -> Vector:
    '''Convert to a finite 1-D float array, optionally checking its length.'''
    arr = np.asarray(value, dtype=float)
    if arr.ndim != 1:
        raise DimensionError('a 1-D vector', f'shape {arr.shape}')
    if dim is not None and arr.shape[0] != dim:
        raise DimensionError(dim, arr.shape[0])
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(value)
    return arr


def _as_rows(value: ArrayLike, dim: int) -> NDArray[np.float64]:
    arr = np.asarray(value, dtype=float)
    if arr.size == 0:
        return np.zeros((0, dim))
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise DimensionError(dim, f'rows of shape {arr.shape}')
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(value)
    return arr


class ProjectionResult(NamedTuple):
    point: Vector
    distance: float


class PolytopeProjection(NamedTuple):
    point: Vector
    weights: Vector
    distance: float


def _null_basis(rows: NDArray[np.float64], dim: int) -> NDArray[np.float64]:
    if rows.shape[0] == 0:
        return np.eye(dim)
    return null_space(rows)


def _unique_rows(rows: list[Vector], tol: float = 1e-7) -> NDArray[np.float64]:
    kept: list[Vector] = []
    for row in rows:
        if not any(np.linalg.norm(row - k) < tol for k in kept):
            kept.append(row)
    return np.array(kept)


@dataclass(frozen=True, eq=False)
class PolyhedralCone:
    '''A finitely generated closed convex cone with vertex at the origin.

    Carries both descriptions: P = cone(generators) = {x : <h, x> <= 0 for h in halfspaces}.
    Rows of both arrays are unit length. Use from_generators() to build one, the
    halfspaces are derived from the generators.
    '''

    dim: int
    generators: NDArray[np.float64]
    halfspaces: NDArray[np.float64]

    @classmethod
    def from_generators(
        cls, generators: ArrayLike, dim: int | None = None, *, seed: int = 0
    ) -> PolyhedralCone:
        '''Build a cone from its generators, enumerating facets for the halfspaces.

        Parameters
        ----------
        generators
            m x N array of nonzero generators. An empty list is the cone {0}.
        dim
            Ambient dimension, required when generators is empty.
        seed
            Seed for the random rays that cross-check the two descriptions.
        '''
        raw = np.asarray(generators, dtype=float)
        if dim is None:
            if raw.ndim != 2 or raw.shape[0] == 0:
                raise ConeError('dimension is required for an empty generator list')
            dim = raw.shape[1]
        if dim < 1:
            raise DimensionError('at least 1', dim)
        if dim > MAX_CONE_DIM:
            raise ConeError(f'halfspace derivation supports N <= {MAX_CONE_DIM}, got {dim}')
        gens = _as_rows(raw, dim)
        norms = np.linalg.norm(gens, axis=1)
        if np.any(norms < TAU_GEO):
            raise ConeError('generators must be nonzero')
        gens = _unique_rows(list(gens / norms[:, None]), tol=1e-12).reshape(-1, dim)

        if gens.shape[0] == 0:
            eye = np.eye(dim)
            cone = cls(dim, gens, np.vstack([eye, -eye]))
        else:
            cone = cls(dim, gens, _enumerate_facets(gens, dim))
        cone.cross_check(seed=seed)
        return cone

    def contains(self, z: ArrayLike, tol: float = TAU_GEO) -> bool:
        z = as_vector(z, self.dim)
        return self.violation(z) <= tol

    def violation(self, z: Vector) -> float:
        '''Largest halfspace violation, 0 when z is inside.'''
        if self.halfspaces.shape[0] == 0:
            return 0.0
        return max(0.0, float(np.max(self.halfspaces @ z)))

    def negated(self) -> PolyhedralCone:
        return PolyhedralCone(self.dim, -self.generators, -self.halfspaces)

    def cross_check(self, rays: int = 32, seed: int = 0) -> None:
        '''Confirm the halfspace and generator descriptions agree.

        Every generator must satisfy every halfspace, and random rays must get the
        same membership answer from both descriptions. Rays within 1e-6 of a facet
        are skipped since either answer is acceptable there.
        '''
        for g in self.generators:
            if self.violation(g) > TAU_GEO:
                raise ConeError(f'generator {g.tolist()} violates a derived halfspace')
        rng = np.random.default_rng(seed)
        for z in rng.standard_normal((rays, self.dim)):
            slack = float(np.max(self.halfspaces @ z)) if self.halfspaces.shape[0] else -1.0
            if abs(slack) < 1e-6:
                continue
            by_halfspace = slack <= 0
            by_generator = project_cone(self, z).distance <= 1e-7 * max(1.0, np.linalg.norm(z))
            if by_halfspace != by_generator:
                raise ConeError(f'halfspace and generator membership disagree at {z.tolist()}')

    def describe(self) -> dict[str, Any]:
        return {'generators': self.generators.tolist()}


def _enumerate_facets(gens: NDArray[np.float64], dim: int) -> NDArray[np.float64]:
    # Everything orthogonal to span(P) is an equality, written as a pair of halfspaces
    lineal = _null_basis(gens, dim).T
    rows: list[Vector] = [*lineal, *(-lineal)]
    span_dim = dim - lineal.shape[0]
    for subset in combinations(range(gens.shape[0]), span_dim - 1):
        system = np.vstack([gens[list(subset)], lineal]) if subset else lineal
        normal = _null_basis(system.reshape(-1, dim), dim)
        if normal.shape[1] != 1:
            continue
        y = normal[:, 0]
        dots = gens @ y
        if np.all(dots <= TAU_GEO):
            rows.append(y)
        elif np.all(dots >= -TAU_GEO):
            rows.append(-y)
    if not rows:
        return np.zeros((0, dim))
    return _unique_rows(rows)


def project_cone(cone: PolyhedralCone, v: ArrayLike) -> ProjectionResult:
    '''Nearest point of the cone by nonnegative least squares over the generators.'''
    v = as_vector(v, cone.dim)
    if cone.generators.shape[0] == 0:
        point = np.zeros(cone.dim)
    else:
        coef, _ = nnls(cone.generators.T, v)
        point = cone.generators.T @ coef
    return ProjectionResult(point, float(np.linalg.norm(v - point)))


def project_cone_dykstra(
    cone: PolyhedralCone, v: ArrayLike, tol: float = 1e-12, max_sweeps: int = 10_000
) -> ProjectionResult:
    '''Nearest point of the cone by Dykstra's alternation over its halfspaces.'''
    v = as_vector(v, cone.dim)
    x = v.copy()
    increments = np.zeros_like(cone.halfspaces)
    for _ in range(max_sweeps):
        previous = x.copy()
        for j, h in enumerate(cone.halfspaces):
            y = x + increments[j]
            nxt = y - max(0.0, float(h @ y)) * h
            increments[j] = y - nxt
            x = nxt
        if np.linalg.norm(x - previous) < tol:
            break
    return ProjectionResult(x, float(np.linalg.norm(v - x)))


def polar(cone: PolyhedralCone) -> PolyhedralCone:
    # Generated by the halfspace normals, cut out by the generators
    return PolyhedralCone(cone.dim, cone.halfspaces.copy(), cone.generators.copy())


def polar_contains(cone: PolyhedralCone, z: ArrayLike, tol: float = TAU_GEO) -> bool:
    z = as_vector(z, cone.dim)
    if cone.generators.shape[0] == 0:
        return True
    return bool(np.max(cone.generators @ z) <= tol)


def polar_violation(cone: PolyhedralCone, z: ArrayLike) -> float:
    '''Largest <g, z> over generators, the amount by which z misses the polar cone.'''
    z = as_vector(z, cone.dim)
    if cone.generators.shape[0] == 0:
        return 0.0
    return float(np.max(cone.generators @ z))


def project_polytope(
    vertices: ArrayLike, z: ArrayLike, tol: float = 1e-12, max_iter: int = 1000
) -> PolytopeProjection:
    '''Project z onto conv(vertices) with Wolfe's minimum norm point method.

    Returns the nearest point, its convex weights over the vertices and the distance.
    '''
    z = as_vector(z)
    pts = _as_rows(vertices, z.shape[0])
    if pts.shape[0] == 0:
        raise GeometryError('cannot project onto the hull of no points')
    shifted = pts - z
    scale = max(1.0, float(np.max(np.sum(shifted**2, axis=1))))

    active = [int(np.argmin(np.sum(shifted**2, axis=1)))]
    weights = np.array([1.0])
    x = shifted[active[0]].copy()
    for _ in range(max_iter):
        j = int(np.argmin(shifted @ x))
        if x @ x - shifted[j] @ x <= tol * scale or j in active:
            break
        active.append(j)
        weights = np.append(weights, 0.0)
        while True:
            basis = shifted[active]
            size = len(active)
            kkt = np.zeros((size + 1, size + 1))
            kkt[:size, :size] = basis @ basis.T
            kkt[:size, size] = 1.0
            kkt[size, :size] = 1.0
            rhs = np.zeros(size + 1)
            rhs[size] = 1.0
            affine = np.linalg.lstsq(kkt, rhs, rcond=None)[0][:size]
            if np.all(affine > tol):
                weights = affine
                x = affine @ basis
                break
            shrink = (weights > affine) & (affine <= tol)
            theta = (
                float(np.min(weights[shrink] / (weights[shrink] - affine[shrink])))
                if np.any(shrink)
                else 0.0
            )
            weights = theta * affine + (1 - theta) * weights
            keep = weights > tol
            active = [a for a, k in zip(active, keep, strict=True) if k]
            weights = weights[keep] / np.sum(weights[keep])
            x = weights @ shifted[active]

    full = np.zeros(pts.shape[0])
    full[active] = weights
    point = full @ pts
    return PolytopeProjection(point, full, float(np.linalg.norm(point - z)))


class ConvexCompactSet(metaclass=ABCMeta):
    '''A nonempty convex compact subset of R^N with exact projection and support.'''

    kind: str = ''

    def __init__(self, dim: int) -> None:
        if dim < 1:
            raise DimensionError('at least 1', dim)
        self.dim = dim

    @abstractmethod
    def project(self, v: Vector) -> Vector:
        pass

    @abstractmethod
    def support(self, c: Vector) -> tuple[float, Vector]:
        '''Return max over the set of <v, c> and a maximizer.'''

    @abstractmethod
    def violation(self, x: Vector) -> float:
        '''How far x is from satisfying the set's constraints, 0 inside.'''

    @abstractmethod
    def sample(self, count: int, rng: np.random.Generator) -> NDArray[np.float64]:
        pass

    @abstractmethod
    def center(self) -> Vector:
        pass

    @abstractmethod
    def diameter(self) -> float:
        pass

    @abstractmethod
    def lattice(self, resolution: int) -> NDArray[np.float64]:
        '''Grid points of the set with the given number of steps per axis.'''

    @abstractmethod
    def lattice_size(self, resolution: int) -> int:
        pass

    def lattice_step(self, resolution: int) -> float:
        '''Coordinate step between neighbouring lattice points.'''
        return 2.0 / resolution

    def contains(self, x: ArrayLike, tol: float = TAU_GEO) -> bool:
        return self.violation(as_vector(x, self.dim)) <= tol

    def describe(self) -> dict[str, Any]:
        return {'kind': self.kind, 'dim': self.dim}

    def __repr__(self) -> str:
        return f'{self.__class__.__name__}({self.dim})'


def _cone_combinations(
    cone: PolyhedralCone, count: int, rng: np.random.Generator
) -> NDArray[np.float64]:
    gens = cone.generators
    coef = rng.exponential(size=(count, gens.shape[0]))
    # Sparse combinations reach the faces of the cone as well as its interior
    coef *= rng.random((count, gens.shape[0])) < 0.7
    return coef @ gens


def _cube_grid(resolution: int, dim: int) -> NDArray[np.float64]:
    axis = np.linspace(-1.0, 1.0, resolution + 1)
    mesh = np.meshgrid(*([axis] * dim), indexing='ij')
    return np.stack([m.ravel() for m in mesh], axis=1)


class Simplex(ConvexCompactSet):
    '''The unit simplex {p >= 0 : sum(p) = 1}.'''

    kind = 'simplex'

    def project(self, v: Vector) -> Vector:
        v = as_vector(v, self.dim)
        if np.all(v >= 0) and v.sum() == 1.0:
            return v.copy()
        u = np.sort(v)[::-1]
        cssv = np.cumsum(u)
        rho = np.nonzero(u * np.arange(1, self.dim + 1) > (cssv - 1.0))[0][-1]
        theta = (cssv[rho] - 1.0) / (rho + 1.0)
        return np.clip(v - theta, 0.0, None)

    def support(self, c: Vector) -> tuple[float, Vector]:
        c = as_vector(c, self.dim)
        j = int(np.argmax(c))
        vertex = np.zeros(self.dim)
        vertex[j] = 1.0
        return float(c[j]), vertex

    def violation(self, x: Vector) -> float:
        return max(0.0, float(-np.min(x)), abs(float(np.sum(x)) - 1.0))

    def sample(self, count: int, rng: np.random.Generator) -> NDArray[np.float64]:
        vertices = np.eye(self.dim)[:count]
        extra = rng.dirichlet(np.ones(self.dim), size=max(0, count - self.dim))
        return np.vstack([vertices, extra])

    def center(self) -> Vector:
        return np.full(self.dim, 1.0 / self.dim)

    def diameter(self) -> float:
        return float(np.sqrt(2.0)) if self.dim > 1 else 0.0

    def lattice(self, resolution: int) -> NDArray[np.float64]:
        if self.dim == 1:
            return np.ones((1, 1))
        stars = resolution + self.dim - 1
        bars = np.array(list(combinations(range(stars), self.dim - 1)))
        edges = np.hstack(
            [np.full((bars.shape[0], 1), -1), bars, np.full((bars.shape[0], 1), stars)]
        )
        return (np.diff(edges, axis=1) - 1) / resolution

    def lattice_size(self, resolution: int) -> int:
        return comb(resolution + self.dim - 1, self.dim - 1)

    def lattice_step(self, resolution: int) -> float:
        return 1.0 / resolution


class Ball(ConvexCompactSet):
    '''The closed unit ball.'''

    kind = 'ball'

    def project(self, v: Vector) -> Vector:
        v = as_vector(v, self.dim)
        return v / max(1.0, float(np.linalg.norm(v)))

    def support(self, c: Vector) -> tuple[float, Vector]:
        c = as_vector(c, self.dim)
        norm = float(np.linalg.norm(c))
        if norm == 0.0:
            return 0.0, np.zeros(self.dim)
        return norm, c / norm

    def violation(self, x: Vector) -> float:
        return max(0.0, float(np.linalg.norm(x)) - 1.0)

    def sample(self, count: int, rng: np.random.Generator) -> NDArray[np.float64]:
        directions = rng.standard_normal((count, self.dim))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        return directions * rng.random((count, 1)) ** (1.0 / self.dim)

    def center(self) -> Vector:
        return np.zeros(self.dim)

    def diameter(self) -> float:
        return 2.0

    def lattice(self, resolution: int) -> NDArray[np.float64]:
        grid = _cube_grid(resolution, self.dim)
        return grid[np.linalg.norm(grid, axis=1) <= 1.0 + 1e-12]

    def lattice_size(self, resolution: int) -> int:
        return (resolution + 1) ** self.dim


class BallCapCone(ConvexCompactSet):
    '''The intersection of the closed unit ball with a polyhedral cone.'''

    kind = 'ball-cone'

    def __init__(self, cone: PolyhedralCone) -> None:
        super().__init__(cone.dim)
        self.cone = cone

    def project(self, v: Vector, method: str = 'exact') -> Vector:
        '''Project onto B∩P.

        For a cone with vertex at the ball's center projecting onto the cone and then
        the ball is exact. method='dykstra' alternates between the two instead.
        '''
        v = as_vector(v, self.dim)
        if method == 'dykstra':
            return self._project_dykstra(v)
        inner = project_cone(self.cone, v).point
        return inner / max(1.0, float(np.linalg.norm(inner)))

    def _project_dykstra(
        self, v: Vector, tol: float = 1e-12, max_sweeps: int = 10_000
    ) -> Vector:
        x = v.copy()
        p = np.zeros_like(v)
        q = np.zeros_like(v)
        for _ in range(max_sweeps):
            y = x + p
            ball = y / max(1.0, float(np.linalg.norm(y)))
            p = y - ball
            w = ball + q
            nxt = project_cone(self.cone, w).point
            q = w - nxt
            moved = float(np.linalg.norm(nxt - x))
            x = nxt
            if moved < tol:
                break
        return x

    def support(self, c: Vector, *, via_polar: bool = False) -> tuple[float, Vector]:
        c = as_vector(c, self.dim)
        if via_polar:
            # Moreau: the cone part of c is what remains after removing its polar part
            inner = c - project_cone(polar(self.cone), c).point
        else:
            inner = project_cone(self.cone, c).point
        norm = float(np.linalg.norm(inner))
        if norm < 1e-15:
            return 0.0, np.zeros(self.dim)
        return norm, inner / norm

    def violation(self, x: Vector) -> float:
        return max(0.0, float(np.linalg.norm(x)) - 1.0, self.cone.violation(x))

    def sample(self, count: int, rng: np.random.Generator) -> NDArray[np.float64]:
        gens = self.cone.generators
        if gens.shape[0] == 0:
            return np.zeros((count, self.dim))
        head = gens[:count]
        raw = _cone_combinations(self.cone, max(0, count - head.shape[0]), rng)
        norms = np.linalg.norm(raw, axis=1, keepdims=True)
        safe = np.where(norms > 0, norms, 1.0)
        radius = rng.random((raw.shape[0], 1)) ** (1.0 / self.dim)
        return np.vstack([head, raw / safe * radius])

    def center(self) -> Vector:
        total = np.sum(self.cone.generators, axis=0)
        norm = float(np.linalg.norm(total))
        if self.cone.generators.shape[0] == 0 or norm < TAU_GEO:
            return np.zeros(self.dim)
        return 0.5 * total / norm

    def diameter(self) -> float:
        return 0.0 if self.cone.generators.shape[0] == 0 else 2.0

    def lattice(self, resolution: int) -> NDArray[np.float64]:
        if self.cone.generators.shape[0] == 0:
            return np.zeros((1, self.dim))
        # Grid the span of the cone so lower dimensional cones still get points
        basis = orth(self.cone.generators.T)
        grid = _cube_grid(resolution, basis.shape[1]) @ basis.T
        inside = np.linalg.norm(grid, axis=1) <= 1.0 + 1e-12
        if self.cone.halfspaces.shape[0]:
            inside &= np.max(grid @ self.cone.halfspaces.T, axis=1) <= 1e-12
        return grid[inside]

    def lattice_size(self, resolution: int) -> int:
        span = np.linalg.matrix_rank(self.cone.generators) if self.cone.generators.size else 0
        return (resolution + 1) ** int(span)

    def describe(self) -> dict[str, Any]:
        return {'kind': self.kind, 'dim': self.dim, **self.cone.describe()}


class SphereCapCone:
    '''The unit sphere sliced by a cone, S∩P. Not convex, used for sampling checks.'''

    def __init__(self, cone: PolyhedralCone) -> None:
        self.cone = cone
        self.dim = cone.dim

    def contains(self, x: ArrayLike, tol: float = TAU_GEO) -> bool:
        x = as_vector(x, self.dim)
        return abs(float(np.linalg.norm(x)) - 1.0) <= tol and self.cone.contains(x, tol)

    def sample(self, count: int, rng: np.random.Generator) -> NDArray[np.float64]:
        gens = self.cone.generators
        if gens.shape[0] == 0:
            return np.zeros((0, self.dim))
        head = gens[:count]
        raw = _cone_combinations(self.cone, max(0, count - head.shape[0]), rng)
        norms = np.linalg.norm(raw, axis=1)
        raw = raw[norms > TAU_GEO] / norms[norms > TAU_GEO, None]
        return np.vstack([head, raw])


def project(domain: ConvexCompactSet, v: ArrayLike) -> ProjectionResult:
    v = as_vector(v, domain.dim)
    point = domain.project(v)
    return ProjectionResult(point, float(np.linalg.norm(v - point)))


def support_max(
    domain: ConvexCompactSet, c: ArrayLike, *, via_polar: bool = False
) -> tuple[float, Vector]:
    '''Maximize <v, c> over the set exactly.

    Parameters
    ----------
    domain
        The set to maximize over
    c
        The linear functional
    via_polar
        For a ball-cone set, evaluate through the polar cone projection instead of
        the cone projection. Both give the same value, this is the independent path.
    '''
    c = as_vector(c, domain.dim)
    if isinstance(domain, BallCapCone):
        return domain.support(c, via_polar=via_polar)
    return domain.support(c)


def normal_cone_residual(
    domain: ConvexCompactSet, x: ArrayLike, u: ArrayLike, tol: float = TAU_GEO
) -> float:
    '''Return max over v in the set of <u, v - x>. At most tol certifies u in N(x).'''
    x = as_vector(x, domain.dim)
    u = as_vector(u, domain.dim)
    violation = domain.violation(x)
    if violation > tol:
        raise PointNotInSetError(x, violation)
    value, _ = support_max(domain, u)
    return value - float(u @ x)


def sample_set(domain: ConvexCompactSet, count: int, seed: int) -> NDArray[np.float64]:
    if count < 1:
        raise ValueError(f'count must be at least 1, got {count}')
    return domain.sample(count, np.random.default_rng(seed))
