from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import StrEnum
from typing import TYPE_CHECKING, Any

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
    ConvexCompactSet,
    PolyhedralCone,
    Simplex,
    SphereCapCone,
    Vector,
    as_vector,
    polar_contains,
    polar_violation,
)
from .maps import CorrespondenceOracle, MapOracle
from .retraction import RetractionMap, is_subspace
from .solver import (
    CertificateReport,
    Method,
    NoConvergenceError,
    Stage,
    hs_gap,
    solve_hs,
    solve_hs_correspondence,
)

if TYPE_CHECKING:
    from numpy.typing import NDArray

    from .config import SolverConfig

logger = logging.getLogger(__name__)

# Range checks allow this much slack for maps that project onto their set
RANGE_TOL = 1e-7
# Brouwer tightens the HS target by this factor at most this many times
_TIGHTEN = 0.01
_TIGHTEN_ROUNDS = 3


class EquilibriumError(Exception):
    pass


class HypothesisViolatedError(EquilibriumError):
    def __init__(self, message: str, certificate: EquilibriumCertificate) -> None:  # noqa: D107
        super().__init__(message)
        self.certificate = certificate


class DomainError(EquilibriumError):
    def __init__(self, point: Vector, image: Vector, violation: float) -> None:  # noqa: D107
        super().__init__(
            f'map sends {point.tolist()} to {image.tolist()}, {violation:.3e} outside the set'
        )
        self.point = point
        self.image = image
        self.violation = violation


class ConeCase(StrEnum):
    SIMPLEX = 'simplex'
    SUBSPACE = 'subspace'
    PROPER_CONE = 'proper_cone'


Oracle = MapOracle | CorrespondenceOracle


def _as_correspondence(zeta: Oracle) -> CorrespondenceOracle:
    if isinstance(zeta, MapOracle):
        return CorrespondenceOracle.from_map(zeta)
    return zeta


@dataclass(frozen=True, eq=False)
class WalrasReport:
    value: float
    price: Vector | None
    excess: Vector | None
    samples: int

    def holds(self, tol: float) -> bool:
        return self.value <= tol


def check_walras(
    domain: ConvexCompactSet | SphereCapCone, zeta: Oracle, samples: int = 256, seed: int = 0
) -> WalrasReport:
    '''Largest <p, z> over sampled prices p and the branch vertices z of zeta(p).

    Advisory only, the hypothesis quantifies over every price. Convex sets contribute
    their center as well as the samples.
    '''
    corr = _as_correspondence(zeta)
    points = domain.sample(samples, np.random.default_rng(seed))
    if isinstance(domain, ConvexCompactSet):
        points = np.vstack([domain.center(), points])
    worst = -np.inf
    price = excess = None
    for p in points:
        values = corr.all_values(p)
        dots = values @ p
        j = int(np.argmax(dots))
        if dots[j] > worst:
            worst, price, excess = float(dots[j]), p, values[j]
    if price is None:
        # Empty sphere slice, nothing to violate
        return WalrasReport(-np.inf, None, None, 0)
    return WalrasReport(worst, price, excess, points.shape[0])


@dataclass(frozen=True, eq=False)
class EquilibriumCertificate:
    '''A price, a witness excess demand and every gap recomputed from the oracles.

    target_gap is max_j z_j on the simplex and max_g <g, z> over cone generators
    otherwise, at most 10 * tol certifies z in the nonpositive orthant or polar cone.
    '''

    price: Vector
    witness: Vector
    walras_check: float
    target_gap: float
    membership_gap: float
    residual: float
    cone_case: ConeCase
    tol: float
    retraction_used: Vector | None = None
    solver_point: Vector | None = None
    method: Method | None = None
    stages: tuple[Stage, ...] = field(default=())

    @property
    def passed(self) -> bool:
        limit = 10 * self.tol
        return self.target_gap <= limit and self.membership_gap <= limit

    @property
    def degenerate_price(self) -> bool:
        return float(np.linalg.norm(self.price)) <= 10 * self.tol

    def as_dict(self) -> dict[str, Any]:
        return {
            'kind': 'equilibrium',
            'price': self.price.tolist(),
            'witness': self.witness.tolist(),
            'walras_check': self.walras_check,
            'target_gap': self.target_gap,
            'membership_gap': self.membership_gap,
            'residual': self.residual,
            'cone_case': str(self.cone_case),
            'tol': self.tol,
            'retraction_witness': None
            if self.retraction_used is None
            else self.retraction_used.tolist(),
            'solver_point': None if self.solver_point is None else self.solver_point.tolist(),
            'method': None if self.method is None else str(self.method),
            'degenerate_price': self.degenerate_price,
            'passed': self.passed,
        }


def _solve(
    domain: ConvexCompactSet, zeta: Oracle, cfg: SolverConfig
) -> tuple[Vector, Vector, float, float, Method, tuple[Stage, ...]]:
    '''Solve HS for a map or a correspondence, returning point, witness and gaps.'''
    if isinstance(zeta, MapOracle):
        sol = solve_hs(domain, zeta, cfg)
        membership = float(np.linalg.norm(sol.value - zeta(sol.point)))
        return sol.point, sol.value, sol.residual, membership, sol.method, ()
    csol = solve_hs_correspondence(domain, zeta, cfg)
    return csol.point, csol.witness, csol.residual, csol.membership_gap, csol.method, csol.stages


def solve_gnd(
    zeta: Oracle, cfg: SolverConfig, *, weak_form: bool = False
) -> EquilibriumCertificate:
    '''Find a price p on the simplex with some z in zeta(p) that is nonpositive.

    Solves HS for zeta on the simplex. At the solution <p, z> <= 0 by Walras' law,
    so <q, z> <= <p, z> <= 0 for every price q, which makes every z_j nonpositive.

    Parameters
    ----------
    zeta
        Excess demand, a map or a polytope valued correspondence
    cfg
        Solver settings
    weak_form
        Restrict a correspondence to values with <p, z> <= 0 before solving
    '''
    domain = Simplex(zeta.dim)
    if weak_form and isinstance(zeta, CorrespondenceOracle):
        zeta = zeta.filtered()
    p, z, residual, membership, method, stages = _solve(domain, zeta, cfg)
    walras = check_walras(domain, zeta, cfg.walras_samples, cfg.seed)
    if not walras.holds(cfg.tol):
        logger.warning('Walras check failed: <p, z> = %.3e at p = %s', walras.value, walras.price)
    cert = EquilibriumCertificate(
        price=p,
        witness=z,
        walras_check=walras.value,
        target_gap=float(np.max(z)),
        membership_gap=membership,
        residual=residual,
        cone_case=ConeCase.SIMPLEX,
        tol=cfg.tol,
        method=method,
        stages=stages,
    )
    limit = cfg.tol if isinstance(zeta, MapOracle) else 10 * cfg.tol
    if float(p @ z) > limit:
        raise HypothesisViolatedError(f'Walras fails at the solution: <p, z> = {p @ z:.3e}', cert)
    return cert


def solve_gnd_general(
    cone: PolyhedralCone, zeta: Oracle, cfg: SolverConfig
) -> EquilibriumCertificate:
    '''Find p in B∩P with some z in zeta(p) lying in the polar cone.

    When P is a linear subspace HS is solved for zeta on B∩P directly and p may be
    the origin. Otherwise HS is solved for zeta composed with the retraction r onto
    S∩P and the reported price is r(x), a unit vector.
    '''
    domain = BallCapCone(cone)
    sphere = SphereCapCone(cone)
    retraction = None
    if is_subspace(cone):
        case = ConeCase.SUBSPACE
        x, z, residual, membership, method, stages = _solve(domain, zeta, cfg)
        p = x
    else:
        case = ConeCase.PROPER_CONE
        retraction = RetractionMap.for_cone(cone)
        x, z, residual, membership, method, stages = _solve(
            domain, zeta.compose(retraction), cfg
        )
        p = retraction(x)
    walras = check_walras(sphere, zeta, cfg.walras_samples, cfg.seed)
    if not walras.holds(cfg.tol):
        logger.warning(
            'Sphere condition failed: <p, z> = %.3e at p = %s', walras.value, walras.price
        )
    cert = EquilibriumCertificate(
        price=p,
        witness=z,
        walras_check=walras.value,
        target_gap=polar_violation(cone, z),
        membership_gap=membership,
        residual=residual,
        cone_case=case,
        tol=cfg.tol,
        retraction_used=None if retraction is None else retraction.a,
        solver_point=x,
        method=method,
        stages=stages,
    )
    if cert.degenerate_price:
        logger.warning('Degenerate price: ||p|| = %.3e', np.linalg.norm(p))
    on_sphere = abs(float(np.linalg.norm(p)) - 1.0) <= 1e-6
    limit = cfg.tol if isinstance(zeta, MapOracle) else 10 * cfg.tol
    if on_sphere and float(p @ z) > limit:
        raise HypothesisViolatedError(
            f'sphere condition fails at the solution: <p, z> = {p @ z:.3e}', cert
        )
    return cert


def verify_equilibrium(
    cert: EquilibriumCertificate | dict[str, Any],
    zeta: Oracle,
    domain: ConvexCompactSet,
    tol: float,
) -> CertificateReport:
    '''Recompute every gap of an equilibrium certificate from the raw oracle.'''
    if isinstance(cert, EquilibriumCertificate):
        cert = cert.as_dict()
    corr = _as_correspondence(zeta)
    p = as_vector(cert['price'], domain.dim)
    z = as_vector(cert['witness'], domain.dim)
    report = CertificateReport()
    limit = 10 * tol
    report.add('membership_gap', corr.distance(p, z), limit)
    if isinstance(domain, BallCapCone):
        report.add('price_in_set', domain.violation(p), TAU_GEO)
        report.add('target_gap', polar_violation(domain.cone, z), limit)
        if cert.get('cone_case') == ConeCase.PROPER_CONE:
            report.add('price_off_origin', abs(float(np.linalg.norm(p)) - 1.0), 1e-6)
    else:
        report.add('price_in_set', domain.violation(p), TAU_GEO)
        report.add('target_gap', float(np.max(z)), limit)
        report.add('walras_at_price', float(p @ z), limit)
    return report


def verify_supporting_lemma(
    cone: PolyhedralCone,
    zeta: Oracle,
    x: ArrayLike,
    z: ArrayLike,
    tol: float,
    samples: int = 256,
    seed: int = 0,
) -> SupportingLemmaReport:
    '''Check the supporting lemma's hypotheses and conclusion at one point.

    The hypotheses are z in zeta(x), <p, zeta(p)> <= 0 on sampled S∩P and the HS
    inequality <p, z> <= <x, z> on B∩P (exactly and on samples). The conclusion is
    z in the polar cone. Whenever every hypothesis passes the conclusion must too.
    '''
    corr = _as_correspondence(zeta)
    x = as_vector(x, cone.dim)
    z = as_vector(z, cone.dim)
    domain = BallCapCone(cone)
    rng = np.random.default_rng(seed)
    inside: NDArray[np.float64] = domain.sample(samples, rng)
    walras = check_walras(SphereCapCone(cone), corr, samples, seed)

    report = CertificateReport()
    report.add('membership', corr.distance(x, z), tol)
    # An empty sphere slice has nothing to violate
    sphere = walras.value if walras.price is not None else -1.0
    report.add('sphere_condition', sphere, tol)
    report.add('hs_inequality', hs_gap(domain, x, z), tol)
    report.add('hs_inequality_sampled', float(np.max(inside @ z)) - float(x @ z), tol)
    conclusion = CertificateReport()
    conclusion.add('polar_membership', polar_violation(cone, z), tol)
    return SupportingLemmaReport(report, conclusion, polar_contains(cone, z, tol))


@dataclass(frozen=True, eq=False)
class SupportingLemmaReport:
    hypotheses: CertificateReport
    conclusion: CertificateReport
    in_polar: bool

    @property
    def implication_holds(self) -> bool:
        return not self.hypotheses.passed or self.conclusion.passed

    @property
    def checks(self) -> CertificateReport:
        combined = CertificateReport()
        combined.extend(self.hypotheses)
        combined.extend(self.conclusion)
        return combined


@dataclass(frozen=True, eq=False)
class FixedPointResult:
    point: Vector
    gap: float
    residual: float
    iterations: int
    method: Method
    stages: tuple[Stage, ...] = ()

    def as_dict(self) -> dict[str, Any]:
        return {
            'kind': 'fixed-point',
            'point': self.point.tolist(),
            'gap': self.gap,
            'residual': self.residual,
            'method': str(self.method),
        }


def _check_range(domain: ConvexCompactSet, images: Oracle, cfg: SolverConfig) -> None:
    corr = _as_correspondence(images)
    for p in domain.sample(cfg.walras_samples, np.random.default_rng(cfg.seed)):
        for value in corr.all_values(p):
            violation = domain.violation(value)
            if violation > RANGE_TOL:
                raise DomainError(p, value, violation)


def solve_brouwer(
    domain: ConvexCompactSet,
    f: MapOracle,
    cfg: SolverConfig,
    *,
    start: ArrayLike | None = None,
    check_range: bool = True,
) -> FixedPointResult:
    '''Fixed point of a continuous self map of a compact convex set.

    An HS solution x of g = f - id gives <f(x) - x, f(x) - x> <= residual by taking
    v = f(x), so the gap ||f(x) - x|| is at most sqrt(residual). The HS target is
    tightened until the gap itself is within cfg.tol.
    '''
    if check_range:
        _check_range(domain, f, cfg)
    g = f.displacement()
    target = cfg.tol
    best: FixedPointResult | None = None
    for _ in range(_TIGHTEN_ROUNDS + 1):
        try:
            sol = solve_hs(domain, g, cfg.merged(tol=target), start=start)
            point, residual, iterations, method = (
                sol.point,
                sol.residual,
                sol.iterations,
                sol.method,
            )
        except NoConvergenceError as e:
            if e.best_point is None:
                raise
            point, residual, iterations, method = e.best_point, e.residual, 0, Method.HYBRID
        gap = float(np.linalg.norm(f(point) - point))
        if best is None or gap < best.gap:
            best = FixedPointResult(point, gap, residual, iterations, method)
        if gap <= cfg.tol:
            return best
        logger.debug('Fixed point gap %.3e above target, tightening HS tolerance', gap)
        start = point
        target *= _TIGHTEN
    if best is None:
        raise NoConvergenceError('fixed point search produced no iterate', None, np.inf)
    raise NoConvergenceError('fixed point gap did not reach tolerance', best.point, best.gap)


def solve_kakutani(
    domain: ConvexCompactSet, zeta: CorrespondenceOracle, cfg: SolverConfig
) -> FixedPointResult:
    '''Point x with x in zeta(x) for a polytope valued self correspondence.

    Each stage replaces zeta by its continuous approximation at radius
    epsilon0 * decay**k, finds a Brouwer fixed point and measures the distance from x
    to zeta(x). With cfg.polish a stage that misses 10 * tol retries with the
    continuous selection through the branch weights of the projection of x.
    '''
    _check_range(domain, zeta, cfg)
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
            x = solve_brouwer(
                domain, approx.as_oracle(), stage_cfg, start=previous, check_range=False
            ).point
        except NoConvergenceError as e:
            if e.best_point is None:
                continue
            x = e.best_point
        except ApproximationError as e:
            logger.warning('Stage %d at radius %.3e failed: %s', k, epsilon, e)
            continue

        gap = zeta.distance(x, x)
        stages.append(Stage(epsilon, x, gap, gap, len(covering)))
        logger.debug('Stage %d radius %.3e fixed point gap %.3e', k, epsilon, gap)
        if best is None or gap < best[0]:
            best = (gap, x)
        if gap <= limit:
            return FixedPointResult(x, gap, gap, k, Method.APPROXIMATION, tuple(stages))

        if cfg.polish:
            selection = zeta.selection(zeta.nearest(x, x).weights)
            try:
                polished = solve_brouwer(domain, selection, stage_cfg, start=x, check_range=False)
            except NoConvergenceError:
                logger.debug('Selection polish at stage %d did not converge', k)
            else:
                gap = zeta.distance(polished.point, polished.point)
                if gap <= limit:
                    return FixedPointResult(
                        polished.point, gap, polished.residual, k, Method.SELECTION, tuple(stages)
                    )
        previous = x

    raise NoConvergenceError(
        'Kakutani fixed point did not certify',
        None if best is None else best[1],
        np.inf if best is None else best[0],
        stages=stages,
    )

