'''Run a problem in one of its modes and collect a re-verifiable report.

Every certificate is rechecked by recheck() from the raw oracles before it is
reported, the same function a later verify run uses.
'''

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path
from typing import TYPE_CHECKING, Any

import numpy as np

from .config import ConfigError, SolverConfig, seed_from_env
from .equilibrium import (
    ConeCase,
    DomainError,
    EquilibriumCertificate,
    HypothesisViolatedError,
    solve_brouwer,
    solve_gnd,
    solve_gnd_general,
    solve_kakutani,
    verify_equilibrium,
)
from .geometry import TAU_GEO, BallCapCone, GeometryError, Simplex, as_vector
from .maps import CorrespondenceOracle, MapOracle
from .oracles import GridTooLargeError, continuity_probe, grid_hs_oracle
from .problem import (
    FORMAT_VERSION,
    Mode,
    ProblemError,
    ProblemSpec,
    SchemaError,
    build_cone,
    build_correspondence,
    build_map,
    build_set,
    load_problem,
    to_document,
    whole_space,
)
from .retraction import RetractionError, RetractionMap, lambda_coefficient
from .solver import (
    CertificateReport,
    NoConvergenceError,
    Stage,
    TracePoint,
    hs_residual,
    solve_hs,
    solve_hs_correspondence,
    verify_hs,
)

if TYPE_CHECKING:
    from collections.abc import Sequence

    from .geometry import ConvexCompactSet, PolyhedralCone

logger = logging.getLogger(__name__)

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_ERROR = 2

# Retracted points must be this close to the sphere and the cone
RETRACT_TOL = 1e-9

# Errors in the input rather than in the solve
INPUT_ERRORS = (ProblemError, GeometryError, RetractionError, ConfigError)


def library_version() -> str:
    try:
        return version('vi-equilibrium')
    except PackageNotFoundError:
        return '0+unknown'


@dataclass(frozen=True)
class RunFlags:
    '''Command line settings for one run. None leaves the problem's own value.'''

    mode: Mode | None = None
    tol: float | None = None
    max_iter: int | None = None
    seed: int | None = None
    trace: Path | None = None
    oracle: bool = False
    output: Path | None = None
    certificate: Path | None = None


@dataclass
class RunReport:
    name: str | None
    mode: Mode
    certificate: dict[str, Any]
    checks: CertificateReport
    config: dict[str, Any]
    problem: dict[str, Any]
    wall_time: float = 0.0
    trace_path: str | None = None
    oracle: dict[str, Any] | None = None
    warnings: list[str] = field(default_factory=list)
    error: str | None = None
    version: str = field(default_factory=library_version)

    @property
    def passed(self) -> bool:
        return self.error is None and bool(self.checks.checks) and self.checks.passed

    @property
    def exit_code(self) -> int:
        return EXIT_PASS if self.passed else EXIT_FAIL

    @property
    def seed(self) -> int:
        return int(self.config['seed'])

    def as_dict(self) -> dict[str, Any]:
        return {
            'format_version': FORMAT_VERSION,
            'name': self.name,
            'mode': str(self.mode),
            'certificate': self.certificate,
            'checks': self.checks.as_list(),
            'passed': self.passed,
            'config': self.config,
            'seed': self.seed,
            'problem': self.problem,
            'wall_time': self.wall_time,
            'trace_path': self.trace_path,
            'oracle': self.oracle,
            'warnings': self.warnings,
            'error': self.error,
            'version': self.version,
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True, indent=2)


@dataclass
class _Outcome:
    certificate: dict[str, Any]
    trace: list[TracePoint] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    error: str | None = None


def resolve_config(spec: ProblemSpec, flags: RunFlags, base: SolverConfig) -> SolverConfig:
    '''Command line over the problem's solver block over the base config.'''
    cfg = base.merged(**spec.solver)
    seed = flags.seed
    if seed is None and 'seed' not in spec.solver:
        seed = seed_from_env()
    return cfg.merged(tol=flags.tol, max_iter=flags.max_iter, seed=seed)


def _oracle(spec: ProblemSpec, domain: ConvexCompactSet) -> MapOracle | CorrespondenceOracle:
    if spec.correspondence is not None:
        return build_correspondence(spec, domain)
    if spec.map is None:
        raise SchemaError('map', f'mode {spec.mode} needs a map or a correspondence')
    return build_map(spec.map, spec.dim, domain)


def _general_cone(spec: ProblemSpec) -> PolyhedralCone:
    if spec.set['kind'] == Simplex.kind:
        raise SchemaError('set.kind', 'gnd-general mode needs a ball or ball-cone set')
    # A bare ball is the whole space intersected with the ball
    return build_cone(spec) or whole_space(spec.dim)


def _stage_trace(stages: Sequence[Stage]) -> list[TracePoint]:
    return [TracePoint(k, s.residual, s.point) for k, s in enumerate(stages)]


def _stages(stages: Sequence[Stage]) -> list[dict[str, Any]]:
    return [
        {
            'epsilon': s.epsilon,
            'point': s.point.tolist(),
            'residual': s.residual,
            'membership_gap': s.membership_gap,
            'centers': s.centers,
        }
        for s in stages
    ]


def _failed(kind: str, e: NoConvergenceError) -> _Outcome:
    certificate = {
        'kind': kind,
        'point': None if e.best_point is None else e.best_point.tolist(),
        'residual': e.residual,
    }
    trace = list(e.trace) or _stage_trace(e.stages)
    return _Outcome(certificate, trace, error=str(e))


def _run_vi(spec: ProblemSpec, cfg: SolverConfig) -> _Outcome:
    domain = build_set(spec)
    zeta = _oracle(spec, domain)
    try:
        if isinstance(zeta, MapOracle):
            sol = solve_hs(domain, zeta, cfg)
            return _Outcome(
                {
                    'kind': 'hs',
                    'point': sol.point.tolist(),
                    'value': sol.value.tolist(),
                    'residual': sol.residual,
                    'iterations': sol.iterations,
                    'method': str(sol.method),
                },
                list(sol.trace),
            )
        csol = solve_hs_correspondence(domain, zeta, cfg)
    except NoConvergenceError as e:
        return _failed('hs', e)
    return _Outcome(
        {
            'kind': 'hs',
            'point': csol.point.tolist(),
            'value': csol.witness.tolist(),
            'residual': csol.residual,
            'membership_gap': csol.membership_gap,
            'epsilon_final': csol.epsilon_final,
            'method': str(csol.method),
            'stages': _stages(csol.stages),
        },
        _stage_trace(csol.stages),
    )


def _equilibrium_outcome(cert: EquilibriumCertificate, error: str | None = None) -> _Outcome:
    certificate = cert.as_dict()
    certificate['stages'] = _stages(cert.stages)
    point = cert.price if cert.solver_point is None else cert.solver_point
    warnings = []
    if cert.degenerate_price:
        warnings.append(f'degenerate price, ||p|| = {np.linalg.norm(cert.price):.3e}')
    if cert.walras_check > cert.tol:
        warnings.append(f'sampled Walras check failed, max <p, z> = {cert.walras_check:.3e}')
    trace = _stage_trace(cert.stages) or [TracePoint(0, cert.residual, point)]
    return _Outcome(certificate, trace, warnings, error)


def _run_gnd(spec: ProblemSpec, cfg: SolverConfig) -> _Outcome:
    if spec.set['kind'] != Simplex.kind:
        raise SchemaError('set.kind', 'gnd mode needs a simplex set')
    zeta = _oracle(spec, build_set(spec))
    try:
        cert = solve_gnd(zeta, cfg)
    except HypothesisViolatedError as e:
        return _equilibrium_outcome(e.certificate, str(e))
    except NoConvergenceError as e:
        return _failed('equilibrium', e)
    return _equilibrium_outcome(cert)


def _run_gnd_general(spec: ProblemSpec, cfg: SolverConfig) -> _Outcome:
    cone = _general_cone(spec)
    zeta = _oracle(spec, BallCapCone(cone))
    try:
        cert = solve_gnd_general(cone, zeta, cfg)
    except HypothesisViolatedError as e:
        return _equilibrium_outcome(e.certificate, str(e))
    except NoConvergenceError as e:
        return _failed('equilibrium', e)
    return _equilibrium_outcome(cert)


def _run_brouwer(spec: ProblemSpec, cfg: SolverConfig) -> _Outcome:
    domain = build_set(spec)
    if spec.map is None:
        raise SchemaError('map', 'brouwer mode needs a map')
    f = build_map(spec.map, spec.dim, domain)
    try:
        result = solve_brouwer(domain, f, cfg)
    except NoConvergenceError as e:
        return _failed('fixed-point', e)
    except DomainError as e:
        return _Outcome({'kind': 'fixed-point', 'point': None}, error=str(e))
    certificate = result.as_dict()
    certificate['hs_residual'] = hs_residual(domain, f.displacement(), result.point)
    return _Outcome(certificate, [TracePoint(result.iterations, result.residual, result.point)])


def _run_kakutani(spec: ProblemSpec, cfg: SolverConfig) -> _Outcome:
    domain = build_set(spec)
    zeta = build_correspondence(spec, domain)
    try:
        result = solve_kakutani(domain, zeta, cfg)
    except NoConvergenceError as e:
        return _failed('fixed-point', e)
    except DomainError as e:
        return _Outcome({'kind': 'fixed-point', 'point': None}, error=str(e))
    certificate = result.as_dict()
    certificate['stages'] = _stages(result.stages)
    return _Outcome(certificate, _stage_trace(result.stages))


def _run_retract(spec: ProblemSpec, _: SolverConfig) -> _Outcome:
    cone = build_cone(spec)
    if cone is None or not spec.points:
        raise SchemaError('points', 'retract mode needs a cone and points')
    r = RetractionMap.for_cone(cone, spec.witness)
    points = np.asarray(spec.points, dtype=float)
    images = r(points)
    certificate = {
        'kind': 'retraction',
        'witness': r.a.tolist(),
        'points': points.tolist(),
        'images': images.tolist(),
        'lambdas': [lambda_coefficient(r, x) for x in points],
    }
    trace = [TracePoint(i, 0.0, y) for i, y in enumerate(images)]
    return _Outcome(certificate, trace)


def _recheck_hs(
    spec: ProblemSpec, certificate: dict[str, Any], cfg: SolverConfig
) -> CertificateReport:
    domain = build_set(spec)
    zeta = _oracle(spec, domain)
    x = as_vector(certificate['point'], spec.dim)
    z = certificate.get('value')
    if isinstance(zeta, MapOracle):
        if z is None:
            return verify_hs(domain, x, f=zeta, tol=cfg.tol)
        return verify_hs(domain, x, z=z, zeta=CorrespondenceOracle.from_map(zeta), tol=cfg.tol)
    if z is None:
        # Failed correspondence runs carry no witness to check
        report = CertificateReport()
        report.add('in_set', domain.violation(x), TAU_GEO)
        return report
    return verify_hs(domain, x, z=z, zeta=zeta, tol=10 * cfg.tol)


def _recheck_equilibrium(
    spec: ProblemSpec, certificate: dict[str, Any], cfg: SolverConfig
) -> CertificateReport:
    if certificate.get('cone_case') == ConeCase.SIMPLEX:
        domain: ConvexCompactSet = Simplex(spec.dim)
    else:
        domain = BallCapCone(_general_cone(spec))
    zeta = _oracle(spec, domain)
    return verify_equilibrium(certificate, zeta, domain, cfg.tol)


def _recheck_fixed_point(
    spec: ProblemSpec, certificate: dict[str, Any], cfg: SolverConfig
) -> CertificateReport:
    domain = build_set(spec)
    x = as_vector(certificate['point'], spec.dim)
    report = CertificateReport()
    report.add('in_set', domain.violation(x), TAU_GEO)
    if spec.correspondence is None:
        f = _oracle(spec, domain)
        report.add('fixed_point_gap', float(np.linalg.norm(f(x) - x)), cfg.tol)
    else:
        zeta = build_correspondence(spec, domain)
        report.add('correspondence_gap', zeta.distance(x, x), 10 * cfg.tol)
    return report


def _recheck_retraction(spec: ProblemSpec, certificate: dict[str, Any]) -> CertificateReport:
    cone = build_cone(spec)
    if cone is None:
        raise SchemaError('cone', 'a retraction certificate needs the cone')
    r = RetractionMap.for_cone(cone, certificate['witness'])
    points = np.asarray(certificate['points'], dtype=float).reshape(-1, spec.dim)
    reported = np.asarray(certificate['images'], dtype=float).reshape(-1, spec.dim)
    images = r(points).reshape(-1, spec.dim)
    report = CertificateReport()
    off_sphere = np.abs(np.linalg.norm(images, axis=1) - 1.0)
    report.add('on_sphere', float(np.max(off_sphere)), RETRACT_TOL)
    report.add('in_cone', max(cone.violation(y) for y in images), RETRACT_TOL)
    report.add('reproduced', float(np.max(np.abs(images - reported))), RETRACT_TOL)
    return report


def recheck(
    spec: ProblemSpec, certificate: dict[str, Any], cfg: SolverConfig
) -> CertificateReport:
    '''Recompute every check of a certificate from the problem's oracles alone.'''
    kind = certificate.get('kind')
    if certificate.get('point', certificate.get('price', 0)) is None:
        # Best effort certificate of a failed run, nothing to check
        return CertificateReport()
    if kind == 'hs':
        return _recheck_hs(spec, certificate, cfg)
    if kind == 'equilibrium':
        return _recheck_equilibrium(spec, certificate, cfg)
    if kind == 'fixed-point':
        return _recheck_fixed_point(spec, certificate, cfg)
    if kind == 'retraction':
        return _recheck_retraction(spec, certificate)
    raise SchemaError('certificate.kind', f'unknown certificate kind {kind!r}')


def load_certificate(path: Path) -> dict[str, Any]:
    '''Certificate from a report file, or a bare certificate document.'''
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise SchemaError('certificate', f'{path} is not valid JSON: {e}') from e
    except OSError as e:
        raise SchemaError('certificate', f'{path}: {e.strerror}') from e
    if not isinstance(doc, dict):
        raise SchemaError('certificate', 'must be a JSON object')
    certificate = doc.get('certificate', doc)
    if not isinstance(certificate, dict) or 'kind' not in certificate:
        raise SchemaError('certificate.kind', 'is required')
    return certificate


def _oracle_block(spec: ProblemSpec, mode: Mode, cfg: SolverConfig) -> dict[str, Any]:
    '''Brute force comparison values for the modes that reduce to HS for a map.'''
    if spec.map is None:
        return {'oracle': True, 'skipped': 'the grid oracle needs a single valued map'}
    if mode not in (Mode.VI, Mode.GND, Mode.GND_GENERAL, Mode.BROUWER):
        return {'oracle': True, 'skipped': f'no grid oracle in {mode} mode'}
    if mode == Mode.GND:
        domain: ConvexCompactSet = Simplex(spec.dim)
    elif mode == Mode.GND_GENERAL:
        domain = BallCapCone(_general_cone(spec))
    else:
        domain = build_set(spec)
    f = build_map(spec.map, spec.dim, domain)
    block: dict[str, Any] = {'oracle': True}
    continuity = continuity_probe(f, domain, cfg.walras_samples, seed=cfg.seed)
    block['continuity'] = {
        'max_ratio': continuity.max_ratio,
        'flagged': continuity.flagged,
        'ratio_limit': continuity.ratio_limit,
    }
    if mode == Mode.GND_GENERAL and isinstance(domain, BallCapCone):
        try:
            f = f.compose(RetractionMap.for_cone(domain.cone))
        except RetractionError:
            pass
    if mode == Mode.BROUWER:
        f = f.displacement()
    try:
        block['grid'] = grid_hs_oracle(domain, f).as_dict()
    except GridTooLargeError as e:
        block['grid'] = {'oracle': True, 'skipped': str(e)}
    return block


_RUNNERS = {
    Mode.VI: _run_vi,
    Mode.GND: _run_gnd,
    Mode.GND_GENERAL: _run_gnd_general,
    Mode.BROUWER: _run_brouwer,
    Mode.KAKUTANI: _run_kakutani,
    Mode.RETRACT: _run_retract,
}


def write_trace(path: Path, trace: Sequence[TracePoint], dim: int) -> None:
    '''CSV with header iter,residual,x0,...,x{N-1}.'''
    header = ','.join(['iter', 'residual', *(f'x{i}' for i in range(dim))])
    rows = np.array(
        [[t.iteration, t.residual, *np.asarray(t.point, dtype=float)] for t in trace]
    ).reshape(-1, 2 + dim)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(
        path, rows, fmt=['%d', '%.17g'] + ['%.17g'] * dim, delimiter=',', header=header, comments=''
    )


def run(spec: ProblemSpec, flags: RunFlags, base: SolverConfig | None = None) -> RunReport:
    '''Solve the problem in its mode, or flags.mode, and recheck the certificate.

    Solver failures give a best effort report that does not pass. Input errors raise.
    '''
    mode = flags.mode or spec.mode
    cfg = resolve_config(spec, flags, base or SolverConfig())
    started = time.perf_counter()
    logger.info('Running %s in mode %s with seed %d', spec.name or 'problem', mode, cfg.seed)

    if mode == Mode.VERIFY:
        if flags.certificate is None:
            raise SchemaError('certificate', 'verify mode needs --certificate')
        outcome = _Outcome(load_certificate(flags.certificate))
    else:
        outcome = _RUNNERS[mode](spec.with_mode(mode), cfg)
    checks = recheck(spec, outcome.certificate, cfg)

    report = RunReport(
        name=spec.name,
        mode=mode,
        certificate=outcome.certificate,
        checks=checks,
        config=cfg.as_dict(),
        problem=to_document(spec),
        warnings=outcome.warnings,
        error=outcome.error,
    )
    for warning in outcome.warnings:
        logger.warning('%s', warning)
    if flags.trace is not None and mode != Mode.VERIFY:
        write_trace(flags.trace, outcome.trace, spec.dim)
        report.trace_path = str(flags.trace)
    if flags.oracle:
        report.oracle = _oracle_block(spec, mode, cfg)
    report.wall_time = time.perf_counter() - started

    if report.passed:
        logger.info('Certificate passed in %.3f s', report.wall_time)
    elif report.error is not None:
        logger.error('Run failed: %s', report.error)
    else:
        logger.error('Certificate failed checks: %s', ' '.join(report.checks.failing) or 'none')
    if flags.output is not None:
        flags.output.parent.mkdir(parents=True, exist_ok=True)
        flags.output.write_text(report.to_json() + '\n')
    return report


@dataclass(frozen=True)
class BatchResult:
    path: Path
    exit_code: int
    report: RunReport | None = None
    error: str | None = None


def _run_file(path: Path, flags: RunFlags, base: SolverConfig) -> BatchResult:
    stem = path.stem
    per_file = RunFlags(
        mode=flags.mode,
        tol=flags.tol,
        max_iter=flags.max_iter,
        seed=flags.seed,
        trace=None if flags.trace is None else flags.trace / f'{stem}.trace.csv',
        oracle=flags.oracle,
        output=None if flags.output is None else flags.output / f'{stem}.report.json',
        certificate=flags.certificate,
    )
    try:
        report = run(load_problem(path), per_file, base)
    except INPUT_ERRORS as e:
        logger.debug('Batch entry failed', exc_info=True)  # noqa: LOG014
        logger.error("In '%s': %s", path, e)
        return BatchResult(path, EXIT_ERROR, error=str(e))
    return BatchResult(path, report.exit_code, report)


def run_batch(
    directory: Path, flags: RunFlags, base: SolverConfig, jobs: int = 1
) -> list[BatchResult]:
    '''Run every *.json problem in a directory, each in isolation.

    With jobs > 1 problems run in separate worker processes. Results are in file name
    order either way.
    '''
    paths = sorted(directory.glob('*.json'))
    if not paths:
        logger.warning("No problem files in '%s'", directory)
        return []
    if jobs <= 1:
        return [_run_file(p, flags, base) for p in paths]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(_run_file, p, flags, base) for p in paths]
        return [f.result() for f in futures]
