'''Problem documents: JSON descriptions of a set, a cone, a map or correspondence,
solver overrides and a mode.

A document looks like::

    {
        "format_version": "1",
        "mode": "gnd",
        "set": {"kind": "simplex", "dim": 2},
        "map": {"kind": "economy", "agents": [{"shares": [0.5, 0.5], "endowment": [1, 0]}]},
        "solver": {"tol": 1e-8}
    }

Cones are given as {"generators": [[...], ...]}, correspondences as
{"branches": [<map>, ...], "weak_form": false}.
'''

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from enum import StrEnum
from pathlib import Path
from typing import Any

import numpy as np

from .config import ConfigError, SolverConfig
from .geometry import (
    Ball,
    BallCapCone,
    ConvexCompactSet,
    DimensionError,
    PolyhedralCone,
    Simplex,
)
from .maps import PRICE_FLOOR, CobbDouglasEconomy, CorrespondenceOracle, MapOracle

logger = logging.getLogger(__name__)

FORMAT_VERSION = '1'
_SIMPLEX_TOL = 1e-9


class Mode(StrEnum):
    VI = 'vi'
    GND = 'gnd'
    GND_GENERAL = 'gnd-general'
    BROUWER = 'brouwer'
    KAKUTANI = 'kakutani'
    RETRACT = 'retract'
    VERIFY = 'verify'


class ProblemError(Exception):
    pass


class ParseError(ProblemError):
    pass


class SchemaError(ProblemError):
    def __init__(self, path: str, reason: str) -> None:  # noqa: D107
        super().__init__(f"'{path}': {reason}")
        self.path = path
        self.reason = reason


@dataclass(frozen=True)
class ProblemSpec:
    mode: Mode
    set: dict[str, Any]
    cone: dict[str, Any] | None = None
    map: dict[str, Any] | None = None
    correspondence: dict[str, Any] | None = None
    solver: dict[str, Any] = field(default_factory=dict)
    points: list[list[float]] | None = None
    witness: list[float] | None = None
    name: str | None = None

    @property
    def dim(self) -> int:
        return int(self.set['dim'])

    def with_mode(self, mode: Mode) -> ProblemSpec:
        return replace(self, mode=mode)


def _require(doc: dict[str, Any], key: str, path: str) -> Any:  # noqa: ANN401
    if key not in doc:
        raise SchemaError(f'{path}.{key}' if path else key, 'is required')
    return doc[key]


def _floats(value: Any, path: str, length: int | None = None) -> list[float]:  # noqa: ANN401
    if not isinstance(value, list) or not all(
        isinstance(v, int | float) and not isinstance(v, bool) for v in value
    ):
        raise SchemaError(path, 'must be a list of numbers')
    if length is not None and len(value) != length:
        raise DimensionError(length, len(value))
    if not all(np.isfinite(v) for v in value):
        raise SchemaError(path, 'must be finite')
    return [float(v) for v in value]


def _matrix(value: Any, path: str, dim: int) -> list[list[float]]:  # noqa: ANN401
    if not isinstance(value, list):
        raise SchemaError(path, 'must be a list of rows')
    return [_floats(row, f'{path}[{i}]', dim) for i, row in enumerate(value)]


def _check_keys(doc: dict[str, Any], allowed: set[str], path: str) -> None:
    extra = sorted(set(doc) - allowed)
    if extra:
        raise SchemaError(f'{path}.{extra[0]}' if path else extra[0], 'unknown key')


def _parse_set(doc: Any) -> dict[str, Any]:  # noqa: ANN401
    if not isinstance(doc, dict):
        raise SchemaError('set', 'must be an object')
    _check_keys(doc, {'kind', 'dim'}, 'set')
    kind = _require(doc, 'kind', 'set')
    if kind not in (Simplex.kind, Ball.kind, BallCapCone.kind):
        raise SchemaError('set.kind', f'unknown set kind {kind!r}')
    dim = _require(doc, 'dim', 'set')
    if not isinstance(dim, int) or isinstance(dim, bool) or dim < 1:
        raise SchemaError('set.dim', 'must be a positive integer')
    return {'kind': kind, 'dim': dim}


def _parse_map(doc: Any, dim: int, path: str) -> dict[str, Any]:  # noqa: ANN401, C901, PLR0912
    if not isinstance(doc, dict):
        raise SchemaError(path, 'must be an object')
    kind = _require(doc, 'kind', path)
    if kind in ('neg-identity', 'rotation'):
        _check_keys(doc, {'kind'}, path)
        if kind == 'rotation' and dim != 2:
            raise DimensionError(2, dim)
        return {'kind': kind}
    if kind == 'constant':
        _check_keys(doc, {'kind', 'value'}, path)
        return {'kind': kind, 'value': _floats(_require(doc, 'value', path), f'{path}.value', dim)}
    if kind == 'affine':
        _check_keys(doc, {'kind', 'A', 'b', 'project'}, path)
        matrix = _matrix(_require(doc, 'A', path), f'{path}.A', dim)
        if len(matrix) != dim:
            raise DimensionError(dim, len(matrix))
        parsed = {
            'kind': kind,
            'A': matrix,
            'b': _floats(_require(doc, 'b', path), f'{path}.b', dim),
        }
        if doc.get('project', False):
            parsed['project'] = True
        return parsed
    if kind == 'polynomial':
        _check_keys(doc, {'kind', 'terms'}, path)
        terms = _require(doc, 'terms', path)
        if not isinstance(terms, list) or not terms:
            raise SchemaError(f'{path}.terms', 'must be a nonempty list')
        parsed_terms = []
        for i, term in enumerate(terms):
            tpath = f'{path}.terms[{i}]'
            if not isinstance(term, dict):
                raise SchemaError(tpath, 'must be an object')
            _check_keys(term, {'coef', 'powers'}, tpath)
            powers = _require(term, 'powers', tpath)
            if not isinstance(powers, list) or len(powers) != dim or not all(
                isinstance(p, int) and not isinstance(p, bool) and p >= 0 for p in powers
            ):
                raise SchemaError(f'{tpath}.powers', f'must be {dim} nonnegative integers')
            coef = _floats(_require(term, 'coef', tpath), f'{tpath}.coef', dim)
            parsed_terms.append({'coef': coef, 'powers': list(powers)})
        return {'kind': kind, 'terms': parsed_terms}
    if kind == 'economy':
        return _parse_economy(doc, dim, path)
    if kind == 'ramp':
        _check_keys(doc, {'kind', 'high', 'low', 'start', 'stop'}, path)
        if dim != 2:
            raise DimensionError(2, dim)
        keys = ('high', 'low', 'start', 'stop')
        numbers = _floats([_require(doc, k, path) for k in keys], path)
        values = dict(zip(keys, numbers, strict=True))
        if not values['stop'] > values['start']:
            raise SchemaError(f'{path}.stop', 'must be greater than start')
        return {'kind': kind, **values}
    raise SchemaError(f'{path}.kind', f'unknown map kind {kind!r}')


def _parse_economy(doc: dict[str, Any], dim: int, path: str) -> dict[str, Any]:
    _check_keys(doc, {'kind', 'agents', 'floor'}, path)
    agents = _require(doc, 'agents', path)
    if not isinstance(agents, list) or not agents:
        raise SchemaError(f'{path}.agents', 'must be a nonempty list')
    parsed = []
    for i, agent in enumerate(agents):
        apath = f'{path}.agents[{i}]'
        if not isinstance(agent, dict):
            raise SchemaError(apath, 'must be an object')
        _check_keys(agent, {'shares', 'endowment'}, apath)
        shares = _floats(_require(agent, 'shares', apath), f'{apath}.shares', dim)
        if min(shares) < 0 or abs(sum(shares) - 1.0) > _SIMPLEX_TOL:
            raise SchemaError(f'{apath}.shares', 'shares must lie on the simplex')
        endowment = _floats(_require(agent, 'endowment', apath), f'{apath}.endowment', dim)
        if min(endowment) < 0 or max(endowment) <= 0:
            raise SchemaError(
                f'{apath}.endowment', 'endowments must be nonnegative and not all zero'
            )
        parsed.append({'shares': shares, 'endowment': endowment})
    floor = doc.get('floor', PRICE_FLOOR)
    if not isinstance(floor, int | float) or isinstance(floor, bool) or not floor > 0:
        raise SchemaError(f'{path}.floor', 'must be a positive number')
    return {'kind': 'economy', 'agents': parsed, 'floor': float(floor)}


def _parse_solver(doc: Any) -> dict[str, Any]:  # noqa: ANN401
    if not isinstance(doc, dict):
        raise SchemaError('solver', 'must be an object')
    types = SolverConfig.field_types()
    parsed = {}
    for key, value in doc.items():
        if key not in types:
            raise SchemaError(f'solver.{key}', 'unknown solver setting')
        expect = types[key]
        if isinstance(value, bool) != (expect is bool) or not isinstance(value, expect):
            raise SchemaError(f'solver.{key}', f'must be of type {expect.__name__}')
        parsed[key] = float(value) if expect not in (int, bool) else value
    try:
        SolverConfig().merged(**parsed)
    except ConfigError as e:
        raise SchemaError('solver', str(e)) from e
    return parsed


def parse_problem(doc: Any) -> ProblemSpec:  # noqa: ANN401, C901
    '''Validate a decoded problem document.'''
    if not isinstance(doc, dict):
        raise SchemaError('', 'document must be an object')
    _check_keys(
        doc,
        {
            'format_version',
            'mode',
            'name',
            'set',
            'cone',
            'map',
            'correspondence',
            'solver',
            'points',
            'witness',
        },
        '',
    )
    version = doc.get('format_version', FORMAT_VERSION)
    if version != FORMAT_VERSION:
        raise SchemaError('format_version', f'unsupported version {version!r}')
    try:
        mode = Mode(_require(doc, 'mode', ''))
    except ValueError as e:
        raise SchemaError('mode', f'must be one of {", ".join(Mode)}') from e
    domain = _parse_set(_require(doc, 'set', ''))
    dim = domain['dim']

    cone = None
    if doc.get('cone') is not None:
        if not isinstance(doc['cone'], dict):
            raise SchemaError('cone', 'must be an object')
        _check_keys(doc['cone'], {'generators'}, 'cone')
        cone = {'generators': _matrix(_require(doc['cone'], 'generators', 'cone'), 'cone', dim)}
    if domain['kind'] == BallCapCone.kind and cone is None:
        raise SchemaError('cone', f'is required for a {BallCapCone.kind} set')

    fmap = None if doc.get('map') is None else _parse_map(doc['map'], dim, 'map')
    corr = None
    if doc.get('correspondence') is not None:
        raw = doc['correspondence']
        if not isinstance(raw, dict):
            raise SchemaError('correspondence', 'must be an object')
        _check_keys(raw, {'branches', 'weak_form'}, 'correspondence')
        branches = _require(raw, 'branches', 'correspondence')
        if not isinstance(branches, list) or not branches:
            raise SchemaError('correspondence.branches', 'must be a nonempty list')
        corr = {
            'branches': [
                _parse_map(b, dim, f'correspondence.branches[{i}]') for i, b in enumerate(branches)
            ],
            'weak_form': bool(raw.get('weak_form', False)),
        }
    if fmap is not None and corr is not None:
        raise SchemaError('correspondence', 'give either map or correspondence, not both')
    if mode not in (Mode.RETRACT,) and fmap is None and corr is None:
        raise SchemaError('map', f'mode {mode} needs a map or a correspondence')
    if mode == Mode.KAKUTANI and corr is None:
        raise SchemaError('correspondence', 'kakutani mode needs a correspondence')
    if mode == Mode.BROUWER and fmap is None:
        raise SchemaError('map', 'brouwer mode needs a map')

    points = None
    if doc.get('points') is not None:
        points = _matrix(doc['points'], 'points', dim)
    if mode == Mode.RETRACT:
        if cone is None:
            raise SchemaError('cone', 'retract mode needs a cone')
        if not points:
            raise SchemaError('points', 'retract mode needs points to retract')
    witness = None
    if doc.get('witness') is not None:
        witness = _floats(doc['witness'], 'witness', dim)
    name = doc.get('name')
    if name is not None and not isinstance(name, str):
        raise SchemaError('name', 'must be a string')

    return ProblemSpec(
        mode=mode,
        set=domain,
        cone=cone,
        map=fmap,
        correspondence=corr,
        solver=_parse_solver(doc.get('solver', {})),
        points=points,
        witness=witness,
        name=name,
    )


def load_problem(path: Path) -> ProblemSpec:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ParseError(f'{path}: {e}') from e
    except OSError as e:
        raise ParseError(f'{path}: {e.strerror}') from e
    return parse_problem(doc)


def to_document(spec: ProblemSpec) -> dict[str, Any]:
    doc: dict[str, Any] = {
        'format_version': FORMAT_VERSION,
        'mode': str(spec.mode),
        'set': spec.set,
        'solver': spec.solver,
    }
    optional = {
        'name': spec.name,
        'cone': spec.cone,
        'map': spec.map,
        'correspondence': spec.correspondence,
        'points': spec.points,
        'witness': spec.witness,
    }
    doc.update({k: v for k, v in optional.items() if v is not None})
    return doc


def emit(spec: ProblemSpec) -> str:
    return json.dumps(to_document(spec), sort_keys=True, indent=2)


def build_cone(spec: ProblemSpec) -> PolyhedralCone | None:
    if spec.cone is None:
        return None
    return PolyhedralCone.from_generators(spec.cone['generators'], spec.dim)


def whole_space(dim: int) -> PolyhedralCone:
    eye = np.eye(dim)
    return PolyhedralCone.from_generators(np.vstack([eye, -eye]), dim)


def build_set(spec: ProblemSpec) -> ConvexCompactSet:
    kind = spec.set['kind']
    if kind == Simplex.kind:
        return Simplex(spec.dim)
    if kind == Ball.kind:
        return Ball(spec.dim)
    cone = build_cone(spec)
    if cone is None:
        raise SchemaError('cone', f'is required for a {BallCapCone.kind} set')
    return BallCapCone(cone)


def build_map(desc: dict[str, Any], dim: int, domain: ConvexCompactSet | None = None) -> MapOracle:
    kind = desc['kind']
    if kind == 'neg-identity':
        return MapOracle.neg_identity(dim)
    if kind == 'rotation':
        return MapOracle.rotation()
    if kind == 'constant':
        return MapOracle.constant(desc['value'])
    if kind == 'affine':
        return MapOracle.affine(
            desc['A'], desc['b'], project_onto=domain if desc.get('project') else None
        )
    if kind == 'polynomial':
        return MapOracle.polynomial(dim, desc['terms'])
    if kind == 'economy':
        economy = CobbDouglasEconomy(
            np.array([a['shares'] for a in desc['agents']]),
            np.array([a['endowment'] for a in desc['agents']]),
            desc['floor'],
        )
        return economy.as_oracle()
    if kind == 'ramp':
        return MapOracle.ramp(desc['high'], desc['low'], desc['start'], desc['stop'])
    raise SchemaError('map.kind', f'unknown map kind {kind!r}')


def build_correspondence(
    spec: ProblemSpec, domain: ConvexCompactSet | None = None
) -> CorrespondenceOracle:
    '''The problem's correspondence, or its map as a single branch one.'''
    if spec.correspondence is None:
        if spec.map is None:
            raise SchemaError('correspondence', 'problem has neither map nor correspondence')
        return CorrespondenceOracle.from_map(build_map(spec.map, spec.dim, domain))
    branches = tuple(build_map(b, spec.dim, domain) for b in spec.correspondence['branches'])
    return CorrespondenceOracle(spec.dim, branches, spec.correspondence['weak_form'])
