'''Named built-in problems, addressed from the command line with --builtin.'''

from __future__ import annotations

from collections.abc import Callable
from typing import Any

from .geometry import DimensionError
from .problem import ProblemError, ProblemSpec, parse_problem

_Builder = Callable[[int], dict[str, Any]]


class UnknownBuiltinError(ProblemError):
    def __init__(self, name: str) -> None:  # noqa: D107
        super().__init__(f"unknown built-in '{name}', choose from: {' '.join(names())}")
        self.name = name


def _eye(dim: int) -> list[list[float]]:
    return [[1.0 if i == j else 0.0 for j in range(dim)] for i in range(dim)]


def _neg_identity_simplex(dim: int) -> dict[str, Any]:
    return {'mode': 'vi', 'set': {'kind': 'simplex', 'dim': dim}, 'map': {'kind': 'neg-identity'}}


def _neg_identity_ball(dim: int) -> dict[str, Any]:
    return {'mode': 'vi', 'set': {'kind': 'ball', 'dim': dim}, 'map': {'kind': 'neg-identity'}}


def _rotation_ball(_: int) -> dict[str, Any]:
    return {'mode': 'vi', 'set': {'kind': 'ball', 'dim': 2}, 'map': {'kind': 'rotation'}}


def _economy(shares: list[list[float]], endowments: list[list[float]]) -> dict[str, Any]:
    return {
        'mode': 'gnd',
        'set': {'kind': 'simplex', 'dim': len(shares[0])},
        'map': {
            'kind': 'economy',
            'agents': [
                {'shares': s, 'endowment': w} for s, w in zip(shares, endowments, strict=True)
            ],
        },
    }


def _two_good_exchange(_: int) -> dict[str, Any]:
    return _economy([[0.5, 0.5], [0.5, 0.5]], [[1.0, 0.0], [0.0, 1.0]])


def _cobb_douglas_2x2(_: int) -> dict[str, Any]:
    # Clears at p = (4/9, 5/9)
    return _economy([[0.3, 0.7], [0.6, 0.4]], [[1.0, 2.0], [2.0, 1.0]])


def _orthant_neg_identity(dim: int) -> dict[str, Any]:
    return {
        'mode': 'gnd-general',
        'set': {'kind': 'ball-cone', 'dim': dim},
        'cone': {'generators': _eye(dim)},
        'map': {'kind': 'neg-identity'},
    }


def _ray_cone_demo(_: int) -> dict[str, Any]:
    # zeta(p) = (-1, 5 - p_1) on the ray through (1, 0)
    return {
        'mode': 'gnd-general',
        'set': {'kind': 'ball-cone', 'dim': 2},
        'cone': {'generators': [[1.0, 0.0]]},
        'map': {'kind': 'affine', 'A': [[0.0, 0.0], [-1.0, 0.0]], 'b': [-1.0, 5.0]},
    }


def _step_correspondence(_: int) -> dict[str, Any]:
    # Jumps from 0.75 to 0.25 across a transition of width 1e-3 around 0.5
    ramp = {'kind': 'ramp', 'high': 0.75, 'low': 0.25}
    return {
        'mode': 'kakutani',
        'set': {'kind': 'simplex', 'dim': 2},
        'correspondence': {
            'branches': [
                {**ramp, 'start': 0.5, 'stop': 0.501},
                {**ramp, 'start': 0.499, 'stop': 0.5},
            ],
        },
    }


def _constant_correspondence(_: int) -> dict[str, Any]:
    return {
        'mode': 'vi',
        'set': {'kind': 'simplex', 'dim': 2},
        'correspondence': {
            'branches': [
                {'kind': 'constant', 'value': [-1.0, 0.0]},
                {'kind': 'constant', 'value': [0.0, -1.0]},
            ],
        },
    }


def _interval_reflection(_: int) -> dict[str, Any]:
    # t -> 1 - t on the interval, read through the 2-simplex
    return {
        'mode': 'brouwer',
        'set': {'kind': 'simplex', 'dim': 2},
        'map': {'kind': 'affine', 'A': [[0.0, 1.0], [1.0, 0.0]], 'b': [0.0, 0.0]},
    }


def _simplex_contraction(_: int) -> dict[str, Any]:
    return {
        'mode': 'brouwer',
        'set': {'kind': 'simplex', 'dim': 2},
        'map': {'kind': 'affine', 'A': [[0.5, 0.0], [0.0, 0.5]], 'b': [0.25, 0.25]},
    }


def _ball_affine_contraction(_: int) -> dict[str, Any]:
    # Fixed point (0.08, 0.04)
    return {
        'mode': 'brouwer',
        'set': {'kind': 'ball', 'dim': 2},
        'map': {
            'kind': 'affine',
            'A': [[0.0, -0.5], [0.5, 0.0]],
            'b': [0.1, 0.0],
            'project': True,
        },
    }


# name: (builder, default dimension, whether the dimension can be overridden)
_BUILTINS: dict[str, tuple[_Builder, int, bool]] = {
    'neg-identity-simplex': (_neg_identity_simplex, 2, True),
    'neg-identity-ball': (_neg_identity_ball, 2, True),
    'rotation-ball': (_rotation_ball, 2, False),
    'two-good-exchange': (_two_good_exchange, 2, False),
    'cobb-douglas-2x2': (_cobb_douglas_2x2, 2, False),
    'orthant-neg-identity': (_orthant_neg_identity, 2, True),
    'ray-cone-demo': (_ray_cone_demo, 2, False),
    'step-correspondence': (_step_correspondence, 2, False),
    'constant-correspondence': (_constant_correspondence, 2, False),
    'interval-reflection': (_interval_reflection, 2, False),
    'simplex-contraction': (_simplex_contraction, 2, False),
    'ball-affine-contraction': (_ball_affine_contraction, 2, False),
}


def names() -> list[str]:
    return list(_BUILTINS)


def builtin(name: str, dim: int | None = None) -> ProblemSpec:
    '''Look up a built-in problem.

    Parameters
    ----------
    name
        One of names()
    dim
        Dimension override, only accepted by dimension generic problems
    '''
    try:
        build, default, generic = _BUILTINS[name]
    except KeyError as e:
        raise UnknownBuiltinError(name) from e
    if dim is None:
        dim = default
    elif not generic and dim != default:
        raise DimensionError(default, dim)
    doc = build(dim)
    doc['name'] = name
    return parse_problem(doc)
