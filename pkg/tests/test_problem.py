import json
from collections.abc import Callable
from pathlib import Path
from typing import Any

import pytest

from vi_equilibrium import problem, registry
from vi_equilibrium.geometry import Ball, BallCapCone, DimensionError, Simplex
from vi_equilibrium.maps import PRICE_FLOOR
from vi_equilibrium.problem import (
    Mode,
    build_correspondence,
    build_map,
    build_set,
    emit,
    load_problem,
    parse_problem,
)


class TestLoad:
    def test_economy(self, economy_path: Path) -> None:
        spec = load_problem(economy_path)
        assert spec.mode == Mode.GND
        assert spec.dim == 2
        assert spec.name == 'economy'
        assert spec.map['floor'] == PRICE_FLOOR
        assert spec.map['agents'][0]['endowment'] == [1.0, 2.0]
        f = build_map(spec.map, spec.dim)
        assert f([4 / 9, 5 / 9]) == pytest.approx([0.0, 0.0], abs=1e-12)

    def test_not_json(self, tmp_path: Path) -> None:
        path = tmp_path / 'bad.json'
        path.write_text('{"mode": ')
        with pytest.raises(problem.ParseError):
            load_problem(path)

    def test_missing(self, tmp_path: Path) -> None:
        with pytest.raises(problem.ParseError):
            load_problem(tmp_path / 'missing.json')

    def test_version(self, economy_doc: dict[str, Any]) -> None:
        economy_doc['format_version'] = '2'
        with pytest.raises(problem.SchemaError) as e:
            parse_problem(economy_doc)
        assert e.value.path == 'format_version'


class TestSchema:
    @pytest.mark.parametrize(
        ('path', 'edit'),
        [
            ('map.agents[0].shares', lambda d: d['map']['agents'][0].update(shares=[0.5, 0.6])),
            ('map.agents[1].shares', lambda d: d['map']['agents'][1].update(shares=[1.2, -0.2])),
            (
                'map.agents[0].endowment',
                lambda d: d['map']['agents'][0].update(endowment=[0, 0]),
            ),
            ('map.floor', lambda d: d['map'].update(floor=0)),
            ('mode', lambda d: d.update(mode='solve')),
            ('set.kind', lambda d: d['set'].update(kind='cube')),
            ('set.dim', lambda d: d['set'].update(dim=0)),
            ('extra', lambda d: d.update(extra=1)),
            ('map.agents[0].utility', lambda d: d['map']['agents'][0].update(utility='log')),
            ('solver.tolerance', lambda d: d.update(solver={'tolerance': 1e-6})),
            ('solver.max_iter', lambda d: d.update(solver={'max_iter': 1.5})),
            ('solver.polish', lambda d: d.update(solver={'polish': 1})),
            ('solver', lambda d: d.update(solver={'tol': -1.0})),
            ('map', lambda d: d.pop('map')),
        ],
    )
    def test_rejected(
        self, economy_doc: dict[str, Any], path: str, edit: Callable[[dict], object]
    ) -> None:
        edit(economy_doc)
        with pytest.raises(problem.SchemaError) as e:
            parse_problem(economy_doc)
        assert e.value.path == path

    def test_shares_message(self, economy_doc: dict[str, Any]) -> None:
        economy_doc['map']['agents'][0]['shares'] = [0.2, 0.2]
        with pytest.raises(problem.SchemaError, match='shares must lie on the simplex'):
            parse_problem(economy_doc)

    def test_dimension(self, economy_doc: dict[str, Any]) -> None:
        economy_doc['map']['agents'][0]['shares'] = [0.2, 0.2, 0.6]
        with pytest.raises(DimensionError):
            parse_problem(economy_doc)

    def test_solver_block(self, economy_doc: dict[str, Any]) -> None:
        economy_doc['solver'] = {'tol': 1e-6, 'max_iter': 50, 'polish': False, 'step': 1}
        spec = parse_problem(economy_doc)
        assert spec.solver == {'tol': 1e-6, 'max_iter': 50, 'polish': False, 'step': 1.0}
        assert isinstance(spec.solver['step'], float)

    def test_ball_cone_needs_cone(self) -> None:
        neg = {'kind': 'neg-identity'}
        doc = {'mode': 'vi', 'set': {'kind': 'ball-cone', 'dim': 2}, 'map': neg}
        with pytest.raises(problem.SchemaError) as e:
            parse_problem(doc)
        assert e.value.path == 'cone'

    def test_map_and_correspondence(self) -> None:
        doc = {
            'mode': 'vi',
            'set': {'kind': 'simplex', 'dim': 2},
            'map': {'kind': 'neg-identity'},
            'correspondence': {'branches': [{'kind': 'neg-identity'}]},
        }
        with pytest.raises(problem.SchemaError, match='not both'):
            parse_problem(doc)

    @pytest.mark.parametrize(
        ('doc', 'path'),
        [
            (
                {
                    'mode': 'kakutani',
                    'set': {'kind': 'simplex', 'dim': 2},
                    'map': {'kind': 'neg-identity'},
                },
                'correspondence',
            ),
            (
                {
                    'mode': 'brouwer',
                    'set': {'kind': 'simplex', 'dim': 2},
                    'correspondence': {'branches': [{'kind': 'neg-identity'}]},
                },
                'map',
            ),
            ({'mode': 'retract', 'set': {'kind': 'ball', 'dim': 2}}, 'cone'),
            (
                {
                    'mode': 'retract',
                    'set': {'kind': 'ball', 'dim': 2},
                    'cone': {'generators': [[1.0, 0.0]]},
                },
                'points',
            ),
        ],
    )
    def test_mode_requirements(self, doc: dict[str, Any], path: str) -> None:
        with pytest.raises(problem.SchemaError) as e:
            parse_problem(doc)
        assert e.value.path == path

    @pytest.mark.parametrize(
        'fmap',
        [
            {'kind': 'rotation'},
            {'kind': 'ramp', 'high': 0.75, 'low': 0.25, 'start': 0.5, 'stop': 0.6},
        ],
    )
    def test_planar_maps(self, fmap: dict[str, Any]) -> None:
        doc = {'mode': 'vi', 'set': {'kind': 'simplex', 'dim': 3}, 'map': fmap}
        with pytest.raises(DimensionError):
            parse_problem(doc)

    def test_ramp_order(self) -> None:
        ramp = {'kind': 'ramp', 'high': 0.75, 'low': 0.25, 'start': 0.5, 'stop': 0.5}
        doc = {'mode': 'vi', 'set': {'kind': 'simplex', 'dim': 2}, 'map': ramp}
        with pytest.raises(problem.SchemaError) as e:
            parse_problem(doc)
        assert e.value.path == 'map.stop'


class TestBuild:
    def test_sets(self) -> None:
        assert isinstance(build_set(registry.builtin('neg-identity-simplex', 3)), Simplex)
        assert isinstance(build_set(registry.builtin('rotation-ball')), Ball)
        cap = build_set(registry.builtin('orthant-neg-identity', 3))
        assert isinstance(cap, BallCapCone)
        assert cap.cone.generators.shape == (3, 3)

    def test_projected_affine(self) -> None:
        spec = registry.builtin('ball-affine-contraction')
        domain = build_set(spec)
        f = build_map(spec.map, spec.dim, domain)
        assert domain.contains(f([10.0, 10.0]))

    def test_correspondence(self) -> None:
        spec = registry.builtin('step-correspondence')
        zeta = build_correspondence(spec)
        assert len(zeta.branches) == 2
        assert not zeta.walras_filtered
        assert zeta.distance([0.5, 0.5], [0.5, 0.5]) == pytest.approx(0.0, abs=1e-9)

    def test_map_as_correspondence(self) -> None:
        zeta = build_correspondence(registry.builtin('two-good-exchange'))
        assert len(zeta.branches) == 1


class TestEmit:
    @pytest.mark.parametrize('name', registry.names())
    def test_reparse(self, name: str) -> None:
        spec = registry.builtin(name)
        again = parse_problem(json.loads(emit(spec)))
        assert again == spec
        assert emit(again) == emit(spec)

    def test_sorted(self, economy_doc: dict[str, Any]) -> None:
        text = emit(parse_problem(economy_doc))
        keys = list(json.loads(text))
        assert keys == sorted(keys)
        assert '"format_version": "1"' in text

    def test_with_mode(self, economy_doc: dict[str, Any]) -> None:
        spec = parse_problem(economy_doc)
        assert spec.with_mode(Mode.VI).mode == Mode.VI
        assert spec.mode == Mode.GND


class TestRegistry:
    def test_names(self) -> None:
        assert 'two-good-exchange' in registry.names()
        assert len(registry.names()) == len(set(registry.names()))

    def test_unknown(self) -> None:
        with pytest.raises(registry.UnknownBuiltinError, match='two-good-exchange'):
            registry.builtin('no-such-problem')

    def test_dimension_generic(self) -> None:
        assert registry.builtin('neg-identity-ball', 5).dim == 5

    def test_dimension_fixed(self) -> None:
        with pytest.raises(DimensionError):
            registry.builtin('cobb-douglas-2x2', 3)
