from pathlib import Path

import pytest
import tomlkit
from tomlkit.toml_document import TOMLDocument

from vi_equilibrium import config
from vi_equilibrium.config import SolverConfig, seed_from_env


def _dump(path: Path, doc: TOMLDocument) -> Path:
    with path.open('w+') as f:
        tomlkit.dump(doc, f)
        f.flush()
    return path


class TestSolverConfig:
    def test_valid(self, toml_path: Path, good_toml: TOMLDocument) -> None:
        conf = SolverConfig.from_file(toml_path)
        assert conf.tol == good_toml['Solver']['tol']
        assert conf.max_iter == good_toml['Solver']['max-iter']
        assert conf.restarts == good_toml['Solver']['restarts']
        assert conf.seed == good_toml['Solver']['seed']
        assert conf.polish is False
        # Everything else keeps its default
        assert conf.decay == SolverConfig.decay
        assert type(conf.tol) is float
        assert type(conf.polish) is bool

    def test_empty(self, tmp_path: Path) -> None:
        path = tmp_path / 'empty.toml'
        path.touch()
        assert SolverConfig.from_file(path) == SolverConfig()

    def test_no_solver_table(self, tmp_path: Path) -> None:
        path = tmp_path / 'comment.toml'
        path.write_text('# every solver setting left at its default\n')
        assert SolverConfig.from_file(path) == SolverConfig()

    def test_integer_float(self, tmp_path: Path, good_toml: TOMLDocument) -> None:
        good_toml['Solver']['step'] = 1
        conf = SolverConfig.from_file(_dump(tmp_path / 'int.toml', good_toml))
        assert conf.step == 1.0
        assert type(conf.step) is float

    def test_missing(self, tmp_path: Path) -> None:
        with pytest.raises(config.ConfigNotFoundError):
            SolverConfig.from_file(tmp_path / 'missing')

    def test_directory(self, tmp_path: Path) -> None:
        with pytest.raises(config.ConfigNotFoundError):
            SolverConfig.from_file(tmp_path)

    def test_invalid(self, tmp_path: Path) -> None:
        path = tmp_path / 'invalid.toml'
        with path.open('w+') as f:
            f.write('this is not the file you are looking for')
            f.flush()
        with pytest.raises(config.InvalidTomlError):
            SolverConfig.from_file(path)

    @pytest.mark.parametrize(
        'entry',
        [
            ('Solver', 'fake', 'foo'),
            ('Solver', 'max_iter', 10),
            ('Fake', tomlkit.table()),
            ('Fake', 3),
        ],
    )
    def test_extra_fields(self, tmp_path: Path, good_toml: TOMLDocument, entry: tuple) -> None:
        if len(entry) == 2:
            good_toml[entry[0]] = entry[1]
        elif len(entry) == 3:
            good_toml[entry[0]][entry[1]] = entry[2]
        else:
            raise TypeError

        with pytest.raises(config.UnknownKeyError):
            SolverConfig.from_file(_dump(tmp_path / 'extra_field.toml', good_toml))

    def test_solver_not_table(self, tmp_path: Path) -> None:
        doc = tomlkit.document()
        doc['Solver'] = 3
        with pytest.raises(config.UnknownKeyError):
            SolverConfig.from_file(_dump(tmp_path / 'scalar.toml', doc))

    @pytest.mark.parametrize(
        ('key', 'value'),
        [
            ('tol', 'small'),
            ('max-iter', 1.5),
            ('seed', True),
            ('polish', 1),
        ],
    )
    def test_types(
        self, tmp_path: Path, good_toml: TOMLDocument, key: str, value: object
    ) -> None:
        good_toml['Solver'][key] = value
        with pytest.raises(config.KeyValidationError) as e:
            SolverConfig.from_file(_dump(tmp_path / 'types.toml', good_toml))
        assert e.value.key == key

    @pytest.mark.parametrize(
        ('key', 'value'),
        [
            ('tol', 0.0),
            ('decay', 1.0),
            ('backtrack', 0.0),
            ('restarts', 0),
            ('grid-fallback-dim', -1),
        ],
    )
    def test_values(
        self, tmp_path: Path, good_toml: TOMLDocument, key: str, value: float
    ) -> None:
        good_toml['Solver'][key] = value
        with pytest.raises(config.ValueValidationError) as e:
            SolverConfig.from_file(_dump(tmp_path / 'values.toml', good_toml))
        assert e.value.key == key.replace('-', '_')

    def test_merged(self) -> None:
        conf = SolverConfig().merged(tol=1e-4, seed=None)
        assert conf.tol == 1e-4
        assert conf.seed == SolverConfig.seed
        with pytest.raises(config.UnknownKeyError) as e:
            SolverConfig().merged(tolerance=1.0)
        assert e.value.keys == ['tolerance']
        with pytest.raises(config.ValueValidationError):
            SolverConfig().merged(max_iter=0)

    def test_template(self, tmp_path: Path) -> None:
        path = tmp_path / 'nested' / 'faketemplate.toml'
        SolverConfig.template(path)
        # The template holds every default and loads back unchanged
        assert SolverConfig.from_file(path) == SolverConfig()
        assert 'max-iter' in path.read_text()

    def test_template_exists(self, tmp_path: Path) -> None:
        conf = tmp_path / 'config.toml'
        conf.touch()
        with pytest.raises(FileExistsError):
            SolverConfig.template(conf)


class TestSeedEnv:
    def test_unset(self, monkeypatch: pytest.MonkeyPatch) -> None:
        monkeypatch.delenv(config.SEED_ENV, raising=False)
        assert seed_from_env() is None

    @pytest.mark.parametrize(('raw', 'seed'), [('42', 42), (' 7 ', 7), ('', None)])
    def test_set(self, monkeypatch: pytest.MonkeyPatch, raw: str, seed: int | None) -> None:
        monkeypatch.setenv(config.SEED_ENV, raw)
        assert seed_from_env() == seed

    def test_invalid(self, monkeypatch: pytest.MonkeyPatch) -> None:
        monkeypatch.setenv(config.SEED_ENV, 'abc')
        with pytest.raises(config.ValueValidationError):
            seed_from_env()
