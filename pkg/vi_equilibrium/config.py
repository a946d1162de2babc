from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass
from numbers import Real
from pathlib import Path, PosixPath
from typing import Any

import tomlkit
from tomlkit.items import Table
from tomlkit.toml_document import TOMLDocument

# FIXME: use XDG_CONFIG_HOME
CONFIG_DIR = PosixPath('~/.config/vi-equilibrium').expanduser()
CONFIG_NAME = 'vi_equilibrium.toml'
SEED_ENV = 'VI_EQ_SEED'


class ConfigError(Exception):
    pass


class KeyValidationError(ConfigError):
    def __init__(self, table: str | None, key: str, expect: str, actual: str) -> None:  # noqa: D107
        super().__init__(f"'{key}' invalid type {actual}")
        self.table = table
        self.key = key
        self.expect = expect
        self.actual = actual


class ValueValidationError(ConfigError):
    def __init__(self, key: str, value: Any, reason: str) -> None:  # noqa: D107 ANN401
        super().__init__(f"'{key}' = {value!r}: {reason}")
        self.key = key
        self.value = value
        self.reason = reason


class UnknownKeyError(ConfigError):
    def __init__(self, keys: list[str]) -> None:  # noqa: D107
        super().__init__(' '.join(keys))
        self.keys = keys


class InvalidTomlError(ConfigError):
    pass


class ConfigNotFoundError(ConfigError):
    pass


def _pop_table(cfg: TOMLDocument, table: str) -> Table:
    '''Pop a table from the document, an absent table reads as an empty one.'''
    try:
        entry = cfg.pop(table)
    except tomlkit.exceptions.NonExistentKey:
        return tomlkit.table()
    if not isinstance(entry, Table):
        raise UnknownKeyError([table])
    return entry


def _pop(table: Table, key: str, valtype: type, default: Any) -> Any:  # noqa: ANN401
    try:
        val = table.pop(key)
    except tomlkit.exceptions.NonExistentKey:
        return default
    # tomlkit wraps scalars, bools in particular are not bool subclasses
    val = val.unwrap() if hasattr(val, 'unwrap') else val
    if not isinstance(val, valtype) or (valtype is not bool and isinstance(val, bool)):
        raise KeyValidationError(table.display_name, key, valtype.__name__, type(val).__name__)
    return val


# TOML value type accepted for each field type
_TOML_TYPES: dict[str, type] = {'float': Real, 'int': int, 'bool': bool}


@dataclass(frozen=True)
class SolverConfig:
    '''Tolerances, budgets and seeds shared by every solver.

    Parameters
    ----------
    tol
        Residual target for certification. Correspondence and equilibrium gaps
        use 10 * tol.
    max_iter
        Total extragradient iterations for one HS solve, split over the starts
    step
        Initial and largest extragradient step
    backtrack
        Factor applied to the step when the Lipschitz test fails
    restarts
        Number of starting points tried
    epsilon0, decay
        Approximation radius schedule epsilon0 * decay**k
    grid_fallback_dim
        Largest dimension for which the grid search phase runs
    seed
        Seed for every random choice
    max_stages
        Most approximation stages tried
    stage_max_iter
        Iteration budget for each approximation stage
    covering_cap, probes
        Covering limits, see approximation.build_covering()
    polish
        Finish an approximation stage by solving for the continuous selection with
        the stage witness weights
    walras_samples
        Sample count for the advisory Walras and range checks
    '''

    tol: float = 1e-8
    max_iter: int = 100_000
    step: float = 0.5
    backtrack: float = 0.5
    restarts: int = 8
    epsilon0: float = 0.25
    decay: float = 0.5
    grid_fallback_dim: int = 4
    seed: int = 0
    max_stages: int = 12
    stage_max_iter: int = 2_000
    covering_cap: int = 100_000
    probes: int = 10_000
    polish: bool = True
    walras_samples: int = 256

    def __post_init__(self) -> None:
        if not self.tol > 0:
            raise ValueValidationError('tol', self.tol, 'must be positive')
        if not 0 < self.decay < 1:
            raise ValueValidationError('decay', self.decay, 'must be between 0 and 1')
        if not 0 < self.backtrack < 1:
            raise ValueValidationError('backtrack', self.backtrack, 'must be between 0 and 1')
        if not self.step > 0:
            raise ValueValidationError('step', self.step, 'must be positive')
        if not self.epsilon0 > 0:
            raise ValueValidationError('epsilon0', self.epsilon0, 'must be positive')
        counts = (
            'max_iter',
            'restarts',
            'max_stages',
            'stage_max_iter',
            'covering_cap',
            'probes',
            'walras_samples',
        )
        for key in counts:
            if getattr(self, key) < 1:
                raise ValueValidationError(key, getattr(self, key), 'must be at least 1')
        if self.grid_fallback_dim < 0:
            raise ValueValidationError('grid_fallback_dim', self.grid_fallback_dim, 'negative')

    @classmethod
    def field_types(cls) -> dict[str, type]:
        return {f.name: _TOML_TYPES[str(f.type)] for f in dataclasses.fields(cls)}

    def merged(self, **overrides: Any) -> SolverConfig:  # noqa: ANN401
        '''Copy with the given fields replaced, None values are ignored.'''
        unknown = set(overrides) - set(self.field_types())
        if unknown:
            raise UnknownKeyError(sorted(unknown))
        return dataclasses.replace(self, **{k: v for k, v in overrides.items() if v is not None})

    def as_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_file(cls, path: Path) -> SolverConfig:
        '''Load defaults from the [Solver] table of a TOML file.

        Checks:
        - File exists and is valid toml
        - The Solver table, if it exists, is a Table
        - Keys have values of the expected toml type and pass validation
        - No unexpected keys/all keys consumed

        Parameters
        ----------
        path
            Path to the config file, usually vi_equilibrium.toml
        '''
        path = path.expanduser()
        try:
            config = tomlkit.parse(path.read_text())
        except tomlkit.exceptions.ParseError as e:
            raise InvalidTomlError(*e.args) from e
        except FileNotFoundError as e:
            raise ConfigNotFoundError from e
        except IsADirectoryError as e:
            raise ConfigNotFoundError from e

        solver = _pop_table(config, 'Solver')
        values = {}
        for name, valtype in cls.field_types().items():
            default = getattr(cls, name)
            val = _pop(solver, name.replace('_', '-'), valtype, default)
            values[name] = float(val) if valtype is Real else val

        # Ensure there's no extra keys
        extra = ['Solver.' + k for k in solver]
        extra.extend(k for k in config)
        if extra:
            raise UnknownKeyError(extra)
        return cls(**values)

    @classmethod
    def template(cls, path: Path) -> None:
        config = tomlkit.document()
        config.add(tomlkit.comment("Default solver settings. Command line flags and the"))
        config.add(tomlkit.comment("'solver' block of a problem file take precedence."))

        solver = tomlkit.table()
        for f in dataclasses.fields(cls):
            solver[f.name.replace('_', '-')] = f.default
        config['Solver'] = solver

        path = path.expanduser()
        if path.exists():
            raise FileExistsError

        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(tomlkit.dumps(config))


def seed_from_env() -> int | None:
    '''Seed given by the VI_EQ_SEED environment variable, if set.'''
    raw = os.environ.get(SEED_ENV)
    if raw is None or not raw.strip():
        return None
    try:
        return int(raw)
    except ValueError as e:
        raise ValueValidationError(SEED_ENV, raw, 'must be an integer') from e
