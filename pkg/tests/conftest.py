# ruff: noqa: D103
import json
from pathlib import Path
from typing import Any

import numpy as np
import pytest
import tomlkit
from tomlkit.toml_document import TOMLDocument

from vi_equilibrium.config import SEED_ENV, SolverConfig
from vi_equilibrium.geometry import Ball, BallCapCone, PolyhedralCone, Simplex


@pytest.fixture(autouse=True)
def no_seed_env(monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.delenv(SEED_ENV, raising=False)


@pytest.fixture
def good_toml() -> TOMLDocument:
    cfg = tomlkit.document()

    solver = tomlkit.table()
    solver['tol'] = 1e-7
    solver['max-iter'] = 5000
    solver['restarts'] = 4
    solver['seed'] = 11
    solver['polish'] = False

    cfg['Solver'] = solver
    return cfg


@pytest.fixture
def toml_path(tmp_path: Path, good_toml: TOMLDocument) -> Path:
    path = tmp_path / 'vi_equilibrium.toml'
    with path.open('w+') as f:
        tomlkit.dump(good_toml, f)
        f.flush()
    return path


@pytest.fixture
def cfg() -> SolverConfig:
    return SolverConfig()


@pytest.fixture
def quick_cfg() -> SolverConfig:
    # Smaller coverings and budgets for the approximation stages
    return SolverConfig(tol=1e-6, probes=2000, max_stages=8, walras_samples=64)


@pytest.fixture
def simplex2() -> Simplex:
    return Simplex(2)


@pytest.fixture
def ball2() -> Ball:
    return Ball(2)


@pytest.fixture
def orthant() -> PolyhedralCone:
    return PolyhedralCone.from_generators([[1.0, 0.0], [0.0, 1.0]])


@pytest.fixture
def ray() -> PolyhedralCone:
    return PolyhedralCone.from_generators([[1.0, 0.0]])


@pytest.fixture
def orthant_cap(orthant: PolyhedralCone) -> BallCapCone:
    return BallCapCone(orthant)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240601)


@pytest.fixture
def economy_doc() -> dict[str, Any]:
    return {
        'format_version': '1',
        'mode': 'gnd',
        'name': 'economy',
        'set': {'kind': 'simplex', 'dim': 2},
        'map': {
            'kind': 'economy',
            'agents': [
                {'shares': [0.3, 0.7], 'endowment': [1, 2]},
                {'shares': [0.6, 0.4], 'endowment': [2, 1]},
            ],
        },
    }


@pytest.fixture
def economy_path(tmp_path: Path, economy_doc: dict[str, Any]) -> Path:
    path = tmp_path / 'economy.json'
    path.write_text(json.dumps(economy_doc))
    return path

