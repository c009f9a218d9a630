import os
from pathlib import Path

import pytest

from alphastable.experiments import ModelSet
from alphastable.hybrid import HybridModel, default_grid_dir

FULL_GRID_DIR = os.environ.get("ALPHASTABLE_FULL_GRID_DIR")


@pytest.fixture(scope="session")
def desk_dir() -> Path:
    return default_grid_dir(desk=True)


@pytest.fixture(scope="session")
def model1(desk_dir) -> HybridModel:
    return HybridModel.load(desk_dir, 1, desk=True)


@pytest.fixture(scope="session")
def model2(desk_dir) -> HybridModel:
    return HybridModel.load(desk_dir, 2, desk=True)


@pytest.fixture(scope="session")
def desk_models(desk_dir, model1, model2) -> ModelSet:
    return ModelSet(desk_dir, True, 1, {1: model1, 2: model2})


@pytest.fixture(scope="session")
def full_models():
    if not FULL_GRID_DIR:
        pytest.skip("set ALPHASTABLE_FULL_GRID_DIR to a directory of full-resolution grids")
    d = Path(FULL_GRID_DIR)
    return {1: HybridModel.load(d, 1, desk=False), 2: HybridModel.load(d, 2, desk=False)}
