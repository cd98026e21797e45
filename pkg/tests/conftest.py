import numpy as np
import pytest

from hetloc.domain import Grid, TowerInventory
from hetloc.netcore import MlpConfig
from hetloc.worldgen import WorldConfig, generate_world


@pytest.fixture
def grid2x2():
    return Grid((0.0, 0.0), 100.0, 2, 2)


@pytest.fixture
def abc():
    return TowerInventory(("A", "B", "C"))


@pytest.fixture(scope="session")
def small_world():
    return generate_world(WorldConfig(area=(300.0, 200.0), cell_size=100.0,
                                      tower_count=8, seed=5))


@pytest.fixture
def tiny_config():
    return MlpConfig(layer_sizes=(4, 8, 3), epochs=5, batch_size=4, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
