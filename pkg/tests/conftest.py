import numpy as np
import pytest

from uavterra import kernels
from uavterra.geometry import Region
from uavterra.terrain import BuildingSet, LogNormalHeights, generate_buildings

#: Fixed scene parameters used across test modules (1 km^2 urban drop).
SCENE_SEED = 1234
CORE = Region(0.0, 1000.0, 0.0, 1000.0)
GUARD = 100.0


@pytest.fixture(scope="session")
def core_region() -> Region:
    return CORE


@pytest.fixture(scope="session")
def scene() -> BuildingSet:
    """Default 500/km^2 cylinder scene over the guarded region."""
    return generate_buildings(CORE.expand(GUARD), 500.0, 8.0,
                              LogNormalHeights(3.0, 0.4), seed=SCENE_SEED)


def available_backends():
    names = ["numpy"]
    if kernels.have_compiled():
        names.append("compiled")
    return names


@pytest.fixture(params=available_backends())
def backend(request) -> str:
    return request.param


def random_scene(rng: np.random.Generator, n_buildings: int, extent: float = 200.0,
                 h_max: float = 40.0):
    """Small packed arrays for kernel-level tests."""
    bx = rng.uniform(0.0, extent, n_buildings)
    by = rng.uniform(0.0, extent, n_buildings)
    br = rng.uniform(2.0, 12.0, n_buildings)
    bh = rng.uniform(2.0, h_max, n_buildings)
    return bx, by, br, bh
