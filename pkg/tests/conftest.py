import pytest

from lpdp import GuidanceConfig
from oracle import CachedOracle, HashedOracle, MotifCountOracle
from proposal import HashedRateModel, UniformModel
from seqcore import EditSpace, LengthBounds


@pytest.fixture
def space():
    return EditSpace(LengthBounds(1, 12))


@pytest.fixture
def uniform(space):
    return UniformModel(space)


@pytest.fixture
def hashed_model(space):
    return HashedRateModel(space, seed=7, scale=1.0)


@pytest.fixture
def gt_oracle():
    return CachedOracle(MotifCountOracle("GT"))


@pytest.fixture
def hashed_oracle():
    return CachedOracle(HashedOracle(seed=11, scale=2.0))


@pytest.fixture
def small_config():
    return GuidanceConfig(beta=2.0, delta=1.0, k_root=4, radius=1, k_loc=3, horizon=3, lam=0.5, tau=1.0)
