import math

import numpy as np
import pytest

from app.config.settings import Settings
from app.helpers.cache_helper import CacheHelper
from app.modules.arithmetic import Frequency
from app.modules.cocycle import HarmonicTerm, PotentialSpec


@pytest.fixture(scope="session")
def golden() -> Frequency:
    """Golden-mean frequency with 40 stored quotients."""
    return Frequency.golden_mean(40)


@pytest.fixture(scope="session")
def free_pot() -> PotentialSpec:
    """Free Laplacian (V ≡ 0)."""
    return PotentialSpec.free()


@pytest.fixture(scope="session")
def amo2() -> PotentialSpec:
    """Supercritical almost Mathieu operator, λ = 2."""
    return PotentialSpec.amo(2.0)


@pytest.fixture(scope="session")
def amo_half() -> PotentialSpec:
    """Subcritical almost Mathieu operator, λ = 0.5."""
    return PotentialSpec.amo(0.5)


@pytest.fixture(scope="session")
def amo2_perturbed() -> PotentialSpec:
    """λ = 2 with ε = 0.1 and v = cos 4πx."""
    return PotentialSpec.amo(2.0, 0.1, [HarmonicTerm(k=2, cos=1.0)])


@pytest.fixture
def mock_settings():
    """Settings with a private cache directory and sequential execution."""
    return Settings(
        APP_NAME="qpspec",
        APP_VERSION="0.1.0",
        DEBUG=True,
        CACHE_DIR=".test-cache",
        CACHE_ENABLED=True,
        THREADS=1,
        PARALLEL_BACKEND="sequential",
    )


@pytest.fixture
def tmp_cache(tmp_path) -> CacheHelper:
    """Cache helper rooted in a temporary directory."""
    return CacheHelper(str(tmp_path / "cache"))


def free_ids_closed_form(E):
    """N(E) = 1 - arccos(E/2)/π on [-2, 2] for the free Laplacian."""
    E = np.clip(np.asarray(E, dtype=np.float64), -2.0, 2.0)
    return 1.0 - np.arccos(E / 2.0) / math.pi


def free_green_closed_form(z: complex) -> complex:
    """G(z) = -1/sqrt(z² - 4) on the branch with G ~ -1/z at infinity."""
    root = np.sqrt(complex(z) - 2.0) * np.sqrt(complex(z) + 2.0)
    return -1.0 / root
