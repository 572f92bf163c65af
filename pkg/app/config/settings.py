import math
from typing import Literal
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Toolkit settings loaded from environment variables."""

    # Application
    APP_NAME: str = "qpspec"
    APP_VERSION: str = "0.1.0"
    DEBUG: bool = False

    # Output and cache
    OUTPUT_DIR: str = "results"
    CACHE_DIR: str = ".qpspec-cache"
    CACHE_ENABLED: bool = True
    CACHE_LOCK_TIMEOUT: int = 600  # seconds before a stale lock is broken

    # Parallelism
    THREADS: int = 1
    PARALLEL_BACKEND: Literal["loky", "threading", "sequential"] = "loky"
    PHASE_BLOCK: int = 256  # fixed block size, independent of THREADS

    # Extended precision
    MPMATH_DPS: int = 80
    FIXED_POINT_BITS: int = 192

    # Cocycle products
    RESCALE_CADENCE: int = 32
    OVERFLOW_LOG_BUDGET: float = 600.0

    # Lyapunov exponent and acceleration
    DEFAULT_ITERATES: int = 10_000
    DEFAULT_PHASES: int = 1024
    SMOKE_ITERATES: int = 1_000
    SMOKE_PHASES: int = 256
    ACCELERATION_SCHEDULE: list[float] = [2.0 ** -k for k in range(3, 10)]
    ACCELERATION_FIT_POINTS: int = 4
    OMEGA_SNAP_THRESHOLD: float = 0.2
    CONVEXITY_TOL: float = 1e-3
    REGIME_TOL: float = 0.01

    # Rotation number
    ROTATION_DEGENERATE_TOL: float = 1e-12
    ROTATION_NUDGE: float = 1e-8
    ROTATION_SPREAD_FACTOR: float = 10.0
    ROTATION_ITERATES: int = 1_000
    ROTATION_PHASES: int = 64

    # Truncated operators and IDS
    IDS_TRUNCATION: int = 2000
    IDS_PHASES: int = 16
    EIGEN_TOL: float = 1e-10
    ENERGY_GRID_POINTS: int = 401
    ENERGY_GRID_MARGIN: float = 0.1

    # Green's function
    GREEN_WINDOW_MIN: int = 200
    GREEN_WINDOW_FACTOR: float = 8.0
    GREEN_PHASES: int = 64  # floor for the adaptive phase count
    GREEN_PHASE_FACTOR: float = 2.0
    GREEN_PHASES_MAX: int = 16_384
    GREEN_IDS_GRID_POINTS: int = 2001
    SMOOTH_FIT_DEGREE: int = 8
    BOUNDARY_FIT_POINTS: int = 3
    BOUNDARY_FLAG_FLOOR: float = 1e-4
    POLE_CELLS: int = 2

    # Theta membership conventions
    THETA_GAMMA: float = 0.01
    THETA_TAU: float = 2.0
    THETA_K_MAX: int = 1000

    # Identity residual tolerances
    IDS_ROTATION_TOL_FREE: float = 0.01
    IDS_ROTATION_TOL: float = 0.02
    THOULESS_TOL: float = 0.02
    DERIVATIVE_TOL: float = 0.01

    model_config = SettingsConfigDict(env_file=".env", case_sensitive=True)

    def green_window(self, im_z: float) -> int:
        """Default resolvent window for a given imaginary part."""
        return max(self.GREEN_WINDOW_MIN, math.ceil(self.GREEN_WINDOW_FACTOR / im_z))


# Global settings instance
settings = Settings()
