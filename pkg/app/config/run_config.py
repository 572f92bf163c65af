import json
import logging
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PositiveInt, ValidationError

from app.config.settings import settings
from app.helpers.cache_helper import cache_helper
from app.helpers.errors import ConfigValidationError
from app.modules.arithmetic import FrequencyLiteral
from app.modules.cocycle import PotentialSpec
from app.modules.spectrum import default_energy_grid

logger = logging.getLogger(__name__)

# Fields that steer where and how a run executes but never what it computes.
EXECUTION_FIELDS = {"out", "threads", "cache"}


class TaskName(str, Enum):
    LYAPUNOV = "lyapunov"
    ACCELERATION = "acceleration"
    ROTATION = "rotation"
    IDS = "ids"
    SPECTRUM = "spectrum"
    GREEN = "green"
    BOUNDARY = "boundary"
    MAXIMAL = "maximal"
    REGIME_TABLE = "regime-table"
    IDENTITIES = "identities"
    THETA_LIPSCHITZ = "theta-lipschitz"
    ARITHMETIC = "arithmetic"


class EnergyGrid(BaseModel):
    """Explicit energies, or an equispaced grid (defaults to the containment interval plus margin)."""
    model_config = ConfigDict(extra="forbid")

    values: Optional[List[float]] = None
    start: Optional[float] = None
    stop: Optional[float] = None
    points: Optional[PositiveInt] = None

    def resolve(self, pot: PotentialSpec) -> np.ndarray:
        if self.values is not None:
            return np.asarray(self.values, dtype=np.float64)
        default = default_energy_grid(pot, self.points)
        start = default[0] if self.start is None else self.start
        stop = default[-1] if self.stop is None else self.stop
        return np.linspace(start, stop, self.points or settings.ENERGY_GRID_POINTS)


class TaskParams(BaseModel):
    """Numeric parameters; each task reads the ones it needs and falls back to settings."""
    model_config = ConfigDict(extra="forbid")

    energies: EnergyGrid = Field(default_factory=EnergyGrid)
    n: Optional[PositiveInt] = None
    m: Optional[PositiveInt] = None
    eps_imag: float = Field(0.0, ge=0.0)
    schedule: Optional[List[float]] = None
    method: str = "counting"
    truncation: Optional[PositiveInt] = None
    margin: Optional[float] = None
    sigma_grid: Optional[List[float]] = None
    E_samples: int = Field(0, ge=0)
    growth_check: bool = False
    z: List[Tuple[float, float]] = Field(default_factory=lambda: [(0.0, 1.0)])
    compare_ids: bool = True
    window: Optional[PositiveInt] = None
    y_min: float = Field(1e-2, gt=0.0)
    y_max: float = Field(1.0, gt=0.0)
    aspect: PositiveInt = 4
    levels: Optional[PositiveInt] = None
    lambdas: List[float] = Field(default_factory=lambda: [0.5, 1.0, 2.0])
    tol: Optional[float] = None
    gamma: Optional[float] = Field(None, gt=0.0)
    tau: Optional[float] = None
    k_max: Optional[int] = Field(None, ge=0)
    kappa: float = Field(0.2, gt=0.0)
    sdc_tau: float = Field(1.1, gt=1.0)
    sdc_k_max: PositiveInt = 100_000
    eps: float = Field(0.1, gt=0.0)
    strict_health: bool = True


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    task: TaskName
    potential: PotentialSpec = Field(default_factory=PotentialSpec.free)
    alpha: FrequencyLiteral = Field(default_factory=lambda: FrequencyLiteral(quotients=[1] * 40))
    params: TaskParams = Field(default_factory=TaskParams)
    seed: int = 0  # reserved; every algorithm is deterministic
    out: Optional[str] = None
    threads: Optional[PositiveInt] = None
    cache: Optional[str] = None

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        """Validate, reporting every offending field at once."""
        try:
            return cls.model_validate(data)
        except ValidationError as e:
            errors = [f"{'.'.join(str(p) for p in err['loc']) or '<root>'}: {err['msg']}" for err in e.errors()]
            raise ConfigValidationError(errors) from e

    @classmethod
    def load(cls, path: Path) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigValidationError([f"{path}: {e}"]) from e
        return cls.from_dict(data)

    def canonical(self) -> dict:
        """JSON form without execution-only fields."""
        return self.model_dump(mode="json", by_alias=True, exclude=EXECUTION_FIELDS)

    def config_hash(self) -> str:
        return cache_helper.cache_key({"tool_version": settings.APP_VERSION, "config": self.canonical()})


class RunRecord(BaseModel):
    config_hash: str
    tool_version: str
    task: TaskName
    timings: Dict[str, float]
    outputs: Dict[str, str]
    cache_hit: bool = False
