from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.enums.EMethod import EMethod
from src.enums.EWorld import ESweepAxis, EWorld
from src.schemas.bandit_record import Seed
from src.schemas.train_config import TrainConfig


class WorldConfig(BaseModel):
    """Generator parameters; each world reads the fields it needs."""

    model_config = ConfigDict(extra='forbid', frozen=True)

    s: float = Field(default=0.3, ge=0, lt=1)
    alpha: float = Field(default=0.0, ge=0, le=1)
    strict_ec: bool = True
    mu: float = 1.0
    n_train: int = Field(default=500, ge=1)
    n_test: int = Field(default=10000, ge=1)
    n_tune: int = Field(default=1000, ge=0)
    dim: int = Field(default=10, ge=1)
    n_labels: int = Field(default=6, ge=2)
    num_workers: int = Field(default=1, ge=1)
    rho: float = Field(default=0.8, gt=0, le=1)
    worker_costs: Optional[list[float]] = None
    # Per-worker NoiseHBM accuracies for the multilabel world (rho for every worker when unset)
    worker_accuracies: Optional[list[float]] = None
    # Multilabel data is generated at n_train instances and split by this ratio
    test_ratio: float = Field(default=0.3, gt=0, lt=1)
    # Worker protocol draws
    accuracy_range: tuple[float, float] = (0.7, 1.0)
    cost_range: tuple[float, float] = (0.0, 0.4)


class SweepConfig(BaseModel):
    model_config = ConfigDict(extra='forbid', frozen=True)

    axis: ESweepAxis
    values: list[float] = Field(min_length=1)


class ExperimentConfig(BaseModel):
    """A full experiment: world, methods, repetitions, training settings and an optional sweep."""

    model_config = ConfigDict(extra='forbid', frozen=True)

    name: str = "experiment"
    world: EWorld = EWorld.DETERMINISTIC
    world_params: WorldConfig = Field(default_factory=WorldConfig)
    methods: list[EMethod] = Field(default_factory=lambda: [EMethod.HUMAN, EMethod.AO, EMethod.JC])
    repetitions: int = Field(default=10, ge=1)
    seed: Seed = 0
    train: TrainConfig = Field(default_factory=TrainConfig)
    sweep: Optional[SweepConfig] = None
    workers: Optional[int] = Field(default=None, ge=1)

    @field_validator('methods')
    @classmethod
    def methods_not_empty(cls, value: list[EMethod]) -> list[EMethod]:
        if not value:
            raise ValueError("methods must not be empty")
        if len(set(value)) != len(value):
            raise ValueError("methods must not repeat")
        return value

    @model_validator(mode='after')
    def worker_costs_match(self):
        costs = self.world_params.worker_costs
        if costs is not None and len(costs) != self.world_params.num_workers:
            raise ValueError("worker_costs must list one cost per worker")
        accuracies = self.world_params.worker_accuracies
        if accuracies is not None and len(accuracies) != self.world_params.num_workers:
            raise ValueError("worker_accuracies must list one accuracy per worker")
        if accuracies is not None and any(not 0.0 < a <= 1.0 for a in accuracies):
            raise ValueError("worker accuracies must lie in (0, 1]")
        return self


class RepetitionRow(BaseModel):
    """Outcome of one method in one repetition."""

    method: str
    repetition: int
    total_reward: Optional[float] = None
    human_fraction: Optional[float] = None
    seed: int
    sweep_value: Optional[float] = None
    failed: bool = False
    error: str = ""
    human_counts: list[int] = Field(default_factory=list)


class SummaryRow(BaseModel):
    method: str
    mean: float
    stderr: float
    n: int
    mean_human_fraction: float
    sweep_value: Optional[float] = None


class TTestResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    t: float
    dof: float
    p: float
    significant: bool


class SignificanceRow(BaseModel):
    method_a: str
    method_b: str
    t: float
    dof: float
    p: float
    significant: bool
    sweep_value: Optional[float] = None


class ExperimentResult(BaseModel):
    """Per-repetition rows with their aggregates for one sweep value."""

    name: str
    sweep_value: Optional[float] = None
    rows: list[RepetitionRow]
    summary: list[SummaryRow]
    significance: list[SignificanceRow]


class WorkerStat(BaseModel):
    repetition: int
    worker: int
    accuracy: float
    cost: float
    net_reward: float
    query_frequency: float


class WorkerProtocolResult(BaseModel):
    workers: list[WorkerStat]
    spearman: float
    spearman_p: float


class TeamEvaluation(BaseModel):
    """Realised test reward of a team and how its decisions were routed."""

    total_reward: float
    algorithm_reward: float
    human_reward: float
    human_fraction: float
    human_counts: list[int]
    n: int
