from typing import Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator

from src.enums.EArchitecture import EActivation, EArchitecture
from src.enums.EMethod import EMethod
from src.enums.EOODKind import EOODKind
from src.enums.EPropensityKind import EPropensityKind
from src.enums.ERoute import EMaskSource
from src.schemas.bandit_record import Seed

DEFAULT_P_GRID = [0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 0.99]


class PropensityConfig(BaseModel):
    """How pi0, the per-human pi0 and d0 are estimated."""

    model_config = ConfigDict(extra='forbid', frozen=True)

    kind: EPropensityKind = EPropensityKind.KNN
    n_neighbors: int = Field(default=25, ge=1)
    epochs: int = Field(default=300, ge=1)
    learning_rate: float = Field(default=0.05, gt=0)
    hidden: tuple[int, int] = (16, 16)
    cross_fit: bool = True
    folds: int = Field(default=2, ge=2)
    floor: float = Field(default=0.01, ge=0, lt=0.5)
    # Weight by the propensities recorded in the log when every record has one
    use_logged: bool = True


class ECConfig(BaseModel):
    """Expert-consistency imputation settings."""

    model_config = ConfigDict(extra='forbid', frozen=True)

    tau_det: float = Field(default=0.99, gt=0, le=1)
    # None takes the smallest (largest) reward observed in the training log
    r_subopt: Optional[float] = None
    r_opt: Optional[float] = None
    mask_source: EMaskSource = EMaskSource.ESTIMATED


class OODConfig(BaseModel):
    """Out-of-distribution gate settings."""

    model_config = ConfigDict(extra='forbid', frozen=True)

    kind: EOODKind = EOODKind.MAHALANOBIS
    p: float = Field(default=0.05, gt=0, lt=1)
    n_neighbors: int = Field(default=5, ge=1)
    p_grid: list[float] = Field(default_factory=lambda: list(DEFAULT_P_GRID))
    refit_propensity: bool = False

    @field_validator('p_grid')
    @classmethod
    def grid_in_unit_interval(cls, value: list[float]) -> list[float]:
        if not value:
            raise ValueError("p_grid must not be empty")
        if any(not 0.0 < p < 1.0 for p in value):
            raise ValueError("every p in p_grid must lie in (0, 1)")
        return sorted(value)


class TrainConfig(BaseModel):
    """One training run: method, architectures, optimizer, stopping rule, cost and sub-configs."""

    model_config = ConfigDict(extra='forbid', frozen=True)

    method: EMethod = EMethod.JC
    policy_architecture: EArchitecture = EArchitecture.LINEAR
    router_architecture: EArchitecture = EArchitecture.LINEAR
    hidden: tuple[int, int] = (16, 16)
    activation: EActivation = EActivation.TANH

    learning_rate: float = Field(default=0.001, gt=0)
    beta1: float = Field(default=0.9, ge=0, lt=1)
    beta2: float = Field(default=0.999, ge=0, lt=1)
    epsilon: float = Field(default=1e-8, gt=0)
    max_epochs: int = Field(default=500, ge=1)
    patience: int = Field(default=20, ge=1)
    tolerance: float = Field(default=1e-6, ge=0)
    batch_size: Optional[int] = Field(default=None, ge=1)
    alternate: bool = False
    # Joint methods start from the policy-only solution
    warm_start: bool = True

    # A scalar is a constant cost; a list gives one cost per human
    cost: Union[float, list[float]] = 0.0
    randomized_assignment: bool = True
    # Divide the personalized algorithm branch by d0 as well as pi0(a|x,h)
    assignment_weighted_algorithm: bool = False
    propensity: PropensityConfig = Field(default_factory=PropensityConfig)
    ec: ECConfig = Field(default_factory=ECConfig)
    ood: OODConfig = Field(default_factory=OODConfig)
    seed: Seed = 0

    @field_validator('cost')
    @classmethod
    def costs_non_negative(cls, value):
        values = value if isinstance(value, list) else [value]
        if any(c < 0 for c in values):
            raise ValueError("costs must be >= 0")
        return value

    @field_validator('method')
    @classmethod
    def trainable(cls, value: EMethod) -> EMethod:
        if not value.is_trainable:
            raise ValueError(f"method '{value.value}' cannot be trained")
        return value
