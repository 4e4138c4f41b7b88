import math
from typing import Annotated, Optional

from pydantic import AfterValidator, BaseModel, ConfigDict, Field, field_validator


def _all_finite(values: list[float]) -> list[float]:
    if not all(math.isfinite(v) for v in values):
        raise ValueError("feature vector contains non-finite entries")
    return values


FeatureVector = Annotated[list[float], AfterValidator(_all_finite)]
Seed = Annotated[int, Field(ge=0, le=2 ** 64 - 1)]


class ActionSpace(BaseModel):
    """Discrete action set indexed 0..k-1."""

    model_config = ConfigDict(frozen=True)

    k: int = Field(ge=2)


class BanditRecord(BaseModel):
    """One logged decision: features, action, observed reward."""

    model_config = ConfigDict(frozen=True)

    x: FeatureVector
    a: int = Field(ge=0)
    r: float
    h: Optional[int] = Field(default=None, ge=0)
    logged_propensity: Optional[float] = Field(default=None, gt=0.0, le=1.0)

    @field_validator('r')
    @classmethod
    def reward_is_finite(cls, v):
        if not math.isfinite(v):
            raise ValueError("non-finite reward")
        return v


class LogViolation(BaseModel):
    """A single failed invariant at one record index."""

    model_config = ConfigDict(frozen=True)

    index: int
    invariant: str
    detail: str = ""

    def __str__(self):
        suffix = f" ({self.detail})" if self.detail else ""
        return f"record {self.index}: {self.invariant}{suffix}"
