from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.enums.EHumanKind import EHumanKind


class WorkerSpec(BaseModel):
    """One human in a pool file: a NoiseHBM, a tabulated policy or replayed annotations."""

    model_config = ConfigDict(extra='forbid', frozen=True)

    kind: EHumanKind
    rho: Optional[float] = Field(default=None, gt=0, le=1)
    # CSV next to the pool file: q0..q{k-1} per row (tabular) or annotations (replay)
    path: Optional[str] = None
    # Replay a single annotator instead of a random one per instance
    annotator: Optional[int] = Field(default=None, ge=0)

    @model_validator(mode='after')
    def fields_for_kind(self):
        if self.kind is EHumanKind.NOISE and self.rho is None:
            raise ValueError("noise workers need rho")
        if self.kind is not EHumanKind.NOISE and not self.path:
            raise ValueError(f"{self.kind.value} workers need a path")
        return self


class PoolSpec(BaseModel):
    """Humans answering test-time queries and their per-decision costs."""

    model_config = ConfigDict(extra='forbid', frozen=True)

    num_actions: int = Field(ge=2)
    workers: list[WorkerSpec] = Field(min_length=1)
    costs: list[float]

    @model_validator(mode='after')
    def one_cost_per_worker(self):
        if len(self.costs) != len(self.workers):
            raise ValueError("costs must list one cost per worker")
        if any(c < 0 for c in self.costs):
            raise ValueError("costs must be >= 0")
        return self
