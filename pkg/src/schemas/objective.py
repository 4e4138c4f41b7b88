from pydantic import BaseModel, ConfigDict, model_validator


class ObjectiveValue(BaseModel):
    """Sum-form objective with its per-record mean."""

    model_config = ConfigDict(frozen=True)

    total: float
    mean: float
    n: int

    @classmethod
    def from_total(cls, total: float, n: int) -> 'ObjectiveValue':
        return cls(total=float(total), mean=float(total) / n if n else 0.0, n=n)

    @model_validator(mode='after')
    def mean_matches_total(self):
        if self.n and abs(self.mean * self.n - self.total) > 1e-9 * max(self.n, 1) * max(1.0, abs(self.total)):
            raise ValueError("mean * n must equal total")
        return self


class ImputationBias(BaseModel):
    """Asymptotic bias of the imputed estimator and the human regret it is bounded by."""

    model_config = ConfigDict(frozen=True)

    delta_prime: float
    delta: float
