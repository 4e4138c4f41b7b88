"""Adam optimizer state and update (gradient-ascent convention)."""

from typing import Optional

import numpy as np


class AdamState:
    """Moment estimates and hyperparameters for one parameter vector."""

    def __init__(
            self,
            size: int,
            learning_rate: float = 0.001,
            beta1: float = 0.9,
            beta2: float = 0.999,
            epsilon: float = 1e-8,
            step: int = 0,
            first_moment: Optional[np.ndarray] = None,
            second_moment: Optional[np.ndarray] = None,
    ):
        self.size = int(size)
        self.learning_rate = float(learning_rate)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.epsilon = float(epsilon)
        self.step = int(step)
        self.first_moment = np.zeros(self.size) if first_moment is None else np.asarray(first_moment, dtype=float)
        self.second_moment = np.zeros(self.size) if second_moment is None else np.asarray(second_moment, dtype=float)
        if self.first_moment.shape != (self.size,) or self.second_moment.shape != (self.size,):
            raise ValueError("Moment vectors must match the parameter length")
        if self.step < 0:
            raise ValueError("Step count must be non-negative")

    def __repr__(self):
        return f"<AdamState(size={self.size}, step={self.step}, lr={self.learning_rate})>"


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState) -> tuple[np.ndarray, AdamState]:
    """
    One bias-corrected Adam update that moves parameters to increase the objective.

    Args:
        params: Current flat parameters
        grads: Gradient of the objective being maximized
        state: Optimizer state (not mutated)

    Returns:
        (new parameters, new state)
    """
    params = np.asarray(params, dtype=float)
    grads = np.asarray(grads, dtype=float)
    if params.shape != grads.shape or params.shape != (state.size,):
        raise ValueError(
            f"Length mismatch: params {params.shape}, grads {grads.shape}, state {state.size}")

    step = state.step + 1
    m = state.beta1 * state.first_moment + (1.0 - state.beta1) * grads
    v = state.beta2 * state.second_moment + (1.0 - state.beta2) * grads * grads
    m_hat = m / (1.0 - state.beta1 ** step)
    v_hat = v / (1.0 - state.beta2 ** step)
    new_params = params + state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)

    new_state = AdamState(
        size=state.size,
        learning_rate=state.learning_rate,
        beta1=state.beta1,
        beta2=state.beta2,
        epsilon=state.epsilon,
        step=step,
        first_moment=m,
        second_moment=v,
    )
    return new_params, new_state
