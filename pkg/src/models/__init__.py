"""Models package."""

from .bandit_log import BanditLog, CostFunction, CounterfactualTable, DeterministicSupportMask
from .deferral_system import DeferralSystem
from .softmax_model import SoftmaxModel

__all__ = ['BanditLog', 'CostFunction', 'CounterfactualTable', 'DeterministicSupportMask', 'DeferralSystem',
           'SoftmaxModel']
