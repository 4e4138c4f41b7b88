"""Workers module for background batch jobs."""

from workers.worker import Worker
from workers.repetition_worker import RepetitionWorker

__all__ = ['Worker', 'RepetitionWorker']
