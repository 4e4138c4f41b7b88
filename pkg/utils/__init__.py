"""Utility modules for the application."""

from utils.logger_handler import LoggerHandler, install_queue_sink
from utils.helpers import floor_probabilities, normal_cdf, rng_stream

__all__ = ["LoggerHandler", "install_queue_sink", "floor_probabilities", "normal_cdf", "rng_stream"]
