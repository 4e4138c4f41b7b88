import unittest

from src.config.settings import AppConfig


def slow(test):
    """Skip acceptance-scale tests unless LCP_RUN_SLOW=1."""
    return unittest.skipUnless(AppConfig().run_slow_tests, "set LCP_RUN_SLOW=1 to run")(test)
