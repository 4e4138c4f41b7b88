"""Logger handler that owns the loguru sinks used by the CLI and workers."""

import sys
from typing import Optional

from loguru import logger


class LoggerHandler:
    """Install and remove loguru sinks for one process."""

    CONSOLE_FORMAT = "<green>{time:HH:mm:ss}</green> | <level>{level: <8}</level> | {message}"
    FILE_FORMAT = "{time:YYYY-MM-DD HH:mm:ss.SSS} | {level: <8} | {name}:{line} | {message}"

    def __init__(self, level: str = "INFO", log_file: Optional[str] = None):
        """
        Initialize the logger handler.

        Args:
            level: Minimum level for the console sink
            log_file: Optional path of a rotating log file
        """
        self.level = level.upper()
        self.log_file = log_file
        self._handler_ids: list[int] = []

    def start(self):
        """Replace loguru's default sink with the configured ones."""
        if self._handler_ids:
            return
        logger.remove()
        self._handler_ids.append(logger.add(
            sys.stderr,
            format=self.CONSOLE_FORMAT,
            level=self.level,
            colorize=True,
        ))
        if self.log_file:
            self._handler_ids.append(logger.add(
                self.log_file,
                format=self.FILE_FORMAT,
                level="DEBUG",
                rotation="10 MB",
                enqueue=True,
            ))

    def stop(self):
        """Remove the sinks installed by start()."""
        for handler_id in self._handler_ids:
            try:
                logger.remove(handler_id)
            except ValueError:
                pass
        self._handler_ids = []


class QueueSink:
    """
    loguru sink that forwards records to a multiprocessing queue.

    Child processes install it so the parent's listener thread can re-emit
    their messages through the parent's sinks.
    """

    def __init__(self, log_queue):
        self.log_queue = log_queue

    def __call__(self, message):
        record = message.record
        try:
            self.log_queue.put_nowait({
                "level": record["level"].name,
                "message": record["message"],
            })
        except Exception:
            # Queue closed while the child was shutting down
            pass


def install_queue_sink(log_queue, level: str = "DEBUG") -> int:
    """Route every log call of the current process into `log_queue`."""
    logger.remove()
    return logger.add(QueueSink(log_queue), format="{message}", level=level, colorize=False)
