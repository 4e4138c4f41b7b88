"""Base Worker class for background batch jobs."""

import multiprocessing
import threading
from typing import Any, List, Optional

from loguru import logger


class Worker:
    """
    Base Worker class for work that fans out over threads or processes.

    Subclasses override do_work(). run() wraps it with start/finish logging
    and error capture; the outcome is left on `result` and `error`.
    """

    def __init__(self):
        """Initialize the worker."""
        self._is_running = False
        self._should_stop = False
        self._threads: List[threading.Thread] = []
        self._processes: List[multiprocessing.Process] = []
        self.result: Any = None
        self.error: Optional[str] = None

    def run(self) -> Any:
        """
        Execute do_work() and return its result.

        Exceptions are logged, stored on `error` and re-raised so the caller
        decides whether a failed job aborts the run.
        """
        try:
            self._is_running = True
            self._should_stop = False
            self.error = None
            logger.debug(f"{type(self).__name__} started")
            self.result = self.do_work()
            return self.result
        except Exception as e:
            logger.error(f"{type(self).__name__} error: {e}")
            self.error = str(e)
            raise
        finally:
            self._is_running = False
            logger.debug(f"{type(self).__name__} finished")

    def do_work(self) -> Any:
        return None

    def stop(self):
        """
        Request the worker to stop and reap its sub-threads and sub-processes.

        Processes that ignore the request are terminated, then killed.
        """
        self._should_stop = True
        logger.info("Stop requested for worker")

        for thread in self._threads:
            if thread.is_alive():
                thread.join(timeout=1.0)

        for process in self._processes:
            if process.is_alive():
                process.join(timeout=2.0)
                if process.is_alive():
                    logger.warning(f"Process {process.pid} did not stop, terminating")
                    process.terminate()
                    process.join(timeout=1.0)
                    if process.is_alive():
                        process.kill()

    def is_running(self) -> bool:
        return self._is_running

    def should_stop(self) -> bool:
        return self._should_stop

    def create_worker_thread(self, target, args=(), kwargs=None, daemon=True) -> threading.Thread:
        """Create, start and track a thread."""
        thread = threading.Thread(target=target, args=args, kwargs=kwargs or {}, daemon=daemon)
        thread.start()
        self._threads.append(thread)
        return thread

    def create_worker_process(self, target, args=(), kwargs=None) -> multiprocessing.Process:
        """
        Create, start and track a daemon process.

        Args:
            target: Picklable function to run in the process
            args: Arguments for the target function
            kwargs: Keyword arguments for the target function

        Returns:
            The started process
        """
        process = multiprocessing.Process(target=target, args=args, kwargs=kwargs or {}, daemon=True)
        process.start()
        self._processes.append(process)
        return process

    def wait_for_processes(self, timeout=None):
        for process in self._processes:
            if process.is_alive():
                process.join(timeout=timeout)
