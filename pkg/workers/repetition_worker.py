"""Fan-out of independent experiment repetitions over processes."""

import multiprocessing
import queue
import threading
from typing import Any, Callable, Optional, Sequence

from loguru import logger

from utils.logger_handler import install_queue_sink
from workers.worker import Worker


def _run_jobs(target: Callable, jobs: list[tuple[int, tuple]], log_queue, result_queue, log_level: str):
    """Process entry point: run the assigned jobs and post (index, result, error) tuples."""
    install_queue_sink(log_queue, log_level)
    for index, args in jobs:
        try:
            result_queue.put((index, target(*args), None))
        except Exception as e:
            logger.error(f"Job {index} raised {type(e).__name__}: {e}")
            result_queue.put((index, None, f"{type(e).__name__}: {e}"))


class RepetitionWorker(Worker):
    """
    Run target(*args) for every job, in parallel processes when workers > 1.

    Jobs are dealt round-robin to the processes. Child processes log through a
    queue that a listener thread re-emits in the parent. Results come back in
    job order whatever the scheduling, so downstream tables are byte-stable.
    """

    def __init__(
            self,
            target: Callable,
            jobs: Sequence[tuple],
            workers: int = 1,
            log_level: str = "DEBUG",
    ):
        """
        Args:
            target: Picklable module-level function
            jobs: One argument tuple per call
            workers: Number of processes (1 runs inline)
            log_level: Minimum level forwarded from child processes
        """
        super().__init__()
        self.target = target
        self.jobs = list(jobs)
        self.workers = max(1, int(workers))
        self.log_level = log_level
        self.log_queue: Optional[Any] = None
        self._log_listener_stop = threading.Event()
        self._log_listener_thread: threading.Thread | None = None

    def do_work(self) -> list:
        if self.workers == 1 or len(self.jobs) <= 1:
            return [self.target(*args) for args in self.jobs]

        workers = min(self.workers, len(self.jobs))
        logger.info(f"Running {len(self.jobs)} jobs on {workers} processes")
        self.log_queue = multiprocessing.Queue()
        result_queue = multiprocessing.Queue()
        self._start_log_listener()
        try:
            indexed = list(enumerate(self.jobs))
            for w in range(workers):
                self.create_worker_process(
                    _run_jobs,
                    args=(self.target, indexed[w::workers], self.log_queue, result_queue, self.log_level),
                )
            results = self._collect(result_queue)
            self.wait_for_processes()
            return [results[i] for i in range(len(self.jobs))]
        finally:
            self._stop_log_listener()

    def _collect(self, result_queue) -> dict[int, Any]:
        results: dict[int, Any] = {}
        while len(results) < len(self.jobs):
            if self.should_stop():
                raise RuntimeError("Worker stopped before all jobs finished")
            try:
                index, value, error = result_queue.get(timeout=0.5)
            except queue.Empty:
                if not any(p.is_alive() for p in self._processes) and result_queue.empty():
                    missing = sorted(set(range(len(self.jobs))) - set(results))
                    raise RuntimeError(f"Worker processes exited without results for jobs {missing}")
                continue
            if error is not None:
                raise RuntimeError(f"Job {index} failed: {error}")
            results[index] = value
        return results

    def stop(self):
        super().stop()
        self._stop_log_listener()

    def _start_log_listener(self):
        """Start a background thread to forward child-process logs to the main logger."""
        if self.log_queue is None or self._log_listener_thread:
            return

        def _listen():
            while not self._log_listener_stop.is_set():
                try:
                    record = self.log_queue.get(timeout=0.5)
                except queue.Empty:
                    continue
                if record is None:
                    break
                try:
                    logger.log(record.get("level", "INFO").upper(), record.get("message", ""))
                except Exception as e:
                    logger.debug(f"Log listener error: {e}")

        self._log_listener_stop.clear()
        self._log_listener_thread = self.create_worker_thread(_listen)

    def _stop_log_listener(self):
        """Stop the log forwarding thread and clean up the queue."""
        if self.log_queue:
            try:
                self.log_queue.put_nowait(None)
            except Exception:
                pass
        if self._log_listener_thread:
            self._log_listener_thread.join(timeout=1.0)
        self._log_listener_stop.set()
        self._log_listener_thread = None
        if self.log_queue:
            try:
                self.log_queue.close()
            except Exception:
                pass
        self.log_queue = None
