import os
import logging
from concurrent.futures import ProcessPoolExecutor, as_completed
from pathlib import Path

from utils import csv_writer, ensure_dir

logger = logging.getLogger("study")


class StudyService:
    """
    Runs independent jobs (simulation replications, series x model forecasts):
    - Fans jobs out to a process pool, or runs them inline when workers == 1
    - Streams one CSV row per finished job
    - Records failing jobs instead of stopping the study

    Every payload starts with its job index; results come back ordered by it,
    so outputs do not depend on completion order.
    """

    def __init__(
        self,
        job_fn,
        workers: int = 1,
        out_dir: Path | None = None,
        name: str = "jobs",
        header=None,
        row_fn=None,
        logger=None
    ):
        self.job_fn = job_fn
        self.workers = max(1, int(workers))
        self.out_dir = out_dir
        self.name = name
        self.header = list(header) if header else None
        self.row_fn = row_fn
        self.logger = logger or logging.getLogger("study")

        self._running = False
        self._executor = None
        self._rows = {}
        self.file_handle = self.writer = self.csv_path = None

    # -----------------------------------------------------

    def __enter__(self):
        self.start()
        return self

    def __exit__(self, *exc):
        self.stop()
        return False

    # -----------------------------------------------------

    def start(self):
        if self._running:
            return
        self._running = True
        if self.out_dir is not None and self.header:
            ensure_dir(self.out_dir)
            self.file_handle, self.writer, self.csv_path = csv_writer(self.out_dir, self.name, self.header)
        if self.workers > 1:
            self._executor = ProcessPoolExecutor(max_workers=self.workers)
        self.logger.info("StudyService %s started with %d worker(s)", self.name, self.workers)

    # -----------------------------------------------------

    def stop(self):
        if not self._running:
            return
        self._running = False
        if self._executor:
            self._executor.shutdown(wait=True, cancel_futures=True)
            self._executor = None

        # rewrite the streamed file in job order
        if self.file_handle:
            try:
                self.file_handle.close()
                self.file_handle, self.writer, self.csv_path = csv_writer(self.out_dir, self.name, self.header)
                for index in sorted(self._rows):
                    self.writer.writerow(self._rows[index])
                self.file_handle.close()
            except Exception:
                self.logger.exception("Could not finalize %s", self.csv_path)
            self.file_handle = None

        self.logger.info("StudyService %s stopped", self.name)

    # -----------------------------------------------------

    def run(self, payloads):
        """Run every payload; returns ({index: result}, {index: error message})."""
        if not self._running:
            self.start()
        results, failures = {}, {}
        total = len(payloads)

        if self._executor is None:
            done = (self._call(p) for p in payloads)
        else:
            futures = {self._executor.submit(self.job_fn, p): p[0] for p in payloads}
            done = (self._collect(f, futures[f]) for f in as_completed(futures))

        for count, (index, result, error) in enumerate(done, start=1):
            if error is None:
                results[index] = result
                self._write_row(index, result)
                self.logger.info("%s job %d finished (%d/%d)", self.name, index, count, total)
            else:
                failures[index] = error
                self.logger.warning("%s job %d failed: %s", self.name, index, error)

        return dict(sorted(results.items())), dict(sorted(failures.items()))

    # -----------------------------------------------------

    def _call(self, payload):
        try:
            return payload[0], self.job_fn(payload), None
        except Exception as exc:
            self.logger.debug("job %s raised", payload[0], exc_info=True)
            return payload[0], None, f"{type(exc).__name__}: {exc}"

    def _collect(self, future, index):
        try:
            return index, future.result(), None
        except Exception as exc:
            return index, None, f"{type(exc).__name__}: {exc}"

    def _write_row(self, index, result):
        if not self.writer or not self.row_fn:
            return
        row = self.row_fn(result)
        self._rows[index] = row
        self.writer.writerow(row)
        self.file_handle.flush()
        os.fsync(self.file_handle.fileno())
