"""
HierSAIL - Utility Functions Module
Contains helpers for console logging, run persistence (CSV, digests,
manifest) and the worker pool.
"""

import csv
import hashlib
import json
import threading
import time
from pathlib import Path
from queue import Queue, Empty

import numpy as np
from rich.console import Console
from rich.markup import escape

from config import MANIFEST_FILE, TIMINGS_FILE, TOOLKIT_VERSION


# ================= CONSOLE LOGGING =================

LOG_COLORS = {
    "info":    "grey70",
    "success": "green",
    "error":   "red",
    "warning": "dark_orange",
}


def console_log_func(verbose: bool = False, console: Console = None):
    """Build the log_func(message, kind) sink used by the command line."""
    console = console or Console(stderr=True, highlight=False)
    lock = threading.Lock()

    def log(message, msg_type="info"):
        if msg_type == "info" and not verbose:
            return
        color = LOG_COLORS.get(msg_type, "grey70")
        timestamp = time.strftime("%H:%M:%S")
        with lock:
            console.print(f"[grey50][{timestamp}][/grey50] [{color}]{escape(str(message))}[/{color}]")

    return log


# ================= CSV / DIGESTS =================

def fmt(value) -> str:
    """Deterministic text for a CSV cell."""
    if isinstance(value, float):
        return repr(value)
    if hasattr(value, "item"):
        return fmt(value.item())
    return str(value)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])
    return path


def read_csv(path) -> list:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def file_digest(path) -> str:
    """SHA-256 of a file's contents."""
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def array_digest(*arrays) -> str:
    """SHA-256 over the raw bytes of numeric arrays (sample-set fingerprints)."""
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(a, dtype=float).tobytes())
    return h.hexdigest()[:16]


# ================= RUN MANIFEST =================

class RunManifest:
    """Tracks the files a run writes and persists them with digests."""

    def __init__(self, out_dir, config_snapshot: dict, seed: int):
        self.out_dir = Path(out_dir)
        self.config_snapshot = config_snapshot
        self.seed = seed
        self.files = []
        self.timings = {}

    def add(self, path, timing: bool = False):
        path = Path(path)
        rel = path.relative_to(self.out_dir).as_posix()
        self.files = [f for f in self.files if f[0] != rel]
        self.files.append((rel, timing))
        return path

    def time(self, phase: str, seconds: float):
        self.timings[phase] = self.timings.get(phase, 0.0) + seconds

    def write(self) -> Path:
        timings_path = self.out_dir / TIMINGS_FILE
        with open(timings_path, "w") as f:
            json.dump(self.timings, f, indent=2, sort_keys=True)
        self.add(timings_path, timing=True)

        entries = [
            {"path": rel, "digest": file_digest(self.out_dir / rel), "timing": timing}
            for rel, timing in sorted(self.files)
        ]
        manifest = {
            "config": self.config_snapshot,
            "seed": self.seed,
            "version": TOOLKIT_VERSION,
            "files": entries,
        }
        manifest_path = self.out_dir / MANIFEST_FILE
        with open(manifest_path, "w") as f:
            json.dump(manifest, f, indent=2, sort_keys=True)
        return manifest_path

    @staticmethod
    def load(out_dir) -> dict:
        with open(Path(out_dir) / MANIFEST_FILE) as f:
            return json.load(f)

    @staticmethod
    def data_digests(out_dir) -> dict:
        """Digests of every non-timing file listed in a run's manifest."""
        manifest = RunManifest.load(out_dir)
        return {e["path"]: e["digest"] for e in manifest["files"] if not e["timing"]}


# ================= WORKER POOL =================

def run_parallel(tasks, workers: int = 1, log_func=None) -> list:
    """Run independent callables and return their results in submission order.

    With workers > 1 the tasks are pulled from a queue by daemon threads;
    results are keyed by task index so ordering never depends on scheduling.
    The first exception raised by a task is re-raised in the caller.
    """
    tasks = list(tasks)
    if workers <= 1 or len(tasks) <= 1:
        return [task() for task in tasks]

    queue = Queue()
    for i, task in enumerate(tasks):
        queue.put((i, task))
    results = [None] * len(tasks)
    errors = []

    def worker():
        while True:
            try:
                i, task = queue.get_nowait()
            except Empty:
                return
            try:
                results[i] = task()
            except Exception as e:
                errors.append((i, e))

    threads = [threading.Thread(target=worker, daemon=True) for _ in range(min(workers, len(tasks)))]
    for t in threads:
        t.start()
    for t in threads:
        t.join()

    if errors:
        i, e = min(errors, key=lambda item: item[0])
        if log_func:
            log_func(f"Task {i} failed: {e}", "error")
        raise e
    return results
