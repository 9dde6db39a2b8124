"""Persistent registry of pipeline runs.

Every CLI command registers itself here before it starts and records its exit
status when it finishes, so that output directories can be traced back to the
exact configuration, seed and package version that produced them.

CORE DESIGN PRINCIPLES:
=======================

1. PERSISTENCE: Runs are stored in a JSON file (.run_registry.json)
   - One entry per run id, kept across sessions
   - Survives crashed runs (status stays "running" with the PID recorded)

2. CONCURRENCY: fcntl.flock() around every read-modify-write
   - Several CLI processes may share one registry file

3. PROCESS TRACKING: The PID of the running command is stored
   - A "running" entry whose PID is gone is reported as "orphaned"
   - psutil is used when available, signal 0 otherwise

4. GARBAGE COLLECTION: Entries whose output directory vanished are dropped
   on load

REGISTRY FILE FORMAT (.run_registry.json):
==========================================

{
  "runs": {
    "20260119T101500-3f2a9c1e": {
      "command": "simulate",
      "config_digest": "3f2a9c1e...",
      "seed": 7,
      "version": "0.1.0",
      "pid": 12345,
      "out_dir": "/abs/path/out",
      "status": "running" | "ok" | "failed",
      "exit_code": 0
    }
  }
}

MEMORY QUERIES:
===============
available_memory_bytes() reports the memory the simulator may plan with; it
returns None when psutil is missing so callers can fall back to a fixed cap.
"""

from __future__ import annotations

import fcntl
import json
import logging
import os
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional

from .constants import APP_VERSION, RUN_REGISTRY_FILE

# Try to import psutil for process and memory queries
try:
    import psutil

    HAS_PSUTIL = True
except ImportError:
    HAS_PSUTIL = False

logger = logging.getLogger(__name__)


def _is_process_running(pid: int) -> bool:
    """Check if a process with given PID is running."""
    if pid <= 0:
        return False
    if HAS_PSUTIL:
        return psutil.pid_exists(pid)
    try:
        os.kill(pid, 0)
        return True
    except OSError:
        return False


def available_memory_bytes() -> Optional[int]:
    """Currently available system memory, or None without psutil."""
    if not HAS_PSUTIL:
        return None
    try:
        return int(psutil.virtual_memory().available)
    except Exception:
        return None


@dataclass
class RunInfo:
    """One registered pipeline run.

    Attributes:
        run_id: Timestamp plus config digest prefix
        command: CLI subcommand
        config_digest: sha256 of the canonical configuration
        seed: Seed used (None for deterministic commands)
        version: Package version
        pid: Process id of the command
        out_dir: Absolute output directory
        status: running, ok or failed
        exit_code: Exit code once finished
    """

    run_id: str
    command: str
    config_digest: str
    seed: Optional[int]
    version: str
    pid: int
    out_dir: str
    status: str = "running"
    exit_code: Optional[int] = None


class RunRegistry:
    """Persistent, file-locked registry of pipeline runs.

    Example usage:
        >>> registry = RunRegistry(Path("runs"))
        >>> run_id = registry.register("simulate", digest, seed=7, out_dir=Path("runs/a"))
        >>> registry.finish(run_id, exit_code=0)
    """

    def __init__(self, root: Optional[Path] = None) -> None:
        """Initialize the registry.

        Args:
            root: Directory holding the registry file (default: working directory)
        """
        self.root = Path(root) if root is not None else Path.cwd()
        self.registry_file = self.root / RUN_REGISTRY_FILE
        self.lock_file = self.root / (RUN_REGISTRY_FILE + ".lock")
        self._data: Dict[str, Dict[str, Any]] = {"runs": {}}
        self._lock_fd: Optional[int] = None
        self._load()

    # ---------- File Locking ----------
    def _acquire_lock(self) -> None:
        try:
            self.lock_file.parent.mkdir(parents=True, exist_ok=True)
            self._lock_fd = os.open(str(self.lock_file), os.O_RDWR | os.O_CREAT, 0o666)
            fcntl.flock(self._lock_fd, fcntl.LOCK_EX)
        except OSError:
            # Continue without lock if unavailable
            self._lock_fd = None

    def _release_lock(self) -> None:
        if self._lock_fd is not None:
            try:
                fcntl.flock(self._lock_fd, fcntl.LOCK_UN)
                os.close(self._lock_fd)
            except OSError:
                pass
            finally:
                self._lock_fd = None

    # ---------- Persistence ----------
    def _read(self) -> None:
        if not self.registry_file.exists():
            self._data = {"runs": {}}
            return
        try:
            data = json.loads(self.registry_file.read_text())
        except (OSError, json.JSONDecodeError):
            logger.warning(
                "Run registry unreadable, starting empty",
                extra={"operation": "registry_load", "path": str(self.registry_file)},
            )
            data = {}
        if not isinstance(data.get("runs"), dict):
            data = {"runs": {}}
        self._data = data

    def _write(self) -> None:
        try:
            self.registry_file.write_text(json.dumps(self._data, indent=2, sort_keys=True))
        except OSError:
            # Non-fatal: the run itself does not depend on the registry
            logger.warning(
                "Run registry not writable",
                extra={"operation": "registry_save", "path": str(self.registry_file)},
            )

    def _load(self) -> None:
        self._acquire_lock()
        try:
            self._read()
            if self._garbage_collect():
                self._write()
        finally:
            self._release_lock()

    def _garbage_collect(self) -> bool:
        """Drop entries whose output directory no longer exists."""
        stale = [
            run_id
            for run_id, meta in self._data["runs"].items()
            if not isinstance(meta, dict) or not Path(meta.get("out_dir", "")).is_dir()
        ]
        for run_id in stale:
            del self._data["runs"][run_id]
        if stale:
            logger.debug(
                "Removed stale runs",
                extra={"operation": "registry_gc", "removed": len(stale)},
            )
        return bool(stale)

    def _update(self, run_id: str, **fields: Any) -> None:
        self._acquire_lock()
        try:
            self._read()
            entry = self._data["runs"].setdefault(run_id, {})
            entry.update(fields)
            self._write()
        finally:
            self._release_lock()

    # ---------- Public API ----------
    def register(self, command: str, config_digest: str, seed: Optional[int], out_dir: Path) -> str:
        """Record the start of a run and return its id."""
        stamp = time.strftime("%Y%m%dT%H%M%S", time.gmtime())
        run_id = f"{stamp}-{config_digest[:8]}-{os.getpid()}"
        info = RunInfo(
            run_id=run_id,
            command=command,
            config_digest=config_digest,
            seed=seed,
            version=APP_VERSION,
            pid=os.getpid(),
            out_dir=str(Path(out_dir).resolve()),
        )
        fields = asdict(info)
        fields.pop("run_id")
        self._update(run_id, **fields)
        return run_id

    def finish(self, run_id: str, exit_code: int) -> None:
        """Record the exit status of a run."""
        self._update(run_id, status="ok" if exit_code == 0 else "failed", exit_code=exit_code)

    def get(self, run_id: str) -> Optional[RunInfo]:
        self._load()
        meta = self._data["runs"].get(run_id)
        if not isinstance(meta, dict):
            return None
        try:
            return RunInfo(run_id=run_id, **meta)
        except TypeError:
            return None

    def list_runs(self) -> List[RunInfo]:
        self._load()
        runs = []
        for run_id in sorted(self._data["runs"]):
            info = self.get(run_id)
            if info is not None:
                runs.append(info)
        return runs

    def status(self, run_id: str) -> Optional[str]:
        """Run status; "orphaned" for a running entry whose process is gone."""
        info = self.get(run_id)
        if info is None:
            return None
        if info.status == "running" and not _is_process_running(info.pid):
            return "orphaned"
        return info.status
