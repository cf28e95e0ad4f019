"""Timestamped run log: every line goes to stdout and to <out>/run.log."""

import sys
from datetime import datetime
from pathlib import Path

from config.settings import OutputConfig


class RunLogger:
    """Writes to both stdout and a per-run log file."""

    def __init__(self, out_dir: Path, echo: bool = True):
        out_dir.mkdir(parents=True, exist_ok=True)
        self.log_path = out_dir / OutputConfig.LOG_NAME
        self.log_file = open(self.log_path, "w", buffering=1)  # line-buffered
        self.echo = echo

    def log(self, msg: str):
        ts = datetime.now().strftime("%H:%M:%S")
        line = f"[{ts}] {msg}"
        if self.echo:
            sys.stdout.write(line + "\n")
            sys.stdout.flush()
        self.log_file.write(line + "\n")

    def warn(self, check_id: str, warnings: list[str]):
        for w in warnings:
            self.log(f"⚠ {check_id}: {w}")

    def close(self):
        self.log_file.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False
