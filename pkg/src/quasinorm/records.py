"""Run manifests, line-delimited result records and CSV tables.

Every record carries the hash of the manifest it belongs to. Nothing
time-dependent is written, so identical configurations give identical files.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import threading
from pathlib import Path
from typing import Iterable

import numpy as np

MANIFEST_NAME = "manifest.json"
RECORDS_NAME = "records.jsonl"


def clean(obj):
    """JSON-safe copy: numpy scalars become Python numbers, non-finite floats become strings."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    return obj


def canonical(obj) -> str:
    return json.dumps(clean(obj), sort_keys=True, separators=(",", ":"))


def manifest_hash(manifest: dict) -> str:
    return hashlib.sha256(canonical(manifest).encode()).hexdigest()[:16]


class RunWriter:
    """Single writer for one run directory; safe to call from worker threads."""

    def __init__(self, out_dir, manifest: dict):
        self.out = Path(out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.manifest = clean(manifest)
        self.hash = manifest_hash(self.manifest)
        self._lock = threading.Lock()
        (self.out / MANIFEST_NAME).write_text(json.dumps({"hash": self.hash, **self.manifest}, indent=1,
                                                         sort_keys=True) + "\n")
        self._records = self.out / RECORDS_NAME
        self._records.write_text("")
        self._summary = []

    def record(self, kind: str, payload: dict) -> dict:
        rec = {"manifest": self.hash, "record": kind, **clean(payload)}
        with self._lock:
            with self._records.open("a") as fh:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
        return rec

    def table(self, name: str, columns: list, rows: Iterable) -> Path:
        path = self.out / name
        with self._lock, path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(columns)
            for row in rows:
                if isinstance(row, dict):
                    row = [row.get(c) for c in columns]
                w.writerow([_cell(x) for x in row])
        return path

    def note(self, line: str) -> None:
        self._summary.append(line)

    def close(self) -> Path:
        path = self.out / "summary.txt"
        path.write_text(f"manifest {self.hash}\n" + "\n".join(self._summary) + "\n")
        return path


def _cell(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return x


def read_records(out_dir) -> list[dict]:
    path = Path(out_dir) / RECORDS_NAME
    return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]
