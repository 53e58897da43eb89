"""Deterministic, atomically written JSON and CSV artifacts.

Every artifact carries the hash of the run manifest: JSON files under the
key ``manifest_hash``, CSV files in a leading ``# manifest_hash=...`` line.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import platform
import tempfile
from importlib import metadata
from pathlib import Path
from typing import Any, Iterable

import numpy as np

__all__ = ["to_jsonable", "canonical_json", "atomic_write", "build_manifest",
           "manifest_hash", "ArtifactWriter", "trajectory_rows", "curve_rows"]


def to_jsonable(obj: Any) -> Any:
    """Plain JSON types; non-finite floats become None, callables their name."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if obj is None or isinstance(obj, str):
        return obj
    if callable(obj):
        return getattr(obj, "__name__", type(obj).__name__)
    return str(obj)


def canonical_json(obj: Any) -> str:
    return json.dumps(to_jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def atomic_write(path: str | Path, text: str) -> Path:
    """Write ``text`` to a temporary file beside ``path`` and rename it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _version(dist: str) -> str:
    try:
        return metadata.version(dist)
    except metadata.PackageNotFoundError:
        return "unknown"


def build_manifest(command: str, config: dict | None, seed: int | None,
                   extra: dict | None = None) -> dict:
    """Resolved configuration plus versions and seeds.

    Worker count is deliberately absent: artifacts must not depend on it.
    """
    return {"command": command, "config": config, "seed": seed,
            "versions": {"artifact": _version("artifact"), "numpy": np.__version__,
                         "scipy": _version("scipy"),
                         "python": platform.python_version()},
            **(extra or {})}


def manifest_hash(manifest: dict) -> str:
    return hashlib.sha256(canonical_json(manifest).encode()).hexdigest()


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return "" if v is None else str(v)


class ArtifactWriter:
    """Writes the artifacts of one command into ``out_dir``."""

    def __init__(self, out_dir: str | Path, manifest: dict):
        self.out_dir = Path(out_dir)
        self.manifest = manifest
        self.hash = manifest_hash(manifest)
        self.written: list[Path] = []

    def write_manifest(self) -> Path:
        return self._emit("manifest.json", canonical_json(
            {"manifest": self.manifest, "manifest_hash": self.hash}))

    def write_json(self, name: str, payload: dict) -> Path:
        return self._emit(name, canonical_json({"manifest_hash": self.hash, **payload}))

    def write_csv(self, name: str, header: list[str], rows: Iterable) -> Path:
        buf = io.StringIO()
        buf.write(f"# manifest_hash={self.hash}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
        return self._emit(name, buf.getvalue())

    def _emit(self, name: str, text: str) -> Path:
        p = atomic_write(self.out_dir / name, text)
        self.written.append(p)
        return p


def trajectory_rows(traj) -> tuple[list[str], list]:
    """One row per recorded time and particle."""
    s = traj.scenario
    lat = s.lateral is not None
    head = ["t", "particle", "alpha1"] + (["alpha2"] if lat else []) + \
        ["X", "V", "dX1", "dV1"]
    rows = []
    for st in traj.states:
        for i in range(s.n_particles):
            row = [st.t, i, s.alpha[i]] + ([s.lateral[i]] if lat else [])
            rows.append(row + [st.X[i], st.V[i], st.dX1[i], st.dV1[i]])
    return head, rows


def curve_rows(curves) -> tuple[list[str], list]:
    head = ["branch", "alpha2", "f_hat", "c", "c_labels", "collapse_diameter"]
    rows = []
    for k, b in enumerate(curves.branches):
        rows.extend([k, *map(float, r)] for r in b.samples)
    return head, rows
