"""Persistence: FPHI binary snapshots, CSV/JSON reports and run manifests.

Snapshot layout (little-endian)::

    b"FPHI" | u32 version = 1 | u64 vertex_count | u64 frame_count
    | f64 times[frame_count] | f64 values[frame_count * vertex_count]

A single field is stored as one frame at time 0.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import platform
import struct
import sys
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from . import __version__
from .errors import CorruptionError, FormatError
from .fields import TrajectorySample

MAGIC = b"FPHI"
VERSION = 1
_HEADER = struct.Struct("<4sIQQ")


def snapshot_bytes(times: np.ndarray, values: np.ndarray) -> bytes:
    times = np.ascontiguousarray(times, dtype="<f8").reshape(-1)
    values = np.ascontiguousarray(values, dtype="<f8")
    if values.ndim == 1:
        values = values[None, :]
    if values.ndim != 2 or values.shape[0] != times.size:
        raise FormatError("values must have shape (frames, vertices) matching times")
    return _HEADER.pack(MAGIC, VERSION, values.shape[1], values.shape[0]) + times.tobytes() + values.tobytes()


def snapshot_write(path: str | os.PathLike, data) -> Path:
    """Write a field (1-D array) or a :class:`TrajectorySample` atomically."""
    if isinstance(data, TrajectorySample):
        payload = snapshot_bytes(data.times, data.values)
    else:
        arr = np.asarray(data, dtype=float)
        if arr.ndim != 1:
            raise FormatError("a bare array snapshot must be a single field")
        payload = snapshot_bytes(np.zeros(1), arr)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(payload)
    os.replace(tmp, path)
    return path


def snapshot_parse(buf: bytes) -> tuple[np.ndarray, np.ndarray]:
    if len(buf) < _HEADER.size:
        head = bytes(buf[: len(MAGIC)])
        if head != MAGIC[: len(head)]:
            raise FormatError("not an FPHI snapshot (bad magic)")
        raise CorruptionError(f"truncated header: {len(buf)} of {_HEADER.size} bytes")
    magic, version, nv, nf = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise FormatError(f"not an FPHI snapshot (magic {magic!r})")
    if version != VERSION:
        raise FormatError(f"unsupported FPHI version {version} (expected {VERSION})")
    need = _HEADER.size + 8 * nf * (1 + nv)
    if len(buf) < need:
        raise CorruptionError(f"truncated payload: {len(buf)} of {need} bytes")
    if len(buf) > need:
        raise CorruptionError(f"{len(buf) - need} trailing bytes after payload")
    off = _HEADER.size
    times = np.frombuffer(buf, dtype="<f8", count=nf, offset=off).astype(float)
    values = np.frombuffer(buf, dtype="<f8", count=nf * nv, offset=off + 8 * nf).astype(float)
    return times, values.reshape(nf, nv)


def snapshot_read(path: str | os.PathLike) -> TrajectorySample:
    times, values = snapshot_parse(Path(path).read_bytes())
    return TrajectorySample(times, values, {}, {"source": str(path)})


def read_field(path: str | os.PathLike) -> np.ndarray:
    traj = snapshot_read(path)
    if len(traj) != 1:
        raise FormatError(f"snapshot holds {len(traj)} frames, expected one field")
    return traj.values[0]


def _jsonable(obj):
    if isinstance(obj, Mapping):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return _jsonable(obj.item())
    if isinstance(obj, float) and not np.isfinite(obj):
        return "nan" if np.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if obj is None or isinstance(obj, (bool, int, float, str)):
        return obj
    return str(obj)


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True)


def write_json(path: str | os.PathLike, obj) -> Path:
    path = Path(path)
    path.write_text(dumps(obj) + "\n")
    return path


def write_csv(path: str | os.PathLike, rows: Iterable[Mapping], columns: list[str] | None = None) -> Path:
    rows = list(rows)
    if columns is None:
        columns = list(rows[0].keys()) if rows else []
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow(_jsonable(dict(r)))
    return path


def config_hash(config: Mapping) -> str:
    canon = json.dumps(_jsonable(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def manifest(command: str, config: Mapping, seed: int | None, outputs: Iterable[str] = ()) -> dict:
    import scipy

    return {
        "command": command,
        "config": _jsonable(config),
        "config_hash": config_hash(config),
        "seed": seed,
        "outputs": sorted(outputs),
        "versions": {
            "fracphi": __version__,
            "python": sys.version.split()[0],
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "platform": platform.platform(),
        },
    }
