"""Field validation and the time-indexed trajectory container."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError


def as_field(values, n_vertices: int, name: str = "field") -> np.ndarray:
    """Return ``values`` as a finite float vector of length ``n_vertices``."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 0:
        arr = np.full(n_vertices, float(arr))
    if arr.shape != (n_vertices,):
        raise DomainError(f"{name} has shape {arr.shape}, expected ({n_vertices},)")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} has non-finite entries")
    return arr


@dataclass
class TrajectorySample:
    """Fields ``values[i]`` at ``times[i]`` plus per-time diagnostics."""

    times: np.ndarray
    values: np.ndarray
    diagnostics: dict[str, np.ndarray] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.ndim != 1 or self.values.ndim != 2 or self.values.shape[0] != self.times.size:
            raise DomainError("trajectory needs times (T,) and values (T, N)")
        if self.times.size and np.any(np.diff(self.times) <= 0):
            raise DomainError("trajectory times must be strictly increasing")
        for key, arr in self.diagnostics.items():
            if len(arr) != self.times.size:
                raise DomainError(f"diagnostic {key!r} length does not match times")

    def __len__(self) -> int:
        return int(self.times.size)

    @property
    def n_vertices(self) -> int:
        return int(self.values.shape[1])

    def is_uniform(self, rtol: float = 1e-9) -> bool:
        if self.times.size < 2:
            return True
        d = np.diff(self.times)
        return bool(np.all(np.abs(d - d[0]) <= rtol * abs(d[0])))
