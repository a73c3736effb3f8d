"""Admissibility of (d_h, d_w, theta, n) for the renormalized Phi^{n+1} dynamics.

Local well-posedness needs

    n < (1/2) (d_h + d_w) / (d_h - d_w)   and   n < 2 theta / (d_h - d_w) + 1,

and global existence additionally needs n odd, n >= 3 and
n < d_w / (d_h - d_w).  A ratio ``a / 0`` with ``a > 0`` is :data:`INF`.
When ``d_h < d_w`` (spectral dimension below 2) no renormalization is
needed; the constraints are vacuous and every ratio is reported as INF.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import DomainError
from .extended import INF, Extended, divide, to_json

_REL_TOL = 1e-12


@dataclass(frozen=True)
class RegimeReport:
    d_h: float
    d_w: float
    theta: float
    n: int
    ratio_a: Extended
    ratio_b: Extended
    ratio_global: Extended
    d_s: float
    alpha0: float
    n0: int | object
    verdict_local: bool
    verdict_global: bool
    singular: bool
    subcritical: bool
    boundary: bool

    @property
    def holder_ratio(self) -> Extended:
        """theta / (d_h - d_w)."""
        if self.d_h <= self.d_w:
            return INF
        return self.theta / (self.d_h - self.d_w)

    def to_dict(self) -> dict:
        return {
            "d_h": self.d_h,
            "d_w": self.d_w,
            "theta": self.theta,
            "n": self.n,
            "ratio_a": to_json(self.ratio_a),
            "ratio_b": to_json(self.ratio_b),
            "ratio_global": to_json(self.ratio_global),
            "holder_ratio": to_json(self.holder_ratio),
            "d_s": self.d_s,
            "alpha0": self.alpha0,
            "n0": "inf" if self.n0 is INF else self.n0,
            "local": self.verdict_local,
            "global": self.verdict_global,
            "singular": self.singular,
            "subcritical": self.subcritical,
            "boundary": self.boundary,
        }


def _less(n: float, bound: Extended) -> tuple[bool, bool]:
    """Strict ``n < bound`` and whether ``n`` sits on the bound (to rounding)."""
    if bound is INF:
        return True, False
    on = abs(n - bound) <= _REL_TOL * max(1.0, abs(bound))
    return (n < bound and not on), on


def classify(d_h: float, d_w: float, theta: float, n: int) -> RegimeReport:
    for name, val in (("d_h", d_h), ("d_w", d_w), ("theta", theta), ("n", n)):
        if not (isinstance(val, (int, float)) and math.isfinite(val) and val > 0):
            raise DomainError(f"{name} must be a positive finite number, got {val!r}")
    if int(n) != n:
        raise DomainError(f"n must be an integer, got {n!r}")
    n = int(n)
    d_h, d_w, theta = float(d_h), float(d_w), float(theta)
    gap = d_h - d_w
    subcritical = gap < 0
    if gap <= 0:
        ratio_a = ratio_b = ratio_global = INF
        n0: int | object = INF
    else:
        ratio_a = divide(d_h + d_w, gap)
        ratio_b = divide(2.0 * theta, gap) + 1.0
        ratio_global = divide(d_w, gap)
        bound = d_h / gap
        n0 = int(math.ceil(bound) - 1)
    half_a = INF if ratio_a is INF else 0.5 * ratio_a
    ok_a, on_a = _less(n, half_a)
    ok_b, on_b = _less(n, ratio_b)
    ok_g, on_g = _less(n, ratio_global)
    local = ok_a and ok_b
    glob = local and n >= 3 and n % 2 == 1 and ok_g
    return RegimeReport(
        d_h, d_w, theta, n, ratio_a, ratio_b, ratio_global,
        2.0 * d_h / d_w, gap / 2.0, n0, local, glob,
        singular=gap >= 0, subcritical=subcritical, boundary=on_a or on_b or on_g,
    )


def phi4_benchmark(d_w: float, theta: float) -> dict:
    """d_h thresholds for n = 3 at the given (d_w, theta).

    ``scaling``: d_h < 7/5 d_w; ``holder``: d_h < d_w + theta;
    ``local`` is the smaller of the two; ``global`` adds d_h < 4/3 d_w.
    """
    if not (0 < theta <= 1):
        raise DomainError("theta must lie in (0, 1]")
    if not d_w > 0:
        raise DomainError("d_w must be positive")
    scaling = 7.0 * d_w / 5.0
    holder = d_w + theta
    local = min(scaling, holder)
    return {
        "d_w": d_w,
        "theta": theta,
        "scaling": scaling,
        "holder": holder,
        "local": local,
        "global": min(local, 4.0 * d_w / 3.0),
        "singular_window": (d_w, local),
    }


CSV_COLUMNS = (
    "d_w", "d_h", "theta", "n", "ds", "ratio_a", "ratio_b", "ratio_global",
    "local", "global", "subcritical", "boundary",
)


def region_grid(
    d_w_range: tuple[float, float],
    d_h_range: tuple[float, float],
    theta_policy: str | float = "product_minimal",
    n: int = 3,
    resolution: int = 50,
) -> list[dict]:
    """Rows of verdicts over a ``resolution x resolution`` grid.

    ``theta_policy`` is a number (fixed theta) or ``"product_minimal"``
    (theta = d_w - d_h/2, the value for a product X x X whose factor has
    theta = d_w - d_h(X)).  Points where the policy gives theta outside
    (0, 1] carry ``theta`` as computed and both verdicts false.
    """
    if resolution < 2:
        raise DomainError("resolution must be at least 2")
    if min(d_w_range) <= 0 or min(d_h_range) <= 0:
        raise DomainError("ranges must be positive")
    rows = []
    for d_w in np.linspace(*d_w_range, resolution):
        for d_h in np.linspace(*d_h_range, resolution):
            theta = (d_w - d_h / 2.0) if theta_policy == "product_minimal" else float(theta_policy)
            if 0 < theta <= 1:
                rep = classify(float(d_h), float(d_w), theta, n)
                row = {
                    "d_w": float(d_w), "d_h": float(d_h), "theta": theta, "n": n, "ds": rep.d_s,
                    "ratio_a": to_json(rep.ratio_a), "ratio_b": to_json(rep.ratio_b),
                    "ratio_global": to_json(rep.ratio_global),
                    "local": rep.verdict_local, "global": rep.verdict_global,
                    "subcritical": rep.subcritical, "boundary": rep.boundary,
                }
            else:
                gap = d_h - d_w
                row = {
                    "d_w": float(d_w), "d_h": float(d_h), "theta": theta, "n": n, "ds": 2 * d_h / d_w,
                    "ratio_a": "inf" if gap <= 0 else (d_h + d_w) / gap,
                    "ratio_b": "nan", "ratio_global": "inf" if gap <= 0 else d_w / gap,
                    "local": False, "global": False, "subcritical": gap < 0, "boundary": False,
                }
            rows.append(row)
    return rows


def rows_to_csv(rows: Iterable[dict], columns: tuple[str, ...] = CSV_COLUMNS) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    return buf.getvalue()
