"""A tagged positive infinity for ratios and exponents.

Ratios such as ``a / 0`` with ``a > 0`` and exponents ``p = inf`` are
represented by the singleton :data:`INF` rather than ``float('inf')`` so that
the infinite branch is always an explicit, checkable case.
"""

from __future__ import annotations

import math
from numbers import Real
from typing import Union


class _Infinity:
    __slots__ = ()
    _instance: "_Infinity | None" = None

    def __new__(cls) -> "_Infinity":
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "INF"

    def __str__(self) -> str:
        return "inf"

    def __reduce__(self):
        return (_Infinity, ())

    def __hash__(self) -> int:
        return hash("fracphi.INF")

    def __eq__(self, other: object) -> bool:
        return other is self

    def __lt__(self, other: object) -> bool:
        if other is self or isinstance(other, Real):
            return False
        return NotImplemented

    def __le__(self, other: object) -> bool:
        if other is self:
            return True
        if isinstance(other, Real):
            return False
        return NotImplemented

    def __gt__(self, other: object) -> bool:
        if other is self:
            return False
        if isinstance(other, Real):
            return True
        return NotImplemented

    def __ge__(self, other: object) -> bool:
        if other is self or isinstance(other, Real):
            return True
        return NotImplemented

    def __float__(self) -> float:
        return math.inf


INF = _Infinity()

Extended = Union[float, _Infinity]


def is_inf(value: object) -> bool:
    return value is INF


def divide(a: float, b: float) -> Extended:
    """``a / b`` with the convention ``a / 0 = INF`` for ``a > 0``."""
    if b == 0:
        if a > 0:
            return INF
        raise ZeroDivisionError("0/0 and negative/0 are undefined")
    return a / b


def to_float(value: Extended) -> float:
    return math.inf if value is INF else float(value)


def to_json(value: Extended):
    """JSON-friendly encoding: the string ``"inf"`` for INF, else a float."""
    return "inf" if value is INF else float(value)


def parse_exponent(value) -> Extended:
    """Accept ``inf``/``"inf"``/``INF`` or a real >= 1 (norm exponents)."""
    if value is INF:
        return INF
    if isinstance(value, str):
        if value.strip().lower() in {"inf", "infinity", "∞"}:
            return INF
        value = float(value)
    value = float(value)
    if math.isinf(value) and value > 0:
        return INF
    return value
