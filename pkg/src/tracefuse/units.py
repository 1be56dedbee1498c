"""Unit normalization for trace values.

A small built-in table converts every known unit to the canonical unit of
its dimension (length, area, count, time, steps). Unknown units raise
``UnknownUnit`` so that edge-admission gates can refuse to compare them.
"""

from __future__ import annotations


class UnknownUnit(ValueError):
    """Unit not present in the built-in conversion table."""

    def __init__(self, unit: str) -> None:
        super().__init__(f"unknown unit: {unit!r}")
        self.unit = unit


# unit -> (canonical unit, multiplicative scale to canonical)
_CONVERSIONS: dict[str, tuple[str, float]] = {
    # length (canonical: meter)
    "meter": ("meter", 1.0),
    "meters": ("meter", 1.0),
    "m": ("meter", 1.0),
    "kilometer": ("meter", 1000.0),
    "kilometers": ("meter", 1000.0),
    "km": ("meter", 1000.0),
    "centimeter": ("meter", 0.01),
    "cm": ("meter", 0.01),
    "mile": ("meter", 1609.344),
    "miles": ("meter", 1609.344),
    "foot": ("meter", 0.3048),
    "feet": ("meter", 0.3048),
    # area (canonical: acre)
    "acre": ("acre", 1.0),
    "acres": ("acre", 1.0),
    "thousand_acres": ("acre", 1000.0),
    "hectare": ("acre", 2.471053814671653),
    "hectares": ("acre", 2.471053814671653),
    "sq_mile": ("acre", 640.0),
    "sq_miles": ("acre", 640.0),
    # count (canonical: person / item)
    "person": ("person", 1.0),
    "persons": ("person", 1.0),
    "people": ("person", 1.0),
    "thousand_persons": ("person", 1000.0),
    "item": ("item", 1.0),
    "items": ("item", 1.0),
    # time (canonical: second)
    "second": ("second", 1.0),
    "seconds": ("second", 1.0),
    "s": ("second", 1.0),
    "millisecond": ("second", 0.001),
    "milliseconds": ("second", 0.001),
    "ms": ("second", 0.001),
    "minute": ("second", 60.0),
    "minutes": ("second", 60.0),
    "hour": ("second", 3600.0),
    "hours": ("second", 3600.0),
    "day": ("second", 86400.0),
    "days": ("second", 86400.0),
    # execution steps (canonical: step)
    "step": ("step", 1.0),
    "steps": ("step", 1.0),
    "thousand_steps": ("step", 1000.0),
}


def is_known_unit(unit: str) -> bool:
    return unit in _CONVERSIONS


def canonical_unit(unit: str) -> str:
    """Canonical unit name for ``unit``, raising UnknownUnit if unmapped."""
    try:
        return _CONVERSIONS[unit][0]
    except KeyError:
        raise UnknownUnit(unit) from None


def normalize_unit(value: float, unit: str) -> tuple[float, str]:
    """Convert ``value`` to the canonical unit of its dimension.

    Idempotent: canonical units map to themselves with scale 1.
    """
    try:
        canon, scale = _CONVERSIONS[unit]
    except KeyError:
        raise UnknownUnit(unit) from None
    return value * scale, canon


def units_compatible(a: str | None, b: str | None) -> bool:
    """True when both units are absent or share a canonical unit.

    A unit outside the conversion table makes the comparison undecidable,
    so it is rejected (returns False), matching the admission-gate rule.
    """
    if a is None and b is None:
        return True
    if a is None or b is None:
        return False
    try:
        return canonical_unit(a) == canonical_unit(b)
    except UnknownUnit:
        return False
