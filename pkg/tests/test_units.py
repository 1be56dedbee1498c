from __future__ import annotations

import pytest

from tracefuse import units


def test_thousand_acres_scales_to_acres() -> None:
    assert units.normalize_unit(5, "thousand_acres") == (5000, "acre")


def test_person_is_already_canonical() -> None:
    assert units.normalize_unit(12000, "person") == (12000, "person")


def test_landgrant_difference_pipeline() -> None:
    held, unit = units.normalize_unit(65000, "acres")
    grant, _ = units.normalize_unit(5, "thousand_acres")
    assert (held - grant, unit) == (60000, "acre")


def test_unknown_unit_raises() -> None:
    with pytest.raises(units.UnknownUnit):
        units.normalize_unit(1, "flurbs")


@pytest.mark.parametrize("unit", ["acre", "steps", "thousand_acres", "km", "people", "hours"])
def test_normalize_is_idempotent(unit: str) -> None:
    value, canon = units.normalize_unit(3.5, unit)
    assert units.normalize_unit(value, canon) == (value, canon)


def test_units_compatible_rules() -> None:
    assert units.units_compatible(None, None)
    assert units.units_compatible("acres", "thousand_acres")
    assert not units.units_compatible("acre", "second")
    assert not units.units_compatible("acre", None)
    assert not units.units_compatible(None, "acre")
    # unknown units make the comparison undecidable, so it is rejected
    assert not units.units_compatible("flurbs", "flurbs")
