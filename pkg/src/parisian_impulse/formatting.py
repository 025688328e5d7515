"""Locale-independent number formatting shared by CSV and record emitters."""
from __future__ import annotations


def sig17(value: float) -> str:
    """17 significant digits, dot decimal separator, no locale surprises."""
    return format(float(value), ".17g")
