"""Simulated time as integer picoseconds.

Fixed-point time keeps event ordering exact; float comparison jitter would
break the determinism contract of the simulator.
"""

from __future__ import annotations

from fractions import Fraction

PICOS_PER_SECOND = 10**12
PICOS_PER_MICRO = 10**6


def ps_from_seconds(value: int | float | str | Fraction) -> int:
    """Convert a seconds value to picoseconds, exactly for decimal strings."""
    if isinstance(value, int):
        return value * PICOS_PER_SECOND
    if isinstance(value, str):
        value = Fraction(value)
    frac = Fraction(value) * PICOS_PER_SECOND
    if frac.denominator != 1:
        frac = Fraction(round(frac))
    return int(frac)


def seconds_str(time_ps: int) -> str:
    """Render picoseconds as a decimal seconds string without float noise."""
    sec, rem = divmod(time_ps, PICOS_PER_SECOND)
    if rem == 0:
        return str(sec)
    digits = f"{rem:012d}".rstrip("0")
    return f"{sec}.{digits}"


def seconds_float(time_ps: int) -> float:
    return time_ps / PICOS_PER_SECOND
