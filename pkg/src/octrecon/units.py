"""Length parsing with mandatory unit suffixes. Everything is meters internally."""

import re
from decimal import Decimal

from .errors import InvalidArgumentError

# Decimal scale factors keep "892.8nm" and "0.8928um" bit-identical after parsing.
LENGTH_UNITS = {
    "nm": Decimal("1e-9"),
    "um": Decimal("1e-6"),
    "µm": Decimal("1e-6"),  # micro sign
    "μm": Decimal("1e-6"),  # greek mu
    "mm": Decimal("1e-3"),
    "m": Decimal("1"),
}

_LENGTH_RE = re.compile(
    r"^\s*([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)\s*(nm|um|µm|μm|mm|m)\s*$"
)


def parse_length(text: str) -> float:
    """Parse ``"892.8nm"``, ``"0.8928um"`` or ``"8.928e-7m"`` into meters.

    A bare number is rejected: the unit suffix is required.
    """
    if not isinstance(text, str):
        raise InvalidArgumentError(f"length must be a string with a unit suffix, got {text!r}")
    match = _LENGTH_RE.match(text)
    if match is None:
        raise InvalidArgumentError(
            f"cannot parse length {text!r} (missing or unknown unit); expected a number followed by one of nm, um, mm, m"
        )
    value, unit = match.groups()
    return float(Decimal(value) * LENGTH_UNITS[unit])


def format_length(value: float, unit: str = "um") -> str:
    return f"{value / float(LENGTH_UNITS[unit]):.6g}{unit}"
