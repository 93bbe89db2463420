"""SPICE-style engineering notation: parsing and canonical printing."""

from __future__ import annotations

import math
import re
from decimal import Decimal

# Decimal exponents of the scale factors accepted on numeric tokens.  "meg"
# is three letters so the regex must try it before the single-letter "m".
SUFFIX_EXPONENT = {
    "f": -15,
    "p": -12,
    "n": -9,
    "u": -6,
    "m": -3,
    "k": 3,
    "meg": 6,
    "g": 9,
}

_NUMBER_RE = re.compile(
    r"^([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)(meg|[fpnumkg])?$",
    re.IGNORECASE,
)

# Largest to smallest; the printer picks the first scale whose mantissa
# lands in [1, 1000).  `shift` is the negated suffix exponent.
_PRINT_SCALES = (
    ("g", -9),
    ("meg", -6),
    ("k", -3),
    ("", 0),
    ("m", 3),
    ("u", 6),
    ("n", 9),
    ("p", 12),
    ("f", 15),
)


def parse_spice_number(token: str) -> float:
    """Parse a number with an optional engineering suffix (10.5u, 63p, 100meg).

    The suffix shifts the decimal exponent before the single binary
    conversion, so "35.338f" and "3.5338e-14" parse to the same float;
    multiplying float("35.338") by 1e-15 would not.
    """
    m = _NUMBER_RE.match(token.strip())
    if m is None:
        raise ValueError(f"not a number: {token!r}")
    mantissa, suffix = m.groups()
    if suffix:
        return float(Decimal(mantissa).scaleb(SUFFIX_EXPONENT[suffix.lower()]))
    return float(mantissa)


def _plain_decimal(d: Decimal) -> str:
    # Decimal.normalize() likes exponent form ("6.3E+1"); force fixed point.
    text = format(d.normalize(), "f")
    return text


def format_spice_number(value: float) -> str:
    """Shortest-suffix form with the mantissa in [1, 1000).

    Every emitted token parses back to the identical float; when no suffix
    candidate survives that round-trip check the bare repr is used instead.
    """
    value = float(value)
    if value == 0.0:
        return "0"
    if not math.isfinite(value):
        raise ValueError(f"cannot format {value!r}")
    d = Decimal(repr(value))
    for suffix, shift in _PRINT_SCALES:
        mantissa = d.scaleb(shift)
        if 1 <= abs(mantissa) < 1000:
            text = _plain_decimal(mantissa) + suffix
            if parse_spice_number(text) == value:
                return text
    return repr(value)
