"""Number parsing/formatting shared by the text and JSON formats."""

from fractions import Fraction
from numbers import Rational, Real

RATIONAL = "rational"
FLOAT = "float"


def parse_number(text, exact=True):
    """Parse ``p/q``, an integer or a decimal literal.

    Decimal literals are exact decimals, so they convert to ``Fraction``
    without loss. With ``exact=False`` a float is returned instead.
    """
    text = str(text).strip()
    try:
        value = Fraction(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise ValueError(f"not a number: {text!r}") from exc
    return value if exact else float(value)


def coerce(value):
    """Normalize a user-supplied scalar: ints/rationals -> Fraction, reals -> float."""
    if isinstance(value, bool):
        raise TypeError("booleans are not numbers here")
    if isinstance(value, str):
        return parse_number(value)
    if isinstance(value, Fraction):
        return value
    if isinstance(value, Rational):
        return Fraction(value)
    if isinstance(value, Real):
        return float(value)
    # numpy scalars
    if hasattr(value, "dtype"):
        if value.dtype.kind in "iu":
            return Fraction(int(value))
        if value.dtype.kind == "f":
            return float(value)
    raise TypeError(f"unsupported number type: {type(value).__name__}")


def backend_of(values):
    """``"float"`` if any value is a float, else ``"rational"``."""
    return FLOAT if any(isinstance(v, float) for v in values) else RATIONAL


def format_number(value):
    if isinstance(value, Fraction):
        return str(value.numerator) if value.denominator == 1 else f"{value.numerator}/{value.denominator}"
    if isinstance(value, int):
        return str(value)
    return repr(float(value))
