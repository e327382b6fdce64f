"""Sparse integer polynomials in the cell variables ``P[i,j,k]``.

A monomial is stored as the sorted tuple of its factor cells, repeated by
exponent, so ``P[1,1,1]*P[2,2,1]^2`` is ``((1,1,1), (2,2,1), (2,2,1))``.
That tuple doubles as the row list of the monomial's index matrix.
"""

from __future__ import annotations

import re
from collections import Counter
from fractions import Fraction
from math import lcm

_VAR = re.compile(r"P(?:\[\s*(\d+)\s*,\s*(\d+)\s*,\s*(\d+)\s*\]|_\{(\d)(\d)(\d)\}|_?(\d)(\d)(\d))(?:\^(\d+))?")
_TERM_SPLIT = re.compile(r"(?=[+-])")


def as_rows(exponents):
    """Exponent map ``{cell: e}`` -> sorted factor tuple."""
    rows = []
    for cell, e in exponents.items():
        if e < 0:
            raise ValueError("exponents must be non-negative")
        rows.extend([tuple(cell)] * e)
    return tuple(sorted(rows))


def as_exponents(rows):
    return dict(sorted(Counter(rows).items()))


def format_monomial(rows):
    if not rows:
        return "1"
    parts = []
    for (i, j, k), e in sorted(Counter(rows).items()):
        parts.append(f"P[{i},{j},{k}]" + (f"^{e}" if e > 1 else ""))
    return "*".join(parts)


def parse_monomial(text):
    """Parse a product such as ``P[1,1,1]*P[2,1,2]^2`` or ``P111 P212^2``."""
    text = text.strip()
    rows = []
    pos = 0
    for match in _VAR.finditer(text):
        gap = text[pos : match.start()].strip().strip("*").strip()
        if gap:
            raise ValueError(f"unexpected {gap!r} in monomial {text!r}")
        digits = [g for g in match.groups()[:9] if g is not None]
        cell = tuple(int(d) for d in digits)
        exp = int(match.group(10) or 1)
        rows.extend([cell] * exp)
        pos = match.end()
    if text[pos:].strip().strip("*").strip() or not rows:
        raise ValueError(f"cannot parse monomial {text!r}")
    return tuple(sorted(rows))


class SparsePolynomial:
    """Integer combination of cell monomials.

    ``terms`` is a list of ``(coefficient, {cell: exponent})`` pairs.
    Instances are immutable and hash by value.
    """

    __slots__ = ("_terms", "_hash")

    def __init__(self, terms=()):
        acc = Counter()
        for coef, exps in terms:
            rows = exps if isinstance(exps, tuple) else as_rows(exps)
            acc[rows] += int(coef)
        self._terms = {m: c for m, c in sorted(acc.items()) if c != 0}
        self._hash = None

    @classmethod
    def from_rows(cls, mapping):
        """Build from ``{rows_tuple: coefficient}``."""
        return cls((c, m) for m, c in mapping.items())

    @classmethod
    def binomial(cls, m1, m2):
        return cls([(1, m1), (-1, m2)])

    # -- views ---------------------------------------------------------------

    @property
    def terms(self):
        return [(c, as_exponents(m)) for m, c in self._terms.items()]

    def items(self):
        """``(rows, coefficient)`` pairs in canonical (sorted-rows) order."""
        return self._terms.items()

    @property
    def monomials(self):
        return tuple(self._terms)

    def __len__(self):
        return len(self._terms)

    def __bool__(self):
        return bool(self._terms)

    @property
    def degrees(self):
        return {len(m) for m in self._terms}

    @property
    def is_homogeneous(self):
        return len(self.degrees) <= 1

    @property
    def degree(self):
        """Total degree (the common degree for homogeneous polynomials)."""
        return max(self.degrees, default=0)

    def variables(self):
        return sorted({cell for m in self._terms for cell in m})

    def max_index(self):
        return max((max(cell) for cell in self.variables()), default=0)

    def common_factor(self):
        """Cells dividing every term."""
        if not self._terms:
            return set()
        sets = [set(m) for m in self._terms]
        return set.intersection(*sets)

    # -- arithmetic -----------------------------------------------------------

    def __neg__(self):
        return SparsePolynomial((-c, m) for m, c in self._terms.items())

    def __add__(self, other):
        return SparsePolynomial([*((c, m) for m, c in self._terms.items()), *((c, m) for m, c in other._terms.items())])

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        if isinstance(other, int):
            return SparsePolynomial((other * c, m) for m, c in self._terms.items())
        out = Counter()
        for m1, c1 in self._terms.items():
            for m2, c2 in other._terms.items():
                out[tuple(sorted(m1 + m2))] += c1 * c2
        return SparsePolynomial.from_rows(out)

    __rmul__ = __mul__

    def canonical(self):
        """Sign-normalized copy: the first term (sorted rows) has positive coefficient."""
        if self._terms and next(iter(self._terms.values())) < 0:
            return -self
        return self

    def sort_key(self):
        return (self.degree, tuple(self._terms), tuple(self._terms.values()))

    def __eq__(self, other):
        if not isinstance(other, SparsePolynomial):
            return NotImplemented
        return self._terms == other._terms

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(tuple(self._terms.items()))
        return self._hash

    # -- evaluation -----------------------------------------------------------

    def evaluate(self, lookup):
        """Evaluate with ``lookup(cell)`` giving the value of ``P[cell]``."""
        total = 0
        for m, c in self._terms.items():
            value = c
            for cell in m:
                value = value * lookup(cell)
            total = total + value
        return total

    # -- text -----------------------------------------------------------------

    def __str__(self):
        if not self._terms:
            return "0"
        out = []
        for m, c in self._terms.items():
            sign = "+" if c > 0 else "-"
            body = format_monomial(m)
            out.append(f"{sign}{abs(c)}" + ("" if body == "1" else f"*{body}"))
        return "".join(out)

    def __repr__(self):
        return f"SparsePolynomial({str(self)!r})"

    @classmethod
    def parse(cls, text):
        """Parse ``±c*P[i,j,k]^e*...`` (coefficients optional, ``Pijk`` accepted)."""
        text = text.replace(" ", "").replace("−", "-")
        if text in ("", "0"):
            return cls()
        terms = []
        for chunk in _TERM_SPLIT.split(text):
            if not chunk:
                continue
            sign = -1 if chunk[0] == "-" else 1
            body = chunk.lstrip("+-")
            coef_match = re.match(r"(\d+)\*?", body)
            coef = 1
            if coef_match and not body.startswith("P"):
                coef = int(coef_match.group(1))
                body = body[coef_match.end() :]
            terms.append((sign * coef, parse_monomial(body) if body else ()))
        return cls(terms)


def integer_lookup(P):
    """Scale an exact tensor by the lcm of its denominators.

    Returns a dict cell -> int. A homogeneous polynomial vanishes at ``P``
    exactly when it vanishes at the scaled point, and integer products are
    much cheaper than ``Fraction`` products.
    """
    values = {cell: Fraction(v) for cell, v in P.items()}
    scale = 1
    for v in values.values():
        scale = lcm(scale, v.denominator)
    return {cell: int(v * scale) for cell, v in values.items()}


def vanishing_failures(polys, P):
    """Homogeneous polynomials in ``polys`` that do not vanish exactly at ``P``.

    ``P`` must be on the rational backend. Monomial values are cached, so
    checking long lists that share monomials stays cheap.
    """
    lookup = integer_lookup(P)
    cache = {}

    def mono(rows):
        value = cache.get(rows)
        if value is None:
            value = 1
            for cell in rows:
                value *= lookup[cell]
            cache[rows] = value
        return value

    failures = []
    for poly in polys:
        if not poly.is_homogeneous:
            raise ValueError("exact vanishing checks need homogeneous polynomials")
        if sum(c * mono(m) for m, c in poly.items()) != 0:
            failures.append(poly)
    return failures
