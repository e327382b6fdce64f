"""Polynomial invariants of the agreement models.

Three sources of invariants live here:

* hardcoded catalogs for two categories, plus index-exchange binomials for
  the quasi-independence / diagonal-mixture pair at larger ``n``;
* generators that build binomials and mixture combinations from monomials
  sharing their column multisets (the ``sigma_set`` machinery);
* graded-piece counts of the toric ideals, obtained by grouping monomials
  by their image under the monomial parameterization.

Every generated polynomial is checked symbolically against the model's
parameterization before it is returned.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BudgetExceeded, DegreeTooLarge, DimensionMismatch, HypothesisViolated, UnsupportedFamily
from .models import resolve_family
from .polynomial import SparsePolynomial, as_exponents, as_rows, parse_monomial, vanishing_failures
from .tensor import cells

MAX_SIGMA_DEGREE = 8
GENERATOR_MAX_N = 5
DEFAULT_GENERATOR_BUDGET = 10**6
DEFAULT_FIBER_BUDGET = 10**7

# -- monomials as matrices --------------------------------------------------


def _rows_of(m):
    if isinstance(m, MonomialMatrix):
        return m.rows
    if isinstance(m, SparsePolynomial):
        if len(m) != 1:
            raise ValueError("expected a single monomial")
        return m.monomials[0]
    if isinstance(m, str):
        return parse_monomial(m)
    if isinstance(m, dict):
        return as_rows(m)
    return tuple(sorted(tuple(r) for r in m))


def _is_diag(cell):
    return cell[0] == cell[1] == cell[2]


@dataclass(frozen=True)
class MonomialMatrix:
    """Row form of a monomial: one ``(i, j, k)`` row per factor, with repeats.

    Rows are kept in lexicographic order, so two matrices are equal exactly
    when they describe the same monomial.
    """

    rows: tuple

    def __post_init__(self):
        rows = tuple(sorted(tuple(int(x) for x in r) for r in self.rows))
        if not rows:
            raise ValueError("a monomial matrix needs at least one row")
        if any(len(r) != 3 or min(r) < 1 for r in rows):
            raise ValueError("rows must be triples of positive indices")
        object.__setattr__(self, "rows", rows)

    @property
    def t(self):
        return len(self.rows)

    def columns(self):
        return tuple(tuple(sorted(r[s] for r in self.rows)) for s in range(3))

    def exponents(self):
        return as_exponents(self.rows)

    def polynomial(self):
        return SparsePolynomial([(1, self.rows)])

    def __iter__(self):
        return iter(self.rows)

    def __len__(self):
        return len(self.rows)

    def __str__(self):
        return str(self.polynomial())[2:]


def monomial_matrix(m):
    """Matrix form of a monomial given as text, exponent map, rows or polynomial."""
    return MonomialMatrix(_rows_of(m))


def occurrence_matrix(m, n):
    """``n x 3`` counts: entry ``(t, s)`` is how often value ``t+1`` sits in index ``s+1``."""
    rows = _rows_of(m)
    out = np.zeros((n, 3), dtype=np.int64)
    for row in rows:
        for s, v in enumerate(row):
            if not 1 <= v <= n:
                raise DimensionMismatch(f"index {v} out of range for n={n}")
            out[v - 1, s] += 1
    return out


def rho(A):
    """Number of diagonal rows (factors ``P[i,i,i]``, with multiplicity)."""
    return sum(1 for r in _rows_of(A) if _is_diag(r))


def _fiber_rows(rows):
    """All row multisets with the same three column multisets as ``rows``.

    Column 1 is held fixed (sorted); columns 2 and 3 are dealt out
    recursively. Rows sharing a first entry are forced into non-decreasing
    ``(j, k)`` order, so each multiset is produced exactly once.
    """
    rows = tuple(sorted(rows))
    first = [r[0] for r in rows]
    second = Counter(r[1] for r in rows)
    third = Counter(r[2] for r in rows)
    vals2 = sorted(second)
    vals3 = sorted(third)
    t = len(rows)
    out = []
    current = []

    def deal(pos, prev):
        if pos == t:
            out.append(tuple(current))
            return
        tied = pos > 0 and first[pos] == first[pos - 1]
        for v2 in vals2:
            if not second[v2]:
                continue
            for v3 in vals3:
                if not third[v3] or (tied and (v2, v3) < prev):
                    continue
                second[v2] -= 1
                third[v3] -= 1
                current.append((first[pos], v2, v3))
                deal(pos + 1, (v2, v3))
                current.pop()
                second[v2] += 1
                third[v3] += 1

    deal(0, None)
    return out


_VARIANTS = ("preserve", "nonincrease")


def _sigma_rows(rows, variant):
    bound = rho(rows)
    keep = (lambda r: r == bound) if variant == "preserve" else (lambda r: r <= bound)
    return [f for f in _fiber_rows(rows) if f != rows and keep(rho(f))]


def sigma_set(A, variant="preserve"):
    """Monomials reachable from ``A`` by permuting each column independently.

    ``variant="preserve"`` keeps results with the same number of diagonal
    rows as ``A``; ``"nonincrease"`` keeps those with at most as many.
    ``A`` itself is never included.
    """
    if variant not in _VARIANTS:
        raise ValueError(f"variant must be one of {_VARIANTS}")
    rows = _rows_of(A)
    if len(rows) > MAX_SIGMA_DEGREE:
        raise DegreeTooLarge(f"degree {len(rows)} exceeds {MAX_SIGMA_DEGREE}")
    return frozenset(MonomialMatrix(f) for f in _sigma_rows(rows, variant))


# -- parameterizations ------------------------------------------------------

_BITS = 10
_MAX_EXP = (1 << _BITS) - 1


class Parameterization:
    """Cells as polynomials in free model parameters.

    Each cell maps to a list of ``(code, coefficient)`` terms. A parameter
    monomial is packed into one integer with ``_BITS`` bits per variable, so
    multiplying monomials is integer addition. The normalizing constant and
    the simplex constraints are dropped: invariants are homogeneous, and the
    free cone spans the same Zariski closure as the model.
    """

    def __init__(self, family, n):
        self.family = resolve_family(family)
        self.n = n
        names = [f"{x}{i}" for x in "abc" for i in range(1, n + 1)]
        fam = self.family
        if fam == "QI":
            extra = [f"g{i}" for i in range(1, n + 1)]
        elif fam == "qI":
            extra = ["g"]
        elif fam == "pQI":
            extra = ["g12", "g13", "g23"]
        elif fam == "Mix":
            extra = ["s"] + [f"t{i}" for i in range(1, n + 1)]
        elif fam == "mix":
            extra = ["s", "t"]
        else:
            extra = ["s", "t12", "t13", "t23", "t123"]
        self.names = names + extra
        self._code = {name: 1 << (_BITS * pos) for pos, name in enumerate(self.names)}
        self.images = {cell: self._image(cell) for cell in cells(n)}
        self._cache = {}

    def _image(self, cell):
        i, j, k = cell
        code = self._code
        base = code[f"a{i}"] + code[f"b{j}"] + code[f"c{k}"]
        diag = i == j == k
        fam = self.family
        if fam == "QI":
            return [(base + (code[f"g{i}"] if diag else 0), 1)]
        if fam == "qI":
            return [(base + (code["g"] if diag else 0), 1)]
        if fam == "pQI":
            extra = (code["g12"] if i == j else 0) + (code["g13"] if i == k else 0) + (code["g23"] if j == k else 0)
            return [(base + extra, 1)]
        terms = [(base + code["s"], 1)]
        if fam == "Mix" and diag:
            terms.append((code[f"t{i}"], 1))
        elif fam == "mix" and diag:
            terms.append((code["t"], 1))
        elif fam == "pMix":
            for flag, name in ((i == j, "t12"), (i == k, "t13"), (j == k, "t23"), (diag, "t123")):
                if flag:
                    terms.append((code[name], 1))
        return terms

    @property
    def is_toric(self):
        return self.family in ("QI", "qI", "pQI")

    def monomial_code(self, rows):
        """Packed parameter monomial of a cell monomial (toric families)."""
        return sum(self.images[r][0][0] for r in rows)

    def expand_monomial(self, rows):
        hit = self._cache.get(rows)
        if hit is not None:
            return hit
        acc = {0: 1}
        for cell in rows:
            nxt = defaultdict(int)
            for c1, v1 in acc.items():
                for c2, v2 in self.images[cell]:
                    nxt[c1 + c2] += v1 * v2
            acc = nxt
        self._cache[rows] = acc
        return acc

    def expand(self, poly):
        """Image of ``poly`` as ``{code: coefficient}`` with zero entries dropped."""
        if poly.degree > _MAX_EXP:
            raise DegreeTooLarge("degree too large for packed exponents")
        if poly.max_index() > self.n:
            raise DimensionMismatch(f"polynomial uses indices beyond n={self.n}")
        out = defaultdict(int)
        for rows, coef in poly.items():
            for code, value in self.expand_monomial(rows).items():
                out[code] += coef * value
        return {c: v for c, v in out.items() if v}

    def vanishes(self, poly):
        """True when ``poly`` is identically zero on the parameterization."""
        return not self.expand(poly)

    def decode(self, code):
        exps = {}
        for pos, name in enumerate(self.names):
            e = (code >> (_BITS * pos)) & _MAX_EXP
            if e:
                exps[name] = e
        return exps


_PARAM_CACHE = {}


def parameterization(family, n):
    key = (resolve_family(family), n)
    if key not in _PARAM_CACHE:
        _PARAM_CACHE[key] = Parameterization(*key)
    return _PARAM_CACHE[key]


def is_invariant(poly, family, n):
    """Symbolic check that ``poly`` vanishes on the whole model."""
    return parameterization(family, n).vanishes(poly)


def evaluate(p, P):
    """Value of ``p`` at the tensor ``P`` (exact on the rational backend)."""
    if p.max_index() > P.n:
        raise DimensionMismatch(f"polynomial uses indices beyond n={P.n}")
    arr = P.array
    return p.evaluate(lambda cell: arr[cell[0] - 1, cell[1] - 1, cell[2] - 1])


def relative_residual(p, P):
    """``|p(P)|`` divided by the sum of ``|term(P)|`` (0 when every term is 0).

    This is the scale-free residual used for float tensors.
    """
    if p.max_index() > P.n:
        raise DimensionMismatch(f"polynomial uses indices beyond n={P.n}")
    arr = np.asarray(P.array, dtype=float)
    total = 0.0
    scale = 0.0
    for rows, coef in p.items():
        value = coef * math.prod(arr[r[0] - 1, r[1] - 1, r[2] - 1] for r in rows)
        total += value
        scale += abs(value)
    return abs(total) / scale if scale > 0 else 0.0


def nonvanishing(polys, P):
    """Members of ``polys`` that do not vanish at ``P``.

    Exact for rational tensors. For float tensors a polynomial counts as
    vanishing when its relative residual is at most ``1e-9``.
    """
    if P.is_rational:
        return vanishing_failures(polys, P)
    return [p for p in polys if relative_residual(p, P) > 1e-9]


# -- polynomial lists -------------------------------------------------------


def canonical_list(polys):
    """Deduplicate up to sign and sort by degree, then leading monomial."""
    unique = {p.canonical() for p in polys if p}
    return sorted(unique, key=SparsePolynomial.sort_key)


def format_polynomials(polys):
    return "".join(f"{p}\n" for p in polys)


def parse_polynomials(text):
    out = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            out.append(SparsePolynomial.parse(line))
    return out


def dump_polynomials(polys, path):
    Path(path).write_text(format_polynomials(polys))


def load_polynomials(path):
    return parse_polynomials(Path(path).read_text())


# -- enumeration helpers ----------------------------------------------------


def _off_cells(n):
    return [c for c in cells(n) if not _is_diag(c)]


def _diag_cells(n):
    return [(i, i, i) for i in range(1, n + 1)]


def _count_monomials(n, degree, diag_count):
    off = n**3 - n
    return math.comb(n + diag_count - 1, diag_count) * math.comb(off + degree - diag_count - 1, degree - diag_count)


def _monomials_with_rho(n, degree, diag_count):
    off = _off_cells(n)
    diag = _diag_cells(n)
    for dpart in itertools.combinations_with_replacement(diag, diag_count):
        for opart in itertools.combinations_with_replacement(off, degree - diag_count):
            yield tuple(sorted(dpart + opart))


def _group_by_image(family, n, monomials):
    param = parameterization(family, n)
    groups = defaultdict(list)
    for rows in monomials:
        groups[param.monomial_code(rows)].append(rows)
    return [sorted(g) for _, g in sorted(groups.items()) if len(g) > 1]


def _coprime(m1, m2):
    return not set(m1) & set(m2)


def _diag_part(rows):
    return tuple(r for r in rows if _is_diag(r))


def _distinct_off(rows):
    return len({r for r in rows if not _is_diag(r)})


# -- catalogs ---------------------------------------------------------------

_QUADRICS_N2 = (
    "P121*P212-P112*P221",
    "P122*P211-P121*P212",
)

_COMMON_QI_N2 = _QUADRICS_N2 + (
    "P111*P212*P221^2-P121*P211^2*P222",
    "P111*P122*P221^2-P121^2*P211*P222",
    "P111*P212^2*P221-P112*P211^2*P222",
    "P111*P122^2*P221-P112*P121^2*P222",
    "P111*P122*P212^2-P112^2*P211*P222",
    "P111*P122^2*P212-P112^2*P121*P222",
    "P111*P112*P221^3-P121^2*P211^2*P222",
    "P111*P122*P212*P221-P112*P121*P211*P222",
)

_UNIFORM_MIX_N2 = _QUADRICS_N2 + (
    "P121*P211^2-P111*P211*P221-P212*P221^2+P211*P221*P222",
    "P112*P211^2-P111*P211*P212-P212^2*P221+P211*P212*P222",
    "P121^2*P211-P111*P121*P221-P122*P221^2+P121*P221*P222",
    "P112*P121*P211-P111*P112*P221-P122*P212*P221+P112*P221*P222",
    "P112^2*P211-P111*P112*P212-P122*P212^2+P112*P212*P222",
    "P112*P121^2-P111*P121*P122-P122^2*P221+P121*P122*P222",
    "P112^2*P121-P111*P112*P122-P122^2*P212+P112*P122*P222",
    "P111*P112*P122*P212+P122^2*P212^2-P112^3*P221-P112*P122*P212*P222",
)

_PAIRWISE_QI_N2 = ("P111*P122*P212*P221-P112*P121*P211*P222",)

_N2_CATALOGS = {
    "QI": _QUADRICS_N2,
    "Mix": _QUADRICS_N2,
    "qI": _COMMON_QI_N2,
    "mix": _UNIFORM_MIX_N2,
    "pQI": _PAIRWISE_QI_N2,
    "pMix": (),
}


def catalog(family, n):
    """Known invariants of a model.

    For ``n = 2`` every family has a fixed list (``pMix`` has none). For
    ``QI`` and ``Mix`` with ``n >= 3`` the list is generated: every coprime
    binomial between off-diagonal monomials of degree 2 or 3 sharing their
    column multisets. Those lists are sound but not claimed complete.
    """
    family = resolve_family(family)
    if n == 2:
        return [SparsePolynomial.parse(s) for s in _N2_CATALOGS[family]]
    if family in ("QI", "Mix") and n >= 3:
        if n > GENERATOR_MAX_N:
            raise UnsupportedFamily(f"catalog for n={n} exceeds the enumeration bound {GENERATOR_MAX_N}")
        polys = _off_diagonal_binomials(n, 2) + _off_diagonal_binomials(n, 3)
        return canonical_list(polys)
    raise UnsupportedFamily(f"no catalog for family {family!r} with n={n}")


def _off_diagonal_binomials(n, degree, budget=DEFAULT_GENERATOR_BUDGET):
    _check_budget(_count_monomials(n, degree, 0), budget, f"off-diagonal degree {degree}, n={n}")
    out = []
    for fiber in _group_by_image("qI", n, _monomials_with_rho(n, degree, 0)):
        for m1, m2 in itertools.combinations(fiber, 2):
            if _coprime(m1, m2):
                out.append(SparsePolynomial.binomial(m1, m2))
    return out


def _check_budget(count, budget, what):
    if count > budget:
        raise BudgetExceeded(f"{what}: {count} items exceed the budget of {budget}")


# -- generators for the common-weight quasi-independence model --------------

QIN_FAMILIES = {"i": (2, 0), "ii": (3, 1), "iii": (3, 0), "iv": (4, 1), "v": (5, 1)}
MIXN_FAMILIES = ("i", "ii", "iii", "iv", "v", "vi", "vii")


def _family_keys(family, allowed):
    if family is None:
        return list(allowed)
    keys = [family] if isinstance(family, str) else list(family)
    for key in keys:
        if key not in allowed:
            raise UnsupportedFamily(f"unknown family {key!r}; expected one of {tuple(allowed)}")
    return keys


def _check_n(n):
    if not 2 <= n <= GENERATOR_MAX_N:
        raise UnsupportedFamily(f"generators support 2 <= n <= {GENERATOR_MAX_N}, got n={n}")


def _qin_family(n, key, budget):
    degree, diag_count = QIN_FAMILIES[key]
    _check_budget(_count_monomials(n, degree, diag_count), budget, f"family ({key}), n={n}")
    out = []
    for fiber in _group_by_image("qI", n, _monomials_with_rho(n, degree, diag_count)):
        for m1, m2 in itertools.combinations(fiber, 2):
            if not _coprime(m1, m2):
                continue
            # with a diagonal factor the other side must carry a different one
            if diag_count and _diag_part(m1) == _diag_part(m2):
                continue
            if max(_distinct_off(m1), _distinct_off(m2)) < min(2, degree - diag_count):
                continue
            out.append(SparsePolynomial.binomial(m1, m2))
    return out


def generate_qin_invariants(n, family=None, *, budget=DEFAULT_GENERATOR_BUDGET):
    """Binomial invariants of the common-weight quasi-independence model.

    ``family`` selects among ``"i"`` to ``"v"`` (a name or a list; default
    all). Families ``i``/``iii`` exchange indices between off-diagonal
    factors of degree 2/3; ``ii``/``iv``/``v`` start from one diagonal
    factor and two, three or four off-diagonal ones and land on a
    different diagonal factor. Only coprime binomials are emitted.

    Raises ``BudgetExceeded`` when a family would enumerate more than
    ``budget`` monomials.
    """
    _check_n(n)
    out = []
    for key in _family_keys(family, QIN_FAMILIES):
        out.extend(_qin_family(n, key, budget))
    return canonical_list(out)


# -- generators for the uniform-diagonal mixture -----------------------------


class _SigmaCache:
    """Memoized ``nonincrease`` sigma sets keyed by row tuples."""

    def __init__(self):
        self._data = {}

    def __call__(self, rows):
        rows = tuple(sorted(rows))
        hit = self._data.get(rows)
        if hit is None:
            hit = _sigma_rows(rows, "nonincrease")
            self._data[rows] = hit
        return hit


def _side_condition(cell, i, j, n):
    # n = 2 has no index outside {i, j}; the mix_2 catalog still needs these
    if n == 2:
        return True
    return sum(1 for v in cell if v not in (i, j)) >= 2


def _mixn_swap(n, key, sigma, budget):
    """Families ii, iv, vii: ``P_iii X - P_jjj X - U(P_iii X) + U(P_jjj X)``."""
    xdeg = {"ii": 1, "iv": 2, "vii": 3}[key]
    off = _off_cells(n)
    _check_budget(math.comb(n, 2) * math.comb(len(off) + xdeg - 1, xdeg), budget, f"family ({key}), n={n}")
    jobs = []
    count = 0
    for i, j in itertools.combinations(range(1, n + 1), 2):
        allowed = [c for c in off if _side_condition(c, i, j, n)]
        for X in itertools.combinations_with_replacement(allowed, xdeg):
            if xdeg >= 2 and len(set(X)) < 2:
                continue
            mi = tuple(sorted(((i, i, i),) + X))
            mj = tuple(sorted(((j, j, j),) + X))
            count += len(sigma(mi)) * len(sigma(mj))
            _check_budget(count, budget, f"family ({key}) candidates, n={n}")
            jobs.append((mi, mj))
    out = []
    for mi, mj in jobs:
        for ui in sigma(mi):
            for uj in sigma(mj):
                out.append(SparsePolynomial([(1, mi), (-1, mj), (-1, ui), (1, uj)]))
    return out


def _diag(i):
    return ((i, i, i),)


def _mul(*parts):
    return tuple(sorted(itertools.chain.from_iterable(parts)))


def _mixn_family_v(n, sigma, budget):
    out = []
    count = 0
    for i, j, k in itertools.permutations(range(1, n + 1), 3):
        for q in _off_cells(n):
            if j in q:
                continue
            Q = (q,)
            Pi, Pj, Pk = _diag(i), _diag(j), _diag(k)
            fixed = [
                (1, _mul(Pi, Pj, Q)),
                (-1, _mul(Pi, Pk, Q)),
                (1, _mul(Pj, Pk, Q)),
                (-1, _mul(Pj, Pj, Q)),
            ]
            count += len(sigma(_mul(Pj, Q))) * len(sigma(_mul(Pi, Pk, Q))) * len(sigma(_mul(Pj, Pk, Q)))
            _check_budget(count, budget, f"family (v) candidates, n={n}")
            for u_jq in sigma(_mul(Pj, Q)):
                for u_ikq in sigma(_mul(Pi, Pk, Q)):
                    for u_jkq in sigma(_mul(Pj, Pk, Q)):
                        out.append(
                            SparsePolynomial(
                                fixed
                                + [
                                    (1, _mul(Pj, u_jq)),
                                    (-1, _mul(Pi, u_jq)),
                                    (1, u_ikq),
                                    (-1, u_jkq),
                                ]
                            )
                        )
    return out


def _mixn_family_vi(n, sigma):
    out = []
    for i, j, k in itertools.permutations(range(1, n + 1), 3):
        Pi, Pj, Pk = _diag(i), _diag(j), _diag(k)
        fixed = [
            (1, _mul(Pi, Pj, Pj)),
            (-1, _mul(Pi, Pi, Pj)),
            (1, _mul(Pi, Pi, Pk)),
            (-1, _mul(Pi, Pk, Pk)),
            (1, _mul(Pj, Pk, Pk)),
            (-1, _mul(Pj, Pj, Pk)),
        ]
        for u_ij in sigma(_mul(Pi, Pj)):
            for u_ik in sigma(_mul(Pi, Pk)):
                for u_jk in sigma(_mul(Pj, Pk)):
                    extra = [
                        (1, _mul(Pi, u_ij)),
                        (-1, _mul(Pj, u_ij)),
                        (1, _mul(Pk, u_ik)),
                        (-1, _mul(Pi, u_ik)),
                        (1, _mul(Pj, u_jk)),
                        (-1, _mul(Pk, u_jk)),
                    ]
                    out.append(SparsePolynomial(fixed + extra))
    return out


def generate_mixn_invariants(n, family=None, *, budget=DEFAULT_GENERATOR_BUDGET):
    """Invariants of the mixture with a uniform diagonal component.

    ``family`` selects among ``"i"`` to ``"vii"`` (default all). Families
    ``i``/``iii`` are the off-diagonal binomials. The others swap one
    diagonal factor for another and compensate with monomials from
    ``sigma_set(..., "nonincrease")``. Candidates that are zero, share a
    factor in every term, or fail the symbolic check against the
    parameterization are dropped.
    """
    _check_n(n)
    keys = _family_keys(family, MIXN_FAMILIES)
    sigma = _SigmaCache()
    param = parameterization("mix", n)
    out = []
    for key in keys:
        if key in ("i", "iii"):
            out.extend(_qin_family(n, key, budget))
            continue
        if key in ("ii", "iv", "vii"):
            candidates = _mixn_swap(n, key, sigma, budget)
        elif key == "v":
            candidates = _mixn_family_v(n, sigma, budget) if n >= 3 else []
        else:
            candidates = _mixn_family_vi(n, sigma) if n >= 3 else []
        seen = set()
        for poly in candidates:
            poly = poly.canonical()
            if not poly or poly in seen:
                continue
            seen.add(poly)
            if poly.common_factor() or not param.vanishes(poly):
                continue
            out.append(poly)
    return canonical_list(out)


# -- matrix criteria for n = 2 ------------------------------------------------

_P111 = (1, 1, 1)
_P222 = (2, 2, 2)


def _check_degree_match(f, g):
    if len(f) != len(g):
        raise HypothesisViolated("monomials must have the same degree")


def matrix_criterion(f, g, h=None, w=None, n=2):
    """Occurrence-matrix test for invariants of the two-category models.

    With two monomials: for coprime ``f`` and ``g`` whose diagonal factors
    pair up (``P111`` in ``f`` as often as ``P222`` in ``g``, and vice versa),
    ``f - g`` is an invariant of the common-weight model exactly when the
    occurrence matrices agree.

    With four monomials: ``f = P111*Y``, ``g = P222*Y``, ``h`` and ``w`` free
    of diagonal factors. Returns whether ``H = F`` and ``W = G``, which makes
    ``h - f + g - w`` an invariant of the uniform-diagonal mixture. The
    swapped matching ``H = G, W = F`` never does (it certifies
    ``h - g + f - w`` instead), and coprimality is not required: the known
    degree-3 invariants share factors between ``h`` and ``f``.

    Raises ``HypothesisViolated`` when the preconditions fail.
    """
    if n != 2:
        raise HypothesisViolated("the matrix criterion is stated for n = 2")
    if (h is None) != (w is None):
        raise HypothesisViolated("pass either two or four monomials")
    f, g = _rows_of(f), _rows_of(g)
    for m in (f, g) if h is None else (f, g, _rows_of(h), _rows_of(w)):
        if any(max(r) > 2 for r in m):
            raise HypothesisViolated("indices must be 1 or 2")
    if h is None:
        _check_degree_match(f, g)
        if not _coprime(f, g):
            raise HypothesisViolated("f and g must be coprime")
        if f.count(_P111) != g.count(_P222) or f.count(_P222) != g.count(_P111):
            raise HypothesisViolated("P111 in f must pair with P222 in g (and P222 in f with P111 in g)")
        return bool(np.array_equal(occurrence_matrix(f, 2), occurrence_matrix(g, 2)))
    h, w = _rows_of(h), _rows_of(w)
    for m in (g, h, w):
        _check_degree_match(f, m)
    if any(c in m for m in (h, w) for c in (_P111, _P222)):
        raise HypothesisViolated("h and w must not contain P111 or P222")
    if f.count(_P111) != 1 or g.count(_P222) != 1 or f.count(_P222) or g.count(_P111):
        raise HypothesisViolated("f must contain P111 once and g P222 once, with no other diagonal factor")
    rest_f = list(f)
    rest_f.remove(_P111)
    rest_g = list(g)
    rest_g.remove(_P222)
    if rest_f != rest_g:
        raise HypothesisViolated("f and g must agree apart from P111 and P222")
    F, G, H, W = (occurrence_matrix(m, 2) for m in (f, g, h, w))
    return bool(np.array_equal(H, F) and np.array_equal(W, G))


# -- toric fibers -------------------------------------------------------------

TORIC_FAMILIES = ("QI", "qI", "pQI")


def _toric_family(family):
    family = resolve_family(family)
    if family not in TORIC_FAMILIES:
        raise UnsupportedFamily(f"fiber counts need a toric family {TORIC_FAMILIES}, got {family!r}")
    return family


def _cell_exponents(family, n):
    """Integer exponent vectors of each cell's parameter image, in cell order."""
    param = parameterization(family, n)
    width = len(param.names)
    rows = []
    for cell in cells(n):
        code = param.images[cell][0][0]
        rows.append([(code >> (_BITS * pos)) & _MAX_EXP for pos in range(width)])
    return np.array(rows, dtype=np.int64)


def _image_keys(exps, degree):
    """Pack exponent vectors into scalars; radix ``degree + 1`` keeps sums collision-free."""
    radix = degree + 1
    width = exps.shape[1]
    if width * math.log2(radix) < 62:
        weights = np.array([radix**p for p in range(width)], dtype=np.int64)
        return exps @ weights
    # too wide for int64: fall back to python integers
    weights = [radix**p for p in range(width)]
    return np.array([sum(int(e) * w for e, w in zip(row, weights)) for row in exps], dtype=object)


def fiber_dimension(family, n, degree, budget=DEFAULT_FIBER_BUDGET):
    """Dimension of the degree-``degree`` piece of the model's toric ideal.

    Every degree-``degree`` monomial in the ``n**3`` cells is mapped to its
    exponent vector in the parameters; the answer is the number of monomials
    minus the number of distinct images, i.e. the sum over fibers of
    ``size - 1``.
    """
    family = _toric_family(family)
    if degree < 1:
        raise ValueError("degree must be positive")
    total = math.comb(n**3 + degree - 1, degree)
    _check_budget(total, budget, f"{family}, n={n}, degree {degree}")
    keys = _image_keys(_cell_exponents(family, n), degree)
    size = len(keys)
    last = np.arange(size)
    sums = keys.copy()
    for _ in range(degree - 1):
        counts = size - last
        starts = np.repeat(last, counts)
        offsets = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
        last = starts + offsets
        sums = np.repeat(sums, counts) + keys[last]
    distinct = len(set(sums.tolist())) if sums.dtype == object else len(np.unique(sums))
    return int(total - distinct)


def toric_fibers(family, n, degree, budget=DEFAULT_GENERATOR_BUDGET):
    """Non-trivial fibers (lists of row tuples) among degree-``degree`` monomials."""
    family = _toric_family(family)
    total = math.comb(n**3 + degree - 1, degree)
    _check_budget(total, budget, f"{family}, n={n}, degree {degree}")
    return _group_by_image(family, n, itertools.combinations_with_replacement(cells(n), degree))


def fiber_binomials(family, n, degree, budget=DEFAULT_GENERATOR_BUDGET):
    """A basis of the graded piece: each fiber member minus the fiber's first member."""
    out = []
    for fiber in toric_fibers(family, n, degree, budget):
        head = fiber[0]
        out.extend(SparsePolynomial.binomial(head, m) for m in fiber[1:])
    return out
