"""Hadamard products, the linear varieties behind the quasi-independence
families, the Mix -> QI parameter transfer and boundary counterexamples."""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import NamedTuple

import numpy as np

from ._numbers import RATIONAL, format_number
from .errors import BoundaryPoint, InvalidParams, NotDefined, UnsupportedFamily
from .models import MixParams, QIParams, agreement_weights, materialize, resolve_family
from .polynomial import SparsePolynomial
from .tensor import ProbabilityTensor, cells

FLOAT_REL_TOL = 1e-10


def _arr(P):
    return P.array if isinstance(P, ProbabilityTensor) else np.asarray(P, dtype=object)


def hadamard(p, q):
    """Entrywise product of two tensor points, returned unnormalized.

    Raises ``NotDefined`` when every coordinate product vanishes.
    """
    x, y = _arr(p), _arr(q)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {y.shape}")
    prod = x * y
    if not any(v != 0 for v in prod.ravel()):
        raise NotDefined("the points have disjoint supports")
    return ProbabilityTensor.unnormalized(prod)


def independence_tensor(a, b, c):
    """Normalized outer product of three non-negative vectors."""
    arr = np.einsum("i,j,k->ijk", *(np.asarray(v, dtype=object) for v in (a, b, c)))
    return ProbabilityTensor.unnormalized(arr).normalize()


def h_point(params):
    """Agreement-weight tensor of a quasi-independence point (1 on plain cells)."""
    ones = tuple(1 for _ in range(params.n))
    flat = replace(params, a=ones, b=ones, c=ones)
    return ProbabilityTensor.unnormalized(agreement_weights(flat))


# -- linear varieties ---------------------------------------------------------


class LinearVarietyId(enum.Enum):
    H = "H"
    HHAT = "Hhat"
    HTILDE = "Htilde"
    DIAG = "Diag"


def _linear(*cells_signs):
    return SparsePolynomial([(s, (cell,)) for cell, s in cells_signs])


def variety_equations(variety, n):
    """Linear forms cutting out a variety.

    ``H``: all off-diagonal cells equal. ``Hhat``: additionally all
    diagonal cells equal. ``Htilde``: cells agreeing in one index pair match
    across the repeated value, plus equal diagonal cells. ``Diag``: every
    off-diagonal cell vanishes. Equalities among a block of cells are
    written against its first cell.
    """
    variety = LinearVarietyId(variety)
    off = [c for c in cells(n) if len(set(c)) > 1]
    eqs = []
    if variety == LinearVarietyId.DIAG:
        return [_linear((c, 1)) for c in off]
    if variety in (LinearVarietyId.H, LinearVarietyId.HHAT):
        eqs.extend(_linear((off[0], 1), (c, -1)) for c in off[1:])
    if variety == LinearVarietyId.HTILDE:
        for t in range(2, n + 1):
            for free in range(1, n + 1):
                # both sides must be single-agreement cells, so free index != 1, t
                if free in (1, t):
                    continue
                eqs.append(_linear(((1, 1, free), 1), ((t, t, free), -1)))
                eqs.append(_linear(((1, free, 1), 1), ((t, free, t), -1)))
                eqs.append(_linear(((free, 1, 1), 1), ((free, t, t), -1)))
    if variety in (LinearVarietyId.HHAT, LinearVarietyId.HTILDE):
        eqs.extend(_linear(((1, 1, 1), 1), ((i, i, i), -1)) for i in range(2, n + 1))
    return eqs


def variety_membership(P, variety):
    """True when every equation of ``variety`` holds at ``P``.

    Exact on the rational backend; floats use a tolerance relative to the
    largest entry.
    """
    arr = _arr(P)
    n = arr.shape[0]
    exact = all(not isinstance(v, float) for v in arr.ravel()) and arr.dtype == object
    scale = max((abs(float(v)) for v in arr.ravel()), default=0.0)
    for eq in variety_equations(variety, n):
        value = eq.evaluate(lambda c: arr[c[0] - 1, c[1] - 1, c[2] - 1])
        if exact:
            if value != 0:
                return False
        elif abs(float(value)) > FLOAT_REL_TOL * max(scale, 1e-300):
            return False
    return True


# -- inclusion transfer -------------------------------------------------------


def mix_to_qi(params):
    """Rewrite an interior ``Mix`` point as a ``QI`` point with the same tensor.

    Uses ``a = alpha * a_mix``, ``b, c`` unchanged and
    ``gamma_i = 1 + (1 - alpha) d_i / (alpha a_i b_i c_i)``. Raises
    ``BoundaryPoint`` when ``alpha = 0`` or any marginal or ``d`` coordinate
    is zero.
    """
    if not isinstance(params, MixParams):
        raise InvalidParams("mix_to_qi expects MixParams")
    if not params.alpha > 0:
        raise BoundaryPoint("alpha = 0: the tensor is purely diagonal")
    for name in ("a", "b", "c", "d"):
        if any(v == 0 for v in getattr(params, name)):
            raise BoundaryPoint(f"{name} has a zero coordinate")
    alpha = params.alpha
    a = tuple(alpha * v for v in params.a)
    gamma = tuple(
        1 + (1 - alpha) * d / (alpha * ai * bi * ci) for d, ai, bi, ci in zip(params.d, params.a, params.b, params.c)
    )
    return QIParams(a, params.b, params.c, gamma)


# -- support (zero-pattern) feasibility --------------------------------------


def _support(P):
    arr = _arr(P)
    n = arr.shape[0]
    return n, {c for c in cells(n) if arr[c[0] - 1, c[1] - 1, c[2] - 1] != 0}


def _projection_box(n, support):
    proj = [{c[s] for c in support} for s in range(3)]
    box = {c for c in cells(n) if all(c[s] in proj[s] for s in range(3))}
    return box


def _off(cs):
    return {c for c in cs if len(set(c)) > 1}


def qi_support_feasible(P):
    """Whether some ``QI`` parameter point (zeros allowed) has exactly ``P``'s support.

    Off-diagonal cells are non-zero exactly on a product set, so the
    off-diagonal support must fill the box spanned by the support's
    projections; diagonal cells may be switched off by their weights.
    """
    n, support = _support(P)
    if not support:
        return False
    return _off(support) == _off(_projection_box(n, support))


def mix_support_feasible(P):
    """Whether some ``Mix`` parameter point has exactly ``P``'s support.

    With ``alpha = 0`` any non-empty diagonal support is reachable;
    otherwise the independence part fills a box off the diagonal and
    covers every diagonal cell in that box. The smallest candidate box is
    spanned by the off-diagonal support alone, since ``d`` may add diagonal
    cells outside it.
    """
    n, support = _support(P)
    if not support:
        return False
    off = _off(support)
    if not off:
        return True
    box = _projection_box(n, off)
    return off == _off(box) and (box - _off(box)) <= support


# -- boundary counterexamples -------------------------------------------------


class Direction(enum.Enum):
    MIX_NOT_IN_QI = "MixNotInQI"
    QI_NOT_IN_MIX = "QINotInMix"


_CLAIM = re.compile(r"^P\[(\d+),(\d+),(\d+)\] = (\S+)(?: (>) 0)?")


@dataclass(frozen=True)
class WitnessReport:
    """Plain-text deduction, one step per line.

    Every line opens with an entry claim ``P[i,j,k] = v`` (optionally
    followed by ``> 0``); ``check`` re-reads those claims against a tensor.
    ``support_argument`` records the zero-pattern verdicts: the tensor's
    support is reachable in the source model and unreachable in the target.
    """

    direction: Direction
    lines: tuple
    support_argument: tuple

    def check(self, P):
        arr = _arr(P)
        for line in self.lines:
            m = _CLAIM.match(line)
            if not m:
                return False
            i, j, k = (int(x) for x in m.groups()[:3])
            value = arr[i - 1, j - 1, k - 1]
            if Fraction(m.group(4)) != Fraction(value):
                return False
            if m.group(5) and not value > 0:
                return False
        return True

    def passed(self, P):
        source_ok, target_ok = self.support_argument
        return self.check(P) and source_ok and not target_ok

    def __str__(self):
        return "\n".join(self.lines)


def _entry(P, cell):
    return format_number(P[cell])


def boundary_counterexample(direction, n, a=None, b=None, c=None):
    """A boundary tensor in one model but not the other, with its witness.

    ``MixNotInQI``: the diagonal tensor with ``d`` uniform. ``QINotInMix``:
    the ``QI`` tensor with ``gamma_1 = 0``, other weights 1 and marginals
    ``a, b, c`` (all ones by default), whose only zero is ``P[1,1,1]``.
    """
    direction = Direction(direction)
    if n < 2:
        raise InvalidParams("n must be at least 2")
    if direction == Direction.MIX_NOT_IN_QI:
        d = tuple(Fraction(1, n) for _ in range(n))
        P = materialize(MixParams(d, d, d, d, 0))
        lines = (
            f"P[1,1,1] = {_entry(P, (1, 1, 1))} > 0 ; in QI this is zeta*gamma1*a1*b1*c1, so a1, b1, c1 != 0",
            f"P[1,1,2] = {_entry(P, (1, 1, 2))} ; in QI this is zeta*a1*b1*c2, so c2 = 0",
            f"P[2,2,2] = {_entry(P, (2, 2, 2))} > 0 ; in QI this is zeta*gamma2*a2*b2*c2, so c2 != 0: contradiction",
        )
        support = (mix_support_feasible(P), qi_support_feasible(P))
        return P, WitnessReport(direction, lines, support)
    ones = tuple(1 for _ in range(n))
    a, b, c = (ones if v is None else tuple(v) for v in (a, b, c))
    gamma = (0,) + ones[1:]
    P = materialize(QIParams(a, b, c, gamma))
    for cell in cells(n):
        if cell != (1, 1, 1) and not P[cell] > 0:
            raise InvalidParams("marginals must be positive so that only P[1,1,1] vanishes")
    lines = (
        f"P[1,1,1] = 0 ; in Mix this is alpha*a1*b1*c1 + (1-alpha)*d1, so alpha*a1*b1*c1 = 0",
        f"P[1,1,2] = {_entry(P, (1, 1, 2))} > 0 ; in Mix this is alpha*a1*b1*c2, so alpha, a1, b1 != 0 and c1 = 0",
        f"P[2,1,1] = {_entry(P, (2, 1, 1))} > 0 ; in Mix this is alpha*a2*b1*c1, so c1 != 0: contradiction",
    )
    support = (qi_support_feasible(P), mix_support_feasible(P))
    return P, WitnessReport(direction, lines, support)


# -- exact toric membership ---------------------------------------------------


class Membership(NamedTuple):
    member: bool
    reason: str


def _design_rows(family, n):
    """0/1 rows of the log-linear design matrix over cells (lexicographic)."""
    family = resolve_family(family)
    cs = cells(n)
    rows = [[1] * len(cs)]
    for s in range(3):
        for v in range(1, n + 1):
            rows.append([1 if c[s] == v else 0 for c in cs])
    if family == "QI":
        for v in range(1, n + 1):
            rows.append([1 if c == (v, v, v) else 0 for c in cs])
    elif family == "qI":
        rows.append([1 if len(set(c)) == 1 else 0 for c in cs])
    elif family == "pQI":
        for p, q in ((0, 1), (0, 2), (1, 2)):
            rows.append([1 if c[p] == c[q] else 0 for c in cs])
    else:
        raise UnsupportedFamily(f"membership tests need a toric family, got {family!r}")
    return rows


def _integer_kernel(rows, width):
    """Integer basis of the right kernel of a rational matrix."""
    mat = [[Fraction(x) for x in r] for r in rows]
    pivots = []
    r = 0
    for col in range(width):
        pivot = next((i for i in range(r, len(mat)) if mat[i][col] != 0), None)
        if pivot is None:
            continue
        mat[r], mat[pivot] = mat[pivot], mat[r]
        lead = mat[r][col]
        mat[r] = [x / lead for x in mat[r]]
        for i in range(len(mat)):
            if i != r and mat[i][col] != 0:
                f = mat[i][col]
                mat[i] = [x - f * y for x, y in zip(mat[i], mat[r])]
        pivots.append(col)
        r += 1
        if r == len(mat):
            break
    free = [c for c in range(width) if c not in pivots]
    basis = []
    for fc in free:
        vec = [Fraction(0)] * width
        vec[fc] = Fraction(1)
        for row_idx, pc in enumerate(pivots):
            vec[pc] = -mat[row_idx][fc]
        scale = math.lcm(*(x.denominator for x in vec))
        basis.append([int(x * scale) for x in vec])
    return basis


def is_perfect_agreement(P):
    """True for the tensor with ``1/n`` on the diagonal and zeros elsewhere."""
    arr = _arr(P)
    n = arr.shape[0]
    target = Fraction(1, n)
    for c in cells(n):
        v = arr[c[0] - 1, c[1] - 1, c[2] - 1]
        want = target if len(set(c)) == 1 else 0
        if isinstance(v, float):
            if abs(v - float(want)) > 1e-12:
                return False
        elif v != want:
            return False
    return True


def toric_membership(P, family):
    """Decide membership of ``P`` in a quasi-independence family.

    Strictly positive tensors are decided by the kernel of the design
    matrix: ``P`` is a member exactly when ``prod P**u == 1`` for every
    kernel vector ``u`` (exactly on the rational backend, through logs for
    floats). The perfect-agreement tensor is reported as ``limit_point``.
    Other tensors with zeros are ``not_member`` when their support is
    unreachable, else ``boundary_undecided``.
    """
    family = resolve_family(family)
    arr = _arr(P)
    n = arr.shape[0]
    if is_perfect_agreement(P):
        return Membership(False, "limit_point")
    values = [arr[c[0] - 1, c[1] - 1, c[2] - 1] for c in cells(n)]
    if any(v == 0 for v in values):
        if family in ("QI", "qI") and not qi_support_feasible(P):
            return Membership(False, "not_member")
        return Membership(False, "boundary_undecided")
    kernel = _integer_kernel(_design_rows(family, n), len(values))
    exact = P.backend == RATIONAL if isinstance(P, ProbabilityTensor) else not any(isinstance(v, float) for v in values)
    if exact:
        vals = [Fraction(v) for v in values]
        for u in kernel:
            num = math.prod(v**e for v, e in zip(vals, u) if e > 0)
            den = math.prod(v ** (-e) for v, e in zip(vals, u) if e < 0)
            if num != den:
                return Membership(False, "not_member")
        return Membership(True, "member")
    logs = np.log(np.array(values, dtype=float))
    K = np.array(kernel, dtype=float)
    resid = np.abs(K @ logs)
    bound = 1e-9 * (np.abs(K) @ np.abs(logs) + 1.0)
    ok = bool(np.all(resid <= bound))
    return Membership(ok, "member" if ok else "not_member")
