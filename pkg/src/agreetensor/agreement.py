"""Cohen's kappa for two-way tables and the pairwise kappas of a tensor.

Also holds the closed forms for uniform marginals and the grid sweeps that
map agreement parameters to kappa triples.
"""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import NamedTuple

import numpy as np

from ._numbers import coerce
from .errors import DegenerateChance, InvalidParams, ZeroMass
from .models import PairwiseMixParams, PairwiseQIParams, materialize
from .tensor import TwoWayTable, marginalize

PAIR_AXES = {"12": 3, "13": 2, "23": 1}


class KappaTriple(NamedTuple):
    kappa12: object
    kappa13: object
    kappa23: object


def cohen_kappa(T):
    """Chance-corrected agreement of a two-way table.

    Uses the homogeneous form ``(S * trace - sum_i r_i c_i) / (S**2 - sum_i
    r_i c_i)`` with ``S`` the table total, which reduces to the usual formula
    for a normalized table and lets raw count tables through unchanged.
    """
    if not isinstance(T, TwoWayTable):
        T = TwoWayTable.unnormalized(T)
    arr = T.array
    total = T.total()
    observed = sum(arr[i, i] for i in range(T.n))
    chance = sum(r * c for r, c in zip(T.row_sums, T.col_sums))
    denom = total * total - chance
    if denom == 0 or (not T.is_rational and abs(denom) <= 1e-15 * max(1.0, total * total)):
        raise DegenerateChance("chance agreement equals 1; kappa is undefined")
    return (total * observed - chance) / denom


def pairwise_kappas(P):
    """Kappa of each two-rater marginal of a tensor."""
    values = []
    for pair, axis in PAIR_AXES.items():
        try:
            values.append(cohen_kappa(marginalize(P, axis)))
        except DegenerateChance as exc:
            raise DegenerateChance(f"raters {pair[0]} and {pair[1]}: {exc}", pair=pair) from None
    return KappaTriple(*values)


def _pqi_numerator(n, own, other1, other2):
    return own * other1 * other2 + (n - 1) * own - other1 - other2 - n + 2


def pqi_total(n, g12, g13, g23):
    """Cell-weight total of the pairwise quasi-independence tensor, times n**2,
    when all three marginals are uniform."""
    return g12 * g13 * g23 + (n - 1) * (g12 + g13 + g23) + (n - 1) * (n - 2)


def kappa_pqi_uniform(n, g12, g13, g23):
    """Closed-form pairwise kappas of pairwise quasi-independence with
    ``a = b = c = (1/n, ..., 1/n)``."""
    g12, g13, g23 = (coerce(g) for g in (g12, g13, g23))
    if min(g12, g13, g23) < 0:
        raise InvalidParams("agreement weights must be non-negative")
    denom = pqi_total(n, g12, g13, g23)
    if denom == 0:
        raise ZeroMass(f"all agreement weights vanish for n={n}")
    return KappaTriple(
        _pqi_numerator(n, g12, g13, g23) / denom,
        _pqi_numerator(n, g13, g12, g23) / denom,
        _pqi_numerator(n, g23, g12, g13) / denom,
    )


def kappa_pmix_uniform(a12, a13, a23, a123):
    """Closed-form pairwise kappas of the pairwise mixture with uniform marginals.

    The independence weight is implied as ``1 - a12 - a13 - a23 - a123``.
    """
    weights = [coerce(a) for a in (a12, a13, a23, a123)]
    total = sum(weights)
    tol = 1e-12 if any(isinstance(w, float) for w in weights) else 0
    if min(weights) < 0 or total > 1 + tol:
        raise InvalidParams("mixture weights must lie in the 5-simplex")
    a12, a13, a23, a123 = weights
    return KappaTriple(a12 + a123, a13 + a123, a23 + a123)


# -- sweeps -------------------------------------------------------------------


def default_gamma_values(top_exponent=2, step_exponent=Fraction(1, 10)):
    """``10**t`` for ``t = 0, step, ..., top`` (21 values by default)."""
    count = int(Fraction(top_exponent) / Fraction(step_exponent))
    return tuple(10.0 ** float(i * Fraction(step_exponent)) for i in range(count + 1))


def alpha_grid(step=Fraction(1, 10)):
    """Feasible ``(a0, a12, a13, a23, a123)`` with coordinates on ``step``.

    Ordered like nested loops over a0, a12, a13, a23; a123 is the remainder.
    """
    step = Fraction(step)
    if step <= 0 or (1 / step).denominator != 1:
        raise InvalidParams("alpha step must be 1/t for a positive integer t")
    t = int(1 / step)
    points = []
    for i0 in range(t + 1):
        for i12 in range(t + 1 - i0):
            for i13 in range(t + 1 - i0 - i12):
                for i23 in range(t + 1 - i0 - i12 - i13):
                    rest = t - i0 - i12 - i13 - i23
                    points.append(tuple(Fraction(x, t) for x in (i0, i12, i13, i23, rest)))
    return points


def _uniform(n):
    return tuple(Fraction(1, n) for _ in range(n))


@dataclass(frozen=True)
class SweepGrid:
    """Parameter grid for a kappa sweep of ``pQI`` or ``pMix``.

    For ``pQI`` the three agreement weights range independently over
    ``gammas``; for ``pMix`` the five mixture weights walk the simplex in
    steps of ``alpha_step``. Marginals default to uniform.
    """

    family: str
    n: int
    gammas: tuple = field(default_factory=default_gamma_values)
    alpha_step: Fraction = Fraction(1, 10)
    a: tuple = None
    b: tuple = None
    c: tuple = None

    def __post_init__(self):
        if self.family not in ("pQI", "pMix"):
            raise InvalidParams(f"sweeps are defined for pQI and pMix, not {self.family!r}")
        if self.n < 2:
            raise InvalidParams("n must be at least 2")
        for name in ("a", "b", "c"):
            vec = getattr(self, name)
            object.__setattr__(self, name, _uniform(self.n) if vec is None else tuple(coerce(v) for v in vec))
            if len(getattr(self, name)) != self.n:
                raise InvalidParams(f"marginal {name} must have length {self.n}")
        object.__setattr__(self, "gammas", tuple(coerce(g) for g in self.gammas))
        if any(g < 0 for g in self.gammas):
            raise InvalidParams("gamma grid values must be non-negative")
        # validates the step
        alpha_grid(self.alpha_step)

    @property
    def columns(self):
        if self.family == "pQI":
            return ("g12", "g13", "g23")
        return ("a0", "a12", "a13", "a23", "a123")

    def points(self):
        if self.family == "pQI":
            g = self.gammas
            return [(x, y, z) for x in g for y in g for z in g]
        return alpha_grid(self.alpha_step)

    def __len__(self):
        if self.family == "pQI":
            return len(self.gammas) ** 3
        t = int(1 / Fraction(self.alpha_step))
        return math.comb(t + 4, 4)

    def params_at(self, point):
        marg = [tuple(float(v) for v in vec) for vec in (self.a, self.b, self.c)]
        point = [float(v) for v in point]
        if self.family == "pQI":
            return PairwiseQIParams(*marg, *point)
        return PairwiseMixParams(*marg, *point)


class SweepRecord(NamedTuple):
    point: tuple
    kappas: KappaTriple
    error: str


def _evaluate(grid, point):
    try:
        kappas = pairwise_kappas(materialize(grid.params_at(point)))
        return SweepRecord(point, kappas, "")
    except DegenerateChance as exc:
        return SweepRecord(point, KappaTriple(math.nan, math.nan, math.nan), f"DegenerateChance:{exc.pair}")
    except ZeroMass:
        return SweepRecord(point, KappaTriple(math.nan, math.nan, math.nan), "ZeroMass")


def _evaluate_chunk(args):
    grid, points = args
    return [_evaluate(grid, p) for p in points]


def worker_count(workers=None):
    """Resolve a worker count; ``AGREETENSOR_THREADS`` applies when unset (0 = auto)."""
    if workers is None:
        raw = os.environ.get("AGREETENSOR_THREADS", "1")
        try:
            workers = int(raw)
        except ValueError:
            workers = 1
    if workers <= 0:
        workers = os.cpu_count() or 1
    return workers


def sweep(grid, workers=None):
    """Evaluate pairwise kappas at every grid point (float backend).

    Records come back in lexicographic grid order regardless of
    ``workers``. Points whose tensor is chance-degenerate are kept as
    records with NaN kappas and a non-empty ``error``.
    """
    points = grid.points()
    workers = worker_count(workers)
    if workers == 1 or len(points) < 2 * workers:
        return [_evaluate(grid, p) for p in points]
    size = math.ceil(len(points) / workers)
    chunks = [(grid, points[i : i + size]) for i in range(0, len(points), size)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return [rec for chunk in pool.map(_evaluate_chunk, chunks) for rec in chunk]


def _fmt(value):
    value = float(value)
    if math.isnan(value):
        return ""
    # float noise around zero would otherwise survive 10-significant-digit rounding
    if abs(value) < 1e-12:
        value = 0.0
    text = f"{value:.10g}"
    return "0" if text == "-0" else text


def sweep_csv(grid, records):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([*grid.columns, "kappa12", "kappa13", "kappa23", "error"])
    for rec in records:
        writer.writerow([*(_fmt(v) for v in rec.point), *(_fmt(k) for k in rec.kappas), rec.error])
    return buf.getvalue()


def write_sweep_csv(grid, records, path):
    with open(path, "w", newline="") as fh:
        fh.write(sweep_csv(grid, records))


def kappa_range_ok(records, lo=0.0, hi=1.0, tol=1e-12):
    """True when every successful record has all kappas in ``[lo, hi]``."""
    vals = np.array([rec.kappas for rec in records if not rec.error], dtype=float)
    return bool(np.all(vals >= lo - tol) and np.all(vals <= hi + tol))
