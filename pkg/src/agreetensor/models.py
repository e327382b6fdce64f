"""The six agreement models: parameter sets, materialization and sampling.

Quasi-independence families (``QI``, ``qI``, ``pQI``) take unnormalized
parameters; the normalizing constant is recomputed at materialization.
Mixture families (``Mix``, ``mix``, ``pMix``) take simplex points and are
normalized by construction.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, fields
from fractions import Fraction
from pathlib import Path
from typing import ClassVar

import numpy as np

from ._numbers import FLOAT, RATIONAL, coerce, format_number, parse_number
from .errors import InvalidParams, UnsupportedFamily, ZeroMass
from .tensor import ProbabilityTensor

SIMPLEX_TOL = 1e-12


def _vector(values, name):
    try:
        vec = tuple(coerce(v) for v in values)
    except (TypeError, ValueError) as exc:
        raise InvalidParams(f"{name}: {exc}") from exc
    if any(v < 0 for v in vec):
        raise InvalidParams(f"{name} must be non-negative")
    if any(isinstance(v, float) and not math.isfinite(v) for v in vec):
        raise InvalidParams(f"{name} must be finite")
    return vec


def _scalar(value, name):
    return _vector([value], name)[0]


def _check_simplex(vec, name):
    total = sum(vec)
    if any(isinstance(v, float) for v in vec):
        ok = abs(total - 1.0) <= SIMPLEX_TOL
    else:
        ok = total == 1
    if not ok:
        raise InvalidParams(f"{name} must sum to 1, sums to {total}")


def _check_unit(value, name):
    if not 0 <= value <= 1:
        raise InvalidParams(f"{name} must lie in [0, 1], got {value}")


class _Params:
    family: ClassVar[str]
    _vectors: ClassVar[tuple[str, ...]] = ("a", "b", "c")
    _simplex: ClassVar[tuple[str, ...]] = ()

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, (list, tuple, np.ndarray)):
                object.__setattr__(self, f.name, _vector(value, f.name))
            else:
                object.__setattr__(self, f.name, _scalar(value, f.name))
        lengths = {len(getattr(self, name)) for name in self._vectors}
        if len(lengths) != 1:
            raise InvalidParams(f"vectors {self._vectors} must share one length")
        if self.n < 2:
            raise InvalidParams("category count n must be at least 2")
        for name in self._simplex:
            _check_simplex(getattr(self, name), name)
        self._validate()

    def _validate(self):
        pass

    @property
    def n(self):
        return len(self.a)

    @property
    def backend(self):
        return FLOAT if any(isinstance(v, float) for v in self.values()) else RATIONAL

    def values(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                yield from value
            else:
                yield value

    def to_float(self):
        kwargs = {}
        for f in fields(self):
            value = getattr(self, f.name)
            kwargs[f.name] = tuple(float(v) for v in value) if isinstance(value, tuple) else float(value)
        return type(self)(**kwargs)


@dataclass(frozen=True)
class QIParams(_Params):
    """Quasi-independence: one agreement weight per diagonal cell."""

    family: ClassVar[str] = "QI"
    _vectors: ClassVar[tuple[str, ...]] = ("a", "b", "c", "gamma")

    a: tuple
    b: tuple
    c: tuple
    gamma: tuple


@dataclass(frozen=True)
class MixParams(_Params):
    """Independence mixed with an arbitrary diagonal distribution ``d``."""

    family: ClassVar[str] = "Mix"
    _vectors: ClassVar[tuple[str, ...]] = ("a", "b", "c", "d")
    _simplex: ClassVar[tuple[str, ...]] = ("a", "b", "c", "d")

    a: tuple
    b: tuple
    c: tuple
    d: tuple
    alpha: object

    def _validate(self):
        _check_unit(self.alpha, "alpha")


@dataclass(frozen=True)
class CommonQIParams(_Params):
    """Quasi-independence with a single agreement weight shared by the diagonal."""

    family: ClassVar[str] = "qI"

    a: tuple
    b: tuple
    c: tuple
    gamma: object


@dataclass(frozen=True)
class UniformMixParams(_Params):
    """Independence mixed with the uniform diagonal tensor."""

    family: ClassVar[str] = "mix"
    _simplex: ClassVar[tuple[str, ...]] = ("a", "b", "c")

    a: tuple
    b: tuple
    c: tuple
    alpha: object

    def _validate(self):
        _check_unit(self.alpha, "alpha")


@dataclass(frozen=True)
class PairwiseQIParams(_Params):
    family: ClassVar[str] = "pQI"

    a: tuple
    b: tuple
    c: tuple
    gamma12: object
    gamma13: object
    gamma23: object


@dataclass(frozen=True)
class PairwiseMixParams(_Params):
    family: ClassVar[str] = "pMix"
    _simplex: ClassVar[tuple[str, ...]] = ("a", "b", "c")

    a: tuple
    b: tuple
    c: tuple
    alpha0: object
    alpha12: object
    alpha13: object
    alpha23: object
    alpha123: object

    @property
    def alphas(self):
        return (self.alpha0, self.alpha12, self.alpha13, self.alpha23, self.alpha123)

    def _validate(self):
        _check_simplex(self.alphas, "alphas")


FAMILIES = {
    cls.family: cls
    for cls in (QIParams, MixParams, CommonQIParams, UniformMixParams, PairwiseQIParams, PairwiseMixParams)
}
ZETA_FAMILIES = ("QI", "qI", "pQI")
MIXTURE_FAMILIES = ("Mix", "mix", "pMix")


def resolve_family(name):
    """Canonical family tag for ``name``.

    Exact tags win; otherwise a case-insensitive match is accepted when it is
    unambiguous (``pqi`` works, ``qi`` does not since it could be QI or qI).
    """
    if name in FAMILIES:
        return name
    matches = [fam for fam in FAMILIES if fam.lower() == str(name).lower()]
    if len(matches) == 1:
        return matches[0]
    if matches:
        raise UnsupportedFamily(f"ambiguous family {name!r}: one of {matches}")
    raise UnsupportedFamily(f"unknown family {name!r}; expected one of {list(FAMILIES)}")


# -- materialization -------------------------------------------------------


def _cell_masks(n):
    i, j, k = np.indices((n, n, n))
    return {
        "diag": (i == j) & (j == k),
        "eq12": (i == j) & (j != k),
        "eq13": (i == k) & (i != j),
        "eq23": (j == k) & (i != j),
        "slab12": i == j,
        "slab13": i == k,
        "slab23": j == k,
    }


def _array(values, backend):
    if backend == FLOAT:
        return np.array([float(v) for v in values], dtype=np.float64)
    arr = np.empty(len(values), dtype=object)
    arr[:] = [Fraction(v) for v in values]
    return arr


def _outer(a, b, c):
    return np.multiply.outer(np.multiply.outer(a, b), c)


def _full(n, value, backend):
    if backend == FLOAT:
        return np.full((n, n, n), float(value))
    out = np.empty((n, n, n), dtype=object)
    out.fill(Fraction(value))
    return out


def agreement_weights(params, backend=None):
    """Unnormalized cell weights of a quasi-independence family."""
    backend = backend or params.backend
    n = params.n
    masks = _cell_masks(n)
    a, b, c = (_array(v, backend) for v in (params.a, params.b, params.c))
    weights = _outer(a, b, c)
    factor = _full(n, 1, backend)
    if params.family == "QI":
        gamma = _array(params.gamma, backend)
        for i in range(n):
            factor[i, i, i] = gamma[i]
    elif params.family == "qI":
        factor[masks["diag"]] = _array([params.gamma], backend)[0]
    elif params.family == "pQI":
        g12, g13, g23 = _array([params.gamma12, params.gamma13, params.gamma23], backend)
        factor[masks["eq12"]] = g12
        factor[masks["eq13"]] = g13
        factor[masks["eq23"]] = g23
        factor[masks["diag"]] = g12 * g13 * g23
    else:
        raise UnsupportedFamily(f"{params.family} has no normalizing constant")
    return weights * factor


def normalizing_constant(params):
    """The constant that rescales a quasi-independence family onto the simplex."""
    weights = agreement_weights(params)
    total = sum(weights.ravel(), Fraction(0)) if params.backend == RATIONAL else float(weights.sum())
    if total == 0:
        raise ZeroMass(f"{params.family} parameters give zero total mass")
    return 1 / total


def materialize(params, backend=None):
    """Build the probability tensor of a parameter point.

    ``backend`` forces ``"float"``; by default the tensor is exact whenever
    every parameter is an integer or ``Fraction``.
    """
    if backend not in (None, FLOAT, RATIONAL):
        raise ValueError(f"unknown backend {backend!r}")
    if backend == RATIONAL and params.backend == FLOAT:
        raise ValueError("float parameters cannot be materialized exactly")
    backend = backend or params.backend
    n = params.n
    if params.family in ZETA_FAMILIES:
        weights = agreement_weights(params, backend)
        total = sum(weights.ravel(), Fraction(0)) if backend == RATIONAL else float(weights.sum())
        if total == 0:
            raise ZeroMass(f"{params.family} parameters give zero total mass")
        return ProbabilityTensor(weights / total)

    masks = _cell_masks(n)
    a, b, c = (_array(v, backend) for v in (params.a, params.b, params.c))
    indep = _outer(a, b, c)
    zero = _full(n, 0, backend)
    if params.family in ("Mix", "mix"):
        alpha = _array([params.alpha], backend)[0]
        d = _array(params.d, backend) if params.family == "Mix" else _array([Fraction(1, n)] * n, backend)
        diag = zero.copy()
        for i in range(n):
            diag[i, i, i] = d[i]
        return ProbabilityTensor(alpha * indep + (1 - alpha) * diag)
    if params.family == "pMix":
        a0, a12, a13, a23, a123 = _array(params.alphas, backend)
        nn = _array([n], backend)[0]
        out = a0 * indep
        for weight, mask, scale in ((a12, "slab12", nn * nn), (a13, "slab13", nn * nn), (a23, "slab23", nn * nn), (a123, "diag", nn)):
            term = zero.copy()
            term[masks[mask]] = weight / scale
            out = out + term
        return ProbabilityTensor(out)
    raise UnsupportedFamily(params.family)


# -- sampling ---------------------------------------------------------------


def _sample_simplex(rng, size, denom, interior):
    if interior:
        denom = max(denom, size)
        cuts = sorted(rng.sample(range(1, denom), size - 1))
    else:
        cuts = sorted(rng.randint(0, denom) for _ in range(size - 1))
    edges = [0, *cuts, denom]
    return tuple(Fraction(hi - lo, denom) for lo, hi in zip(edges, edges[1:]))


def _sample_weight(rng, lo, hi, denom, interior):
    lo_k = math.ceil(Fraction(lo) * denom)
    hi_k = math.floor(Fraction(hi) * denom)
    if interior:
        lo_k = max(lo_k, 1)
    if lo_k > hi_k:
        raise InvalidParams(f"no grid point with denominator {denom} in [{lo}, {hi}]")
    return Fraction(rng.randint(lo_k, hi_k), denom)


def sample_params(family, n, seed, gamma_range=(Fraction(1, 10), Fraction(10)), grid_denominator=20, interior=True):
    """Draw a random exact parameter point of ``family``.

    Simplex vectors are compositions of ``grid_denominator`` (raised to at
    least the vector length when ``interior``); agreement weights are grid
    rationals inside ``gamma_range``. With ``interior=True`` every
    coordinate is strictly positive and mixture weights lie in ``(0, 1)``.
    """
    family = resolve_family(family)
    if n < 2:
        raise InvalidParams("n must be at least 2")
    rng = random.Random(seed)
    denom = max(1, int(grid_denominator))
    lo, hi = gamma_range

    def positive_vector():
        return tuple(_sample_weight(rng, 0, 1, denom, interior) for _ in range(n))

    def weight():
        return _sample_weight(rng, lo, hi, denom, interior)

    def unit():
        if interior:
            d = max(denom, 2)
            return Fraction(rng.randint(1, d - 1), d)
        return Fraction(rng.randint(0, denom), denom)

    if family in ZETA_FAMILIES:
        a, b, c = positive_vector(), positive_vector(), positive_vector()
        if family == "QI":
            return QIParams(a, b, c, tuple(weight() for _ in range(n)))
        if family == "qI":
            return CommonQIParams(a, b, c, weight())
        return PairwiseQIParams(a, b, c, weight(), weight(), weight())
    a, b, c = (_sample_simplex(rng, n, denom, interior) for _ in range(3))
    if family == "Mix":
        return MixParams(a, b, c, _sample_simplex(rng, n, denom, interior), unit())
    if family == "mix":
        return UniformMixParams(a, b, c, unit())
    return PairwiseMixParams(a, b, c, *_sample_simplex(rng, 5, denom, interior))


# -- JSON parameter files -----------------------------------------------------


def params_to_dict(params):
    out = {"family": params.family, "n": params.n}
    for f in fields(params):
        value = getattr(params, f.name)
        if isinstance(value, tuple):
            out[f.name] = [_json_number(v) for v in value]
        else:
            out[f.name] = _json_number(value)
    return out


def _json_number(value):
    return format_number(value) if isinstance(value, Fraction) else float(value)


def _from_json(value):
    if isinstance(value, str):
        return parse_number(value)
    if isinstance(value, bool):
        raise InvalidParams("booleans are not numbers")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return value
    if isinstance(value, list):
        return [_from_json(v) for v in value]
    raise InvalidParams(f"unsupported JSON value {value!r}")


def params_from_dict(data):
    if "family" not in data:
        raise InvalidParams("parameter file lacks 'family'")
    cls = FAMILIES[resolve_family(data["family"])]
    kwargs = {}
    for f in fields(cls):
        if f.name not in data:
            raise InvalidParams(f"{cls.family} parameters need field {f.name!r}")
        try:
            kwargs[f.name] = _from_json(data[f.name])
        except ValueError as exc:
            raise InvalidParams(f"{f.name}: {exc}") from exc
    params = cls(**kwargs)
    if "n" in data and int(data["n"]) != params.n:
        raise InvalidParams(f"declared n={data['n']} but vectors have length {params.n}")
    return params


def load_params(path):
    return params_from_dict(json.loads(Path(path).read_text()))


def dump_params(params, path, metadata=None):
    data = params_to_dict(params)
    if metadata is not None:
        data["metadata"] = metadata
    Path(path).write_text(json.dumps(data, indent=2) + "\n")
