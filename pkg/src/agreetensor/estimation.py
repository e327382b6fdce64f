"""Maximum-likelihood fitting of the agreement models to count tensors.

The quasi-independence families are log-linear, so iterative proportional
fitting applies; the mixture families are fitted by EM with one latent
component per summand.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    ConvergenceWarning,
    InvalidTensor,
    NotConverged,
    SupportMismatch,
    UnsupportedFamily,
    ZeroMarginWarning,
)
from .models import (
    CommonQIParams,
    MixParams,
    PairwiseMixParams,
    PairwiseQIParams,
    QIParams,
    UniformMixParams,
    dump_params,
    materialize,
    params_to_dict,
    resolve_family,
)
from .tensor import ProbabilityTensor, format_tensor, parse_cells

IPF_TOL = 1e-10
EM_TOL = 1e-8
MAX_ITER = 100_000
EM_RESTARTS = 5
IPF_FAMILIES = ("QI", "qI", "pQI")
EM_FAMILIES = ("Mix", "mix", "pMix")


class CountTensor:
    """Observed counts ``N[i,j,k]`` for three raters, 1-based like tensors."""

    def __init__(self, counts):
        arr = np.asarray(counts)
        if arr.ndim != 3 or len(set(arr.shape)) != 1 or arr.shape[0] < 2:
            raise InvalidTensor(f"counts must be an n x n x n array with n >= 2, got shape {arr.shape}")
        values = arr.ravel().tolist()
        if any(isinstance(v, float) and not float(v).is_integer() for v in values):
            raise InvalidTensor("counts must be integers")
        arr = np.array([int(v) for v in values], dtype=np.int64).reshape(arr.shape)
        if np.any(arr < 0):
            raise InvalidTensor("counts must be non-negative")
        if arr.sum() <= 0:
            raise InvalidTensor("counts must have a positive total")
        arr.flags.writeable = False
        self._array = arr
        self.n = arr.shape[0]

    @property
    def array(self):
        return self._array

    @property
    def total(self):
        return int(self._array.sum())

    def proportions(self):
        return self._array / self.total

    def __getitem__(self, index):
        return int(self._array[tuple(i - 1 for i in index)])

    @classmethod
    def from_tensor(cls, P, N):
        """Counts ``round(N * P)`` cell by cell (a deterministic synthetic sample)."""
        return cls(np.rint(np.asarray(P.array, dtype=float) * N).astype(np.int64))

    @classmethod
    def sample(cls, P, N, seed):
        """A multinomial sample of size ``N`` from ``P``."""
        rng = np.random.default_rng(seed)
        probs = np.asarray(P.array, dtype=float).ravel()
        return cls(rng.multinomial(N, probs / probs.sum()).reshape(P.array.shape))

    def __repr__(self):
        return f"CountTensor(n={self.n}, total={self.total})"


def parse_counts(text):
    _, data = parse_cells(text, exact=True)
    for v in data.ravel():
        if v.denominator != 1:
            raise InvalidTensor(f"count {v} is not an integer")
    return CountTensor([[[int(v) for v in row] for row in plane] for plane in data])


def load_counts(path):
    return parse_counts(Path(path).read_text())


def format_counts(counts):
    return format_tensor(ProbabilityTensor.unnormalized(counts.array.astype(object)))


def loglik(counts, P):
    """``sum N log P`` over cells with positive counts."""
    arr = np.asarray(P.array, dtype=float) if hasattr(P, "array") else np.asarray(P, dtype=float)
    N = counts.array
    if arr.shape != N.shape:
        raise SupportMismatch("counts and tensor have different shapes")
    mask = N > 0
    if np.any(arr[mask] <= 0):
        raise SupportMismatch("the tensor is zero on a cell with positive count")
    return math.fsum((N[mask] * np.log(arr[mask])).tolist())


@dataclass(frozen=True)
class FitResult:
    params: object
    fitted: ProbabilityTensor
    loglik: float
    iterations: int
    converged: bool
    traces: tuple = field(default=(), repr=False)

    @property
    def family(self):
        return self.params.family

    def to_dict(self):
        data = params_to_dict(self.params)
        data["metadata"] = self.metadata()
        return data

    def metadata(self):
        return {"loglik": self.loglik, "iterations": self.iterations, "converged": self.converged}


def dump_fit(result, path):
    dump_params(result.params, path, metadata=result.metadata())


# -- iterative proportional fitting ------------------------------------------


def _masks(n):
    idx = np.indices((n, n, n))
    i, j, k = idx
    return {
        "diag": (i == j) & (j == k),
        "slab12": i == j,
        "slab13": i == k,
        "slab23": j == k,
    }


def _binary_features(family, n):
    """``(name, mask)`` indicator statistics beyond the one-way margins."""
    masks = _masks(n)
    if family == "QI":
        out = []
        for v in range(n):
            m = np.zeros((n, n, n), dtype=bool)
            m[v, v, v] = True
            out.append((f"gamma{v + 1}", m))
        return out
    if family == "qI":
        return [("gamma", masks["diag"])]
    return [("gamma12", masks["slab12"]), ("gamma13", masks["slab13"]), ("gamma23", masks["slab23"])]


def _statistics(P, features):
    margins = [P.sum(axis=tuple(a for a in range(3) if a != s)) for s in range(3)]
    binary = [P[m].sum() for _, m in features]
    return np.concatenate([*margins, np.array(binary)])


def _not_converged(message, result, strict):
    if strict:
        raise NotConverged(message, result)
    warnings.warn(message, ConvergenceWarning, stacklevel=3)
    return result


def ipf_fit(counts, family, tol=IPF_TOL, max_iter=MAX_ITER, strict=False):
    """Fit ``QI``, ``qI`` or ``pQI`` by iterative proportional fitting.

    Starting from the uniform tensor, each cycle rescales the three one-way
    margins and then each agreement indicator (a diagonal cell, the whole
    diagonal, or an agreement slab) by ``t/c`` inside and ``(1-t)/(1-c)``
    outside. Parameters are tracked multiplicatively alongside the tensor.
    Stops once every statistic is within ``tol`` of the data. Without
    convergence the last iterate comes back with ``converged=False`` and a
    ``ConvergenceWarning``, or ``NotConverged`` is raised when ``strict``.
    """
    family = resolve_family(family)
    if family not in IPF_FAMILIES:
        raise UnsupportedFamily(f"IPF fits {IPF_FAMILIES}, not {family!r}")
    if tol <= 0:
        raise ValueError("tol must be positive")
    n = counts.n
    data = counts.proportions()
    features = _binary_features(family, n)
    targets = _statistics(data, features)
    edge = [name for (name, _), t in zip(features, targets[3 * n :]) if t in (0.0, 1.0)]
    if edge or np.any(targets[: 3 * n] == 0):
        warnings.warn(
            f"{family}: a sufficient statistic of the data is on the boundary {edge or 'margin'}; "
            "the fit moves toward the boundary of the parameter space",
            ZeroMarginWarning,
            stacklevel=2,
        )
    P = np.full((n, n, n), 1.0 / n**3)
    marg = [np.ones(n) for _ in range(3)]
    weights = {name: 1.0 for name, _ in features}
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        for s in range(3):
            other = tuple(a for a in range(3) if a != s)
            current = P.sum(axis=other)
            target = targets[s * n : (s + 1) * n]
            ratio = np.divide(target, current, out=np.ones(n), where=current > 0)
            shape = [1, 1, 1]
            shape[s] = n
            P = P * ratio.reshape(shape)
            marg[s] = marg[s] * ratio
        for (name, mask), t in zip(features, targets[3 * n :]):
            c = P[mask].sum()
            if c <= 0 or c >= 1:
                continue
            # a statistic of exactly 1 would need an infinite weight
            t = min(t, 1.0 - 1e-15)
            inside, outside = t / c, (1.0 - t) / (1.0 - c)
            P = np.where(mask, P * inside, P * outside)
            weights[name] *= inside / outside
        P = P / P.sum()
        gap = np.max(np.abs(_statistics(P, features) - targets))
        if gap < tol:
            converged = True
            break
    a, b, c = (tuple((m / m.sum()).tolist()) for m in marg)
    if family == "QI":
        params = QIParams(a, b, c, tuple(weights[f"gamma{v + 1}"] for v in range(n)))
    elif family == "qI":
        params = CommonQIParams(a, b, c, weights["gamma"])
    else:
        params = PairwiseQIParams(a, b, c, weights["gamma12"], weights["gamma13"], weights["gamma23"])
    fitted = ProbabilityTensor(P)
    result = FitResult(params, fitted, loglik(counts, fitted), iterations, converged, ())
    if not converged:
        return _not_converged(f"IPF stopped after {max_iter} cycles (gap {gap:.3g})", result, strict)
    return result


# -- EM for the mixtures -----------------------------------------------------


class _MixtureLayout:
    """Component supports and densities for one mixture family."""

    def __init__(self, family, n):
        self.family = family
        self.n = n
        masks = _masks(n)
        if family == "Mix":
            self.names = ["indep"] + [f"d{v + 1}" for v in range(n)]
            supports = []
            for v in range(n):
                m = np.zeros((n, n, n), dtype=bool)
                m[v, v, v] = True
                supports.append(m)
        elif family == "mix":
            self.names = ["indep", "diag"]
            supports = [masks["diag"]]
        else:
            self.names = ["indep", "slab12", "slab13", "slab23", "diag"]
            supports = [masks["slab12"], masks["slab13"], masks["slab23"], masks["diag"]]
        self.supports = [np.ones((n, n, n), dtype=bool)] + supports
        # density of each non-independence component on its support
        self.densities = [s / s.sum() for s in self.supports[1:]]

    def components(self, weights, a, b, c):
        indep = weights[0] * np.einsum("i,j,k->ijk", a, b, c)
        return [indep] + [w * dens for w, dens in zip(weights[1:], self.densities)]

    def params(self, weights, a, b, c):
        a, b, c = (tuple(v.tolist()) for v in (a, b, c))
        if self.family == "Mix":
            extra = weights[1:].sum()
            d = tuple((weights[1:] / extra).tolist()) if extra > 0 else tuple([1.0 / self.n] * self.n)
            return MixParams(a, b, c, _fix_simplex(d), float(weights[0]))
        if self.family == "mix":
            return UniformMixParams(a, b, c, float(weights[0]))
        return PairwiseMixParams(a, b, c, *_fix_simplex(tuple(weights.tolist())))


def _fix_simplex(vec):
    """Push float rounding into the largest coordinate so the sum is 1."""
    vec = list(vec)
    top = max(range(len(vec)), key=vec.__getitem__)
    vec[top] = 1.0 - math.fsum(v for i, v in enumerate(vec) if i != top)
    return tuple(max(v, 0.0) for v in vec)


def _m_step(layout, expected, N_total, prev):
    n = layout.n
    masses = np.array([e.sum() for e in expected])
    weights = masses / N_total
    E0 = expected[0]
    if masses[0] > 0:
        a = E0.sum(axis=(1, 2)) / masses[0]
        b = E0.sum(axis=(0, 2)) / masses[0]
        c = E0.sum(axis=(0, 1)) / masses[0]
    else:
        a, b, c = prev if prev is not None else (np.full(n, 1.0 / n),) * 3
    weights = np.array(_fix_simplex(weights))
    a, b, c = (np.array(_fix_simplex(v)) for v in (a, b, c))
    return weights, a, b, c


def _e_step(layout, counts, weights, a, b, c):
    comps = layout.components(weights, a, b, c)
    total = sum(comps)
    mask = counts > 0
    safe = np.where(total > 0, total, 1.0)
    expected = [np.where(mask, counts * comp / safe, 0.0) for comp in comps]
    return expected, total


def _em_run(layout, counts, rng, tol, max_iter):
    n = layout.n
    N = counts.array.astype(float)
    N_total = N.sum()
    # random responsibilities over the components supported at each cell
    raw = [rng.random((n, n, n)) * s for s in layout.supports]
    norm = sum(raw)
    expected = [N * r / norm for r in raw]
    weights, a, b, c = _m_step(layout, expected, N_total, None)
    trace = []
    converged = False
    for _ in range(max_iter):
        expected, total = _e_step(layout, N, weights, a, b, c)
        mask = N > 0
        ll = math.fsum((N[mask] * np.log(total[mask])).tolist()) if np.all(total[mask] > 0) else -math.inf
        trace.append(ll)
        if len(trace) > 1 and trace[-1] - trace[-2] < tol:
            converged = True
            break
        weights, a, b, c = _m_step(layout, expected, N_total, (a, b, c))
    return weights, a, b, c, trace, converged


def em_fit(counts, family, tol=EM_TOL, max_iter=MAX_ITER, seed=0, restarts=EM_RESTARTS, strict=False):
    """Fit ``Mix``, ``mix`` or ``pMix`` by EM with seeded random restarts.

    Each restart draws random responsibilities, then alternates E and M
    steps until the log-likelihood gain drops below ``tol``. The restart with the highest log-likelihood is returned;
    ``traces`` holds every restart's log-likelihood sequence.
    """
    family = resolve_family(family)
    if family not in EM_FAMILIES:
        raise UnsupportedFamily(f"EM fits {EM_FAMILIES}, not {family!r}")
    if restarts < 1:
        raise ValueError("restarts must be at least 1")
    layout = _MixtureLayout(family, counts.n)
    seeds = np.random.SeedSequence(seed).spawn(restarts)
    best = None
    traces = []
    for ss in seeds:
        run = _em_run(layout, counts, np.random.default_rng(ss), tol, max_iter)
        traces.append(tuple(run[4]))
        if best is None or run[4][-1] > best[4][-1]:
            best = run
    weights, a, b, c, trace, converged = best
    params = layout.params(weights, a, b, c)
    fitted = materialize(params)
    result = FitResult(params, fitted, loglik(counts, fitted), len(trace), converged, tuple(traces))
    if not converged:
        return _not_converged(f"EM stopped after {max_iter} iterations", result, strict)
    return result


def fit(counts, family, *, tol=None, max_iter=MAX_ITER, seed=0, strict=False):
    """Dispatch to IPF or EM by family."""
    family = resolve_family(family)
    if family in IPF_FAMILIES:
        return ipf_fit(counts, family, tol=IPF_TOL if tol is None else tol, max_iter=max_iter, strict=strict)
    return em_fit(counts, family, tol=EM_TOL if tol is None else tol, max_iter=max_iter, seed=seed, strict=strict)
