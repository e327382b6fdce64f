import json
import math
import warnings
from fractions import Fraction as F

import numpy as np
import pytest

from agreetensor.agreement import pairwise_kappas
from agreetensor.errors import (
    ConvergenceWarning,
    InvalidTensor,
    NotConverged,
    SupportMismatch,
    UnsupportedFamily,
    ZeroMarginWarning,
)
from agreetensor.estimation import (
    CountTensor,
    FitResult,
    dump_fit,
    em_fit,
    fit,
    format_counts,
    ipf_fit,
    load_counts,
    loglik,
    parse_counts,
)
from agreetensor.invariants import catalog, relative_residual
from agreetensor.models import (
    PairwiseMixParams,
    PairwiseQIParams,
    UniformMixParams,
    load_params,
    materialize,
    sample_params,
)
from agreetensor.tensor import ProbabilityTensor

THIRD = tuple(F(1, 3) for _ in range(3))
SKEW = (F(1, 2), F(1, 4), F(1, 4))


def float_array(P):
    return np.asarray(P.array, dtype=float)


@pytest.fixture(scope="module")
def pqi3():
    P = materialize(PairwiseQIParams((F(1, 5), F(3, 10), F(1, 2)), SKEW, THIRD, 3, F(1, 2), 2))
    return P, CountTensor.from_tensor(P, 10**6)


@pytest.fixture(scope="module")
def mix3():
    P = materialize(UniformMixParams((F(1, 5), F(3, 10), F(1, 2)), SKEW, THIRD, F(7, 10)))
    return P, CountTensor.from_tensor(P, 10**6)


class TestCountTensor:
    def test_basic(self):
        C = CountTensor(np.arange(8).reshape(2, 2, 2))
        assert C.n == 2 and C.total == 28
        assert C[2, 2, 2] == 7
        assert C.proportions().sum() == pytest.approx(1.0)

    @pytest.mark.parametrize(
        "bad",
        [np.zeros((2, 2, 2)), -np.ones((2, 2, 2)), np.ones((2, 2)), np.ones((2, 2, 3)), np.full((2, 2, 2), 0.5)],
    )
    def test_invalid(self, bad):
        with pytest.raises(InvalidTensor):
            CountTensor(bad)

    def test_immutable(self):
        C = CountTensor(np.ones((2, 2, 2), dtype=int))
        with pytest.raises(ValueError):
            C.array[0, 0, 0] = 3

    def test_from_tensor(self):
        C = CountTensor.from_tensor(ProbabilityTensor.uniform(2), 800)
        assert np.all(C.array == 100)

    def test_sample_is_seeded(self):
        P = materialize(sample_params("qI", 3, 0))
        a, b = CountTensor.sample(P, 1000, 7), CountTensor.sample(P, 1000, 7)
        assert np.array_equal(a.array, b.array) and a.total == 1000

    def test_text_round_trip(self, tmp_path):
        C = CountTensor(np.arange(1, 28).reshape(3, 3, 3))
        text = format_counts(C)
        assert np.array_equal(parse_counts(text).array, C.array)
        path = tmp_path / "c.txt"
        path.write_text(text)
        assert np.array_equal(load_counts(path).array, C.array)

    def test_non_integer_text(self):
        text = "n=2\n" + "".join(f"{i} {j} {k} 1/2\n" for i in (1, 2) for j in (1, 2) for k in (1, 2))
        with pytest.raises(InvalidTensor):
            parse_counts(text)


class TestLoglik:
    def test_uniform(self):
        C = CountTensor(np.full((3, 3, 3), 4))
        assert loglik(C, ProbabilityTensor.uniform(3)) == pytest.approx(108 * math.log(1 / 27))

    def test_ignores_zero_counts(self):
        arr = np.zeros((2, 2, 2), dtype=int)
        arr[0, 0, 0] = 5
        P = ProbabilityTensor.from_function(2, lambda i, j, k: F(1, 2) if i == j == k else F(0))
        assert loglik(CountTensor(arr), P) == pytest.approx(5 * math.log(0.5))

    def test_support_mismatch(self):
        P = ProbabilityTensor.from_function(2, lambda i, j, k: F(1, 2) if i == j == k else F(0))
        with pytest.raises(SupportMismatch):
            loglik(CountTensor(np.ones((2, 2, 2), dtype=int)), P)
        with pytest.raises(SupportMismatch):
            loglik(CountTensor(np.ones((2, 2, 2), dtype=int)), ProbabilityTensor.uniform(3))

    def test_relabeling(self):
        P = materialize(sample_params("QI", 3, 5))
        C = CountTensor.sample(P, 500, 1)
        perm = [2, 0, 1]
        Cp = CountTensor(C.array[np.ix_(perm, perm, perm)])
        Pp = ProbabilityTensor(float_array(P)[np.ix_(perm, perm, perm)])
        assert loglik(Cp, Pp) == pytest.approx(loglik(C, P))


class TestIPF:
    def test_uniform_counts(self):
        r = ipf_fit(CountTensor(np.full((3, 3, 3), 10)), "qI")
        assert r.converged
        assert np.allclose(float_array(r.fitted), 1 / 27)
        assert np.allclose([float(k) for k in pairwise_kappas(r.fitted)], 0, atol=1e-12)
        assert r.params.gamma == pytest.approx(1.0)

    def test_pqi_recovery(self, pqi3):
        P, C = pqi3
        r = ipf_fit(C, "pQI")
        assert r.converged
        assert np.max(np.abs(float_array(r.fitted) - float_array(P))) < 1e-3
        assert float(r.fitted.total()) == pytest.approx(1.0, abs=1e-10)
        assert (r.params.gamma12, r.params.gamma13, r.params.gamma23) == pytest.approx((3, 0.5, 2), rel=1e-2)
        assert np.allclose(float_array(materialize(r.params)), float_array(r.fitted), atol=1e-9)

    @pytest.mark.parametrize("family", ["QI", "qI"])
    @pytest.mark.parametrize("seed", range(4))
    def test_fitted_satisfies_invariants(self, family, seed):
        P = materialize(sample_params("QI", 2, seed))
        r = ipf_fit(CountTensor.sample(P, 5000, seed), family)
        assert r.converged
        for p in catalog(family, 2):
            assert relative_residual(p, r.fitted) < 1e-6

    def test_statistics_match(self):
        P = materialize(sample_params("QI", 3, 3))
        C = CountTensor.sample(P, 20000, 3)
        r = ipf_fit(C, "QI")
        data, fitted = C.proportions(), float_array(r.fitted)
        for axes in ((1, 2), (0, 2), (0, 1)):
            assert np.allclose(data.sum(axis=axes), fitted.sum(axis=axes), atol=1e-10)
        for v in range(3):
            assert fitted[v, v, v] == pytest.approx(data[v, v, v], abs=1e-10)

    def test_zero_statistic_warns(self):
        arr = np.full((2, 2, 2), 5)
        arr[0, 0, 0] = arr[1, 1, 1] = 0
        with pytest.warns(ZeroMarginWarning):
            r = ipf_fit(CountTensor(arr), "qI", max_iter=200)
        assert r.params.gamma < 1e-3

    def test_not_converged(self, pqi3):
        _, C = pqi3
        with pytest.warns(ConvergenceWarning):
            r = ipf_fit(C, "pQI", max_iter=1)
        assert not r.converged and r.iterations == 1
        with pytest.raises(NotConverged) as info:
            ipf_fit(C, "pQI", max_iter=1, strict=True)
        assert isinstance(info.value.result, FitResult)

    def test_rejects(self, pqi3):
        _, C = pqi3
        with pytest.raises(UnsupportedFamily):
            ipf_fit(C, "mix")
        with pytest.raises(ValueError):
            ipf_fit(C, "qI", tol=0)

    def test_deterministic(self, pqi3):
        _, C = pqi3
        a, b = ipf_fit(C, "pQI"), ipf_fit(C, "pQI")
        assert np.array_equal(float_array(a.fitted), float_array(b.fitted)) and a.loglik == b.loglik


class TestEM:
    def test_mix_recovery(self, mix3):
        P, C = mix3
        r = em_fit(C, "mix", seed=0)
        assert r.converged
        assert abs(r.params.alpha - 0.7) < 0.02
        assert len(r.traces) == 5

    @pytest.mark.filterwarnings("ignore::agreetensor.errors.ConvergenceWarning")
    def test_traces_monotone(self, mix3):
        _, C = mix3
        for family in ("Mix", "mix", "pMix"):
            r = em_fit(C, family, seed=2, restarts=3, max_iter=2000)
            for trace in r.traces:
                assert all(b >= a - 1e-9 * abs(a) for a, b in zip(trace, trace[1:]))

    def test_best_restart_kept(self, mix3):
        _, C = mix3
        r = em_fit(C, "Mix", seed=4, restarts=4, max_iter=500)
        assert r.loglik == pytest.approx(max(t[-1] for t in r.traces))

    def test_improves_on_first_iterate(self, mix3):
        _, C = mix3
        r = em_fit(C, "mix", seed=1, restarts=1)
        assert r.loglik >= r.traces[0][0]

    def test_pmix_independence(self):
        P = materialize(PairwiseMixParams(THIRD, SKEW, THIRD, 1, 0, 0, 0, 0))
        r = em_fit(CountTensor.from_tensor(P, 10**6), "pMix", restarts=1)
        assert r.params.alpha0 >= 1 - 1e-3

    @pytest.mark.filterwarnings("ignore::agreetensor.errors.ConvergenceWarning")
    def test_parameters_on_simplex(self, mix3):
        _, C = mix3
        for family in ("Mix", "pMix"):
            params = em_fit(C, family, restarts=2, max_iter=300).params
            for name in ("a", "b", "c"):
                v = getattr(params, name)
                assert math.fsum(v) == pytest.approx(1.0, abs=1e-15) and min(v) >= 0
        params = em_fit(C, "pMix", restarts=1, max_iter=300).params
        weights = (params.alpha0, params.alpha12, params.alpha13, params.alpha23, params.alpha123)
        assert math.fsum(weights) == pytest.approx(1.0, abs=1e-15) and min(weights) >= 0

    def test_deterministic(self, mix3):
        _, C = mix3
        a, b = em_fit(C, "Mix", seed=9, restarts=2), em_fit(C, "Mix", seed=9, restarts=2)
        assert a.traces == b.traces and a.params == b.params

    def test_not_converged(self, mix3):
        _, C = mix3
        with pytest.warns(ConvergenceWarning):
            r = em_fit(C, "mix", max_iter=2, restarts=1)
        assert not r.converged
        with pytest.raises(NotConverged):
            em_fit(C, "mix", max_iter=2, restarts=1, strict=True)

    def test_rejects(self, mix3):
        _, C = mix3
        with pytest.raises(UnsupportedFamily):
            em_fit(C, "QI")
        with pytest.raises(ValueError):
            em_fit(C, "mix", restarts=0)


class TestDispatch:
    def test_routes_by_family(self, mix3):
        _, C = mix3
        assert fit(C, "qI").traces == ()
        assert len(fit(C, "mix").traces) == 5

    def test_export(self, mix3, tmp_path):
        _, C = mix3
        r = fit(C, "mix")
        data = r.to_dict()
        assert data["metadata"] == {"loglik": r.loglik, "iterations": r.iterations, "converged": True}
        path = tmp_path / "fit.json"
        dump_fit(r, path)
        assert load_params(path) == r.params
        assert json.loads(path.read_text())["metadata"]["converged"] is True
