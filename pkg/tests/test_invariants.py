import itertools
import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from agreetensor.errors import (
    BudgetExceeded,
    DegreeTooLarge,
    DimensionMismatch,
    HypothesisViolated,
    UnsupportedFamily,
)
from agreetensor.invariants import (
    MIXN_FAMILIES,
    QIN_FAMILIES,
    MonomialMatrix,
    canonical_list,
    catalog,
    fiber_binomials,
    fiber_dimension,
    format_polynomials,
    generate_mixn_invariants,
    generate_qin_invariants,
    is_invariant,
    load_polynomials,
    dump_polynomials,
    matrix_criterion,
    monomial_matrix,
    nonvanishing,
    occurrence_matrix,
    parse_polynomials,
    rho,
    sigma_set,
    toric_fibers,
)
from agreetensor.polynomial import SparsePolynomial, parse_monomial
from agreetensor.tensor import cells

from conftest import model_tensors

poly = SparsePolynomial.parse


def sigma_oracle(rows, variant):
    """Apply every (s1, s2, s3) in (S_t)^3 to the columns, then filter."""
    t = len(rows)
    cols = list(zip(*rows))
    base = Counter(rows)
    target = sum(1 for r in rows if r[0] == r[1] == r[2])
    out = set()
    for s1, s2, s3 in itertools.product(itertools.permutations(range(t)), repeat=3):
        new = [(cols[0][s1[r]], cols[1][s2[r]], cols[2][s3[r]]) for r in range(t)]
        if Counter(new) == base:
            continue
        d = sum(1 for r in new if r[0] == r[1] == r[2])
        if d == target or (variant == "nonincrease" and d < target):
            out.add(tuple(sorted(new)))
    return out


class TestMatrices:
    def test_monomial_matrix(self):
        A = monomial_matrix("P111*P212*P221^2")
        assert A.rows == ((1, 1, 1), (2, 1, 2), (2, 2, 1), (2, 2, 1))
        assert A.t == 4
        assert monomial_matrix("P123").rows == ((1, 2, 3),)

    def test_round_trip(self):
        A = monomial_matrix("P221^2*P111*P212")
        assert monomial_matrix(A.polynomial()) == A
        assert monomial_matrix(A.exponents()) == A

    def test_row_order_irrelevant(self):
        assert MonomialMatrix([(2, 2, 1), (1, 1, 1)]) == MonomialMatrix([(1, 1, 1), (2, 2, 1)])

    @pytest.mark.parametrize("bad", [[], [(0, 1, 1)], [(1, 1)]])
    def test_invalid_rows(self, bad):
        with pytest.raises(ValueError):
            MonomialMatrix(bad)

    @pytest.mark.parametrize("m", ["P111*P212*P221^2", "P121*P211^2*P222"])
    def test_occurrence_example(self, m):
        F = occurrence_matrix(m, 2)
        assert F.tolist() == [[1, 2, 3], [3, 2, 1]]
        assert F.sum(axis=0).tolist() == [4, 4, 4]

    def test_occurrence_out_of_range(self):
        with pytest.raises(DimensionMismatch):
            occurrence_matrix("P131", 2)

    @pytest.mark.parametrize("m,expected", [("P111*P212*P221^2", 1), ("P111*P222", 2), ("P121*P212", 0), ("P111^3", 3)])
    def test_rho(self, m, expected):
        assert rho(monomial_matrix(m)) == expected


class TestSigmaSet:
    def test_example(self):
        out = sigma_set(monomial_matrix("P112*P221"))
        assert monomial_matrix("P121*P212") in out
        assert monomial_matrix("P111*P222") not in out
        assert monomial_matrix("P112*P221") not in out
        # rho only drops under the relaxed variant, and here it would rise
        assert monomial_matrix("P111*P222") not in sigma_set(monomial_matrix("P112*P221"), "nonincrease")
        assert monomial_matrix("P112*P221") in sigma_set(monomial_matrix("P111*P222"), "nonincrease")

    def test_single_row(self):
        assert sigma_set(monomial_matrix("P123")) == frozenset()
        assert sigma_set(monomial_matrix("P123"), "nonincrease") == frozenset()

    def test_degree_guard(self):
        with pytest.raises(DegreeTooLarge):
            sigma_set(MonomialMatrix([(1, 2, 1)] * 9))

    def test_bad_variant(self):
        with pytest.raises(ValueError):
            sigma_set(monomial_matrix("P112*P221"), "all")

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.tuples(*[st.integers(1, 3)] * 3), min_size=1, max_size=4), st.sampled_from(["preserve", "nonincrease"]))
    def test_matches_permutation_oracle(self, rows, variant):
        A = MonomialMatrix(rows)
        got = {m.rows for m in sigma_set(A, variant)}
        assert got == sigma_oracle(A.rows, variant)

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.tuples(*[st.integers(1, 3)] * 3), min_size=1, max_size=5), st.randoms())
    def test_row_order_and_inclusion(self, rows, rnd):
        shuffled = list(rows)
        rnd.shuffle(shuffled)
        a, b = sigma_set(rows), sigma_set(shuffled)
        assert a == b
        assert a <= sigma_set(rows, "nonincrease")
        # every member keeps the column multisets
        cols = MonomialMatrix(rows).columns()
        assert all(m.columns() == cols for m in a)


QI2 = [
    "P121*P212-P112*P221",
    "P122*P211-P121*P212",
]
QI2_COMMON = [
    "P111*P212*P221^2-P121*P211^2*P222",
    "P111*P122*P221^2-P121^2*P211*P222",
    "P111*P212^2*P221-P112*P211^2*P222",
    "P111*P122^2*P221-P112*P121^2*P222",
    "P111*P122*P212^2-P112^2*P211*P222",
    "P111*P122^2*P212-P112^2*P121*P222",
    "P111*P112*P221^3-P121^2*P211^2*P222",
    "P111*P122*P212*P221-P112*P121*P211*P222",
]
MIX2 = [
    "P121*P211^2-P111*P211*P221-P212*P221^2+P211*P221*P222",
    "P112*P211^2-P111*P211*P212-P212^2*P221+P211*P212*P222",
    "P121^2*P211-P111*P121*P221-P122*P221^2+P121*P221*P222",
    "P112*P121*P211-P111*P112*P221-P122*P212*P221+P112*P221*P222",
    "P112^2*P211-P111*P112*P212-P122*P212^2+P112*P212*P222",
    "P112*P121^2-P111*P121*P122-P122^2*P221+P121*P122*P222",
    "P112^2*P121-P111*P112*P122-P122^2*P212+P112*P122*P222",
    "P111*P112*P122*P212+P122^2*P212^2-P112^3*P221-P112*P122*P212*P222",
]


def as_set(strings):
    return {poly(s).canonical() for s in strings}


class TestCatalog:
    @pytest.mark.parametrize(
        "family,expected",
        [("QI", QI2), ("Mix", QI2), ("qI", QI2 + QI2_COMMON), ("mix", QI2 + MIX2),
         ("pQI", ["P111*P122*P212*P221-P112*P121*P211*P222"]), ("pMix", [])],
    )
    def test_n2_lists(self, family, expected):
        got = catalog(family, 2)
        assert len(got) == len(expected)
        assert {p.canonical() for p in got} == as_set(expected)

    @pytest.mark.parametrize("family", ["QI", "Mix", "qI", "mix", "pQI"])
    def test_n2_vanishes_on_100_seeds(self, family):
        polys = catalog(family, 2)
        for P in model_tensors(family, 2, range(100)):
            assert nonvanishing(polys, P) == []

    @pytest.mark.parametrize("family", ["QI", "Mix", "qI", "mix", "pQI"])
    def test_homogeneous(self, family):
        assert all(p.is_homogeneous for p in catalog(family, 2))

    def test_qi_and_mix_agree(self):
        for n in (2, 3):
            assert catalog("QI", n) == catalog("Mix", n)

    def test_n3_examples(self):
        qi3 = set(catalog("QI", 3))
        assert poly("P122*P131-P121*P132").canonical() in qi3
        assert poly("P211*P233*P313-P213^2*P331").canonical() in qi3

    @pytest.mark.parametrize("n", [3, 4])
    def test_no_diagonal_variables(self, n):
        polys = catalog("QI", n)
        assert all(c[0] != c[1] or c[1] != c[2] for p in polys for c in p.variables())

    @pytest.mark.parametrize("family", ["QI", "Mix"])
    def test_n3_vanishes(self, family):
        polys = catalog("QI", 3)
        both = model_tensors("QI", 3, range(50)) + model_tensors("Mix", 3, range(50))
        for P in both:
            assert nonvanishing(polys, P) == []

    def test_n4_subset_vanishes(self):
        polys = catalog("QI", 4)[::97]
        for family in ("QI", "Mix"):
            for P in model_tensors(family, 4, range(100)):
                assert nonvanishing(polys, P) == []

    @pytest.mark.parametrize("family,n", [("qI", 3), ("pMix", 3), ("QI", 6)])
    def test_unsupported(self, family, n):
        with pytest.raises(UnsupportedFamily):
            catalog(family, n)

    def test_catalog_sorted_and_unique(self):
        polys = catalog("QI", 3)
        assert polys == canonical_list(polys)


class TestGenerators:
    def test_qin_n2_contains_known_list(self):
        assert as_set(QI2 + QI2_COMMON) <= set(generate_qin_invariants(2))

    def test_mixn_n2_contains_known_list(self):
        assert as_set(QI2 + MIX2) <= set(generate_mixn_invariants(2))

    def test_qin_family_examples(self):
        assert poly("P111*P233*P322-P222*P133*P311").canonical() in set(generate_qin_invariants(3, "ii"))
        assert poly(QI2_COMMON[-1]).canonical() in set(generate_qin_invariants(2, "iv"))
        assert poly(QI2_COMMON[-2]).canonical() in set(generate_qin_invariants(2, "v"))

    def test_mix_third_entry_comes_from_swap_families(self):
        third = poly(MIX2[0]).canonical()
        assert third in set(generate_mixn_invariants(2, ["ii", "iv"]))

    @pytest.mark.parametrize("key", sorted(QIN_FAMILIES))
    @pytest.mark.parametrize("n", [2, 3])
    def test_qin_families_vanish(self, n, key):
        polys = generate_qin_invariants(n, key)
        if n == 2 and key in ("ii", "iii"):
            assert polys == []
            return
        assert polys
        for P in model_tensors("qI", n, range(8)):
            assert nonvanishing(polys, P) == []

    @pytest.mark.parametrize("key", MIXN_FAMILIES)
    @pytest.mark.parametrize("n", [2, 3])
    def test_mixn_families_vanish(self, n, key):
        polys = generate_mixn_invariants(n, key)
        if n == 2 and key in ("ii", "iii", "v", "vi"):
            assert polys == []
            return
        assert polys
        for P in model_tensors("mix", n, range(8)):
            assert nonvanishing(polys, P) == []

    def test_n2_full_vanishing(self):
        q, m = generate_qin_invariants(2), generate_mixn_invariants(2)
        for P in model_tensors("qI", 2, range(100)):
            assert nonvanishing(q, P) == []
        for P in model_tensors("mix", 2, range(100)):
            assert nonvanishing(m, P) == []

    def test_output_canonical(self):
        polys = generate_mixn_invariants(2)
        assert polys == canonical_list(polys)
        assert all(p == p.canonical() for p in polys)

    def test_mix_generators_are_not_qi_invariants_in_general(self):
        # the tetranomials use the uniform diagonal, so they fail on qI
        assert not all(is_invariant(p, "qI", 2) for p in generate_mixn_invariants(2, "vii"))

    @pytest.mark.parametrize("n", [1, 6])
    def test_unsupported_n(self, n):
        with pytest.raises(UnsupportedFamily):
            generate_qin_invariants(n)
        with pytest.raises(UnsupportedFamily):
            generate_mixn_invariants(n)

    def test_unknown_family_key(self):
        with pytest.raises(ValueError):
            generate_qin_invariants(2, "vi")

    def test_budget(self):
        with pytest.raises(BudgetExceeded):
            generate_qin_invariants(3, "v", budget=100)
        with pytest.raises(BudgetExceeded):
            generate_mixn_invariants(4, "vii")


CUBICS = list(itertools.combinations_with_replacement(cells(2), 3))


def _criterion_cases():
    out = []
    for f, g in itertools.combinations(CUBICS, 2):
        if set(f) & set(g):
            continue
        if f.count((1, 1, 1)) != g.count((2, 2, 2)) or f.count((2, 2, 2)) != g.count((1, 1, 1)):
            continue
        out.append((f, g))
    return out


class TestMatrixCriterion:
    def test_example_true(self):
        assert matrix_criterion("P111*P212*P221^2", "P121*P211^2*P222")

    def test_example_false(self):
        assert not matrix_criterion("P111*P212", "P121*P222")

    @pytest.mark.parametrize(
        "f,g",
        [("P111*P121", "P111*P212"), ("P111*P212", "P121*P212*P221"), ("P131", "P113"), ("P111*P212", "P121*P211")],
    )
    def test_hypothesis_violated(self, f, g):
        with pytest.raises(HypothesisViolated):
            matrix_criterion(f, g)

    def test_one_sided_diagonal_hypothesis_is_not_enough(self):
        # F = G and deg P111(f) = deg P222(g) = 0, yet the gamma exponents differ
        f, g = "P112*P222", "P122*P212"
        assert np.array_equal(occurrence_matrix(f, 2), occurrence_matrix(g, 2))
        assert not is_invariant(poly(f) - poly(g), "qI", 2)
        with pytest.raises(HypothesisViolated):
            matrix_criterion(f, g)

    def test_n_must_be_two(self):
        with pytest.raises(HypothesisViolated):
            matrix_criterion("P121*P212", "P112*P221", n=3)

    def test_evaluation_oracle_on_all_cubic_pairs(self):
        samples = model_tensors("qI", 2, range(20))
        cases = _criterion_cases()
        assert len(cases) > 100
        for f, g in cases:
            diff = SparsePolynomial.binomial(f, g)
            bad = any(nonvanishing([diff], P) for P in samples)
            assert matrix_criterion(f, g) == (not bad), diff

    def test_tetranomial(self):
        # third uniform-mixture entry read as h - f + g - w
        h, f, g, w = "P121*P211^2", "P111*P211*P221", "P211*P221*P222", "P212*P221^2"
        assert matrix_criterion(f, g, h, w)
        assert poly(h) - poly(f) + poly(g) - poly(w) == poly(MIX2[0])

    def test_swapped_matching_is_rejected(self):
        h, f, g, w = "P121*P211^2", "P111*P211*P221", "P211*P221*P222", "P212*P221^2"
        assert not matrix_criterion(f, g, w, h)
        assert not is_invariant(poly(w) - poly(f) + poly(g) - poly(h), "mix", 2)

    def test_tetranomial_false(self):
        assert not matrix_criterion("P111*P211*P221", "P211*P221*P222", "P121*P211^2", "P121*P212^2")

    @pytest.mark.parametrize("degree", [3, 4])
    def test_tetranomial_oracle(self, degree):
        """Exhaustive: every certified tetranomial is a symbolic invariant."""
        off = [c for c in cells(2) if len(set(c)) > 1]
        monos = list(itertools.combinations_with_replacement(off, degree))
        certified = set()
        for Y in itertools.combinations_with_replacement(off, degree - 1):
            f, g = tuple(sorted(((1, 1, 1),) + Y)), tuple(sorted(((2, 2, 2),) + Y))
            F, G = occurrence_matrix(f, 2), occurrence_matrix(g, 2)
            hs = [m for m in monos if np.array_equal(occurrence_matrix(m, 2), F)]
            ws = [m for m in monos if np.array_equal(occurrence_matrix(m, 2), G)]
            for h, w in itertools.product(hs, ws):
                assert matrix_criterion(f, g, h, w)
                p = SparsePolynomial([(1, h), (-1, f), (1, g), (-1, w)])
                assert is_invariant(p, "mix", 2)
                certified.add(p.canonical())
        expected = {p.canonical() for p in map(poly, MIX2) if p.degree == degree}
        assert expected <= certified

    @pytest.mark.parametrize(
        "f,g,h,w",
        [
            ("P111*P211*P221", "P211*P221*P222", "P111*P211^2", "P212*P221^2"),
            ("P111*P211*P221", "P212*P221*P222", "P121*P211^2", "P212*P221^2"),
            ("P111*P211*P221", "P211*P221*P222", "P121*P211", "P212*P221^2"),
            ("P111^2*P221", "P211*P222^2", "P121*P211^2", "P212*P221^2"),
        ],
    )
    def test_tetranomial_hypotheses(self, f, g, h, w):
        with pytest.raises(HypothesisViolated):
            matrix_criterion(f, g, h, w)

    def test_needs_both_extra_monomials(self):
        with pytest.raises(HypothesisViolated):
            matrix_criterion("P111", "P222", h="P121")


def image_oracle(family, n):
    """Cell -> sorted tuple of parameter symbols, written straight from the model formulas."""
    out = {}
    for i, j, k in cells(n):
        syms = [f"a{i}", f"b{j}", f"c{k}"]
        if family == "QI" and i == j == k:
            syms.append(f"g{i}")
        if family == "qI" and i == j == k:
            syms.append("g")
        if family == "pQI":
            syms += ["g12"] * (i == j) + ["g13"] * (i == k) + ["g23"] * (j == k)
        out[(i, j, k)] = syms
    return out


def fiber_oracle(family, n, degree, relabel=None):
    images = image_oracle(family, n)
    groups = Counter()
    for mono in itertools.combinations_with_replacement(cells(n), degree):
        if relabel:
            mono = [tuple(relabel[x] for x in c) for c in mono]
        groups[tuple(sorted(s for c in mono for s in images[c]))] += 1
    return sum(v - 1 for v in groups.values())


class TestFiberDimension:
    @pytest.mark.parametrize(
        "family,n,degree,expected", [("pQI", 3, 2, 0), ("pQI", 3, 3, 52), ("QI", 2, 2, 2)]
    )
    def test_reference_values(self, family, n, degree, expected):
        assert fiber_dimension(family, n, degree) == expected

    @pytest.mark.parametrize(
        "family,n,degree",
        [("QI", 2, 3), ("qI", 2, 2), ("qI", 2, 3), ("pQI", 2, 4), ("QI", 3, 2), ("qI", 3, 2), ("pQI", 3, 3)],
    )
    def test_matches_oracle(self, family, n, degree):
        assert fiber_dimension(family, n, degree) == fiber_oracle(family, n, degree)

    def test_label_symmetry(self):
        relabel = {1: 3, 2: 1, 3: 2}
        assert fiber_oracle("pQI", 3, 3, relabel) == fiber_dimension("pQI", 3, 3)
        fibers = toric_fibers("pQI", 3, 3)
        moved = {tuple(sorted(tuple(sorted(tuple(relabel[x] for x in c) for c in m)) for m in f)) for f in fibers}
        assert moved == {tuple(f) for f in fibers}

    def test_quadric_fiber(self):
        assert toric_fibers("QI", 2, 2) == [
            [((1, 1, 2), (2, 2, 1)), ((1, 2, 1), (2, 1, 2)), ((1, 2, 2), (2, 1, 1))]
        ]

    def test_binomials_vanish(self):
        polys = fiber_binomials("pQI", 3, 3)
        assert len(polys) == 52
        for P in model_tensors("pQI", 3, range(30)):
            assert nonvanishing(polys, P) == []

    def test_budget(self):
        with pytest.raises(BudgetExceeded):
            fiber_dimension("pQI", 5, 5, budget=1000)

    def test_non_toric_family(self):
        with pytest.raises(UnsupportedFamily):
            fiber_dimension("mix", 2, 2)

    def test_degree_one(self):
        assert fiber_dimension("QI", 2, 1) == 0


class TestPolynomialText:
    def test_round_trip_file(self, tmp_path):
        polys = catalog("mix", 2) + catalog("QI", 3)
        path = tmp_path / "inv.txt"
        dump_polynomials(polys, path)
        assert load_polynomials(path) == polys
        assert format_polynomials(load_polynomials(path)) == path.read_text()

    def test_comments_and_blanks(self):
        text = "# quadrics\nP121*P212-P112*P221\n\n  P122*P211 - P121*P212  # second\n"
        assert parse_polynomials(text) == [poly("P121*P212-P112*P221"), poly("P122*P211-P121*P212")]
