import itertools
from importlib import resources

import pytest
from hypothesis import given, settings, strategies as st

from hyperfk import hfsets as hf
from hyperfk.errors import BudgetError, NotNaturalError, ParseError

EMPTY = hf.EMPTY
N = hf.von_neumann_natural


def golden(name):
    return resources.files("hyperfk").joinpath("golden", name).read_text().strip()


def sets_of_rank_at_most(r):
    level = [EMPTY]
    for _ in range(r):
        level = list(hf.power_set(hf.HFSet(level)).elements)
    return level


RANK3 = sets_of_rank_at_most(3)


def hf_sets(max_leaves=30):
    return st.recursive(st.just(EMPTY), lambda kids: st.lists(kids, max_size=4).map(hf.HFSet),
                        max_leaves=max_leaves)


class TestGolden:
    @pytest.mark.parametrize("k", range(11))
    def test_naturals(self, k):
        assert hf.render(N(k)) == golden(f"natural_{k}.txt")

    @pytest.mark.parametrize("k", range(5))
    def test_cumulative_power_sets(self, k):
        assert hf.render(hf.cumulative_power_set(EMPTY, k)) == golden(f"cumulative_power_set_{k}.txt")

    def test_listed_examples(self):
        assert hf.render(N(3)) == "{{},{{}},{{},{{}}}}"
        assert hf.render(N(4)) == "{{},{{}},{{},{{}}},{{},{{}},{{},{{}}}}}"
        assert hf.render(hf.cumulative_power_set(EMPTY, 3)) == "{{},{{}},{{{}}},{{},{{}}}}"
        assert len(hf.cumulative_power_set(EMPTY, 4)) == 16


class TestBasicOperations:
    def test_examples(self):
        assert hf.union(EMPTY, N(1)) is N(1)
        assert hf.intersection(N(3), N(5)) is N(3)
        assert hf.is_member(N(2), N(5))
        assert hf.successor(EMPTY) is N(1)
        assert hf.render(hf.successor(N(1))) == "{{},{{}}}"
        assert hf.power_set(EMPTY) is N(1)
        assert hf.cumulative_power_set(N(2), 0) is N(2)

    @given(hf_sets())
    def test_successor_grows_by_one(self, s):
        assert len(hf.successor(s)) == len(s) + 1

    @given(hf_sets(), hf_sets())
    def test_union_intersection_membership(self, a, b):
        u, i = hf.union(a, b), hf.intersection(a, b)
        for x in set(a) | set(b):
            assert hf.is_member(x, u)
            assert hf.is_member(x, i) == (x in a and x in b)
        assert len(u) + len(i) == len(a) + len(b)

    def test_intersection_of_naturals(self):
        for m, n in itertools.product(range(8), repeat=2):
            assert hf.intersection(N(m), N(n)) is N(min(m, n))


class TestCanonicalForm:
    def test_strict_total_order_rank3(self):
        assert len(RANK3) == 16
        for a, b in itertools.product(RANK3, repeat=2):
            assert sum([a < b, a is b, b < a]) == 1
        for a, b, c in itertools.product(RANK3, repeat=3):
            if a < b and b < c:
                assert a < c

    @given(hf_sets())
    def test_elements_sorted_and_distinct(self, s):
        els = s.elements
        assert all(x < y for x, y in zip(els, els[1:]))

    @given(hf_sets(), hf_sets())
    def test_extensionality(self, a, b):
        assert (a is b) == (hf.render(a) == hf.render(b)) == (set(a) == set(b))

    @settings(max_examples=1000)
    @given(hf_sets())
    def test_round_trip(self, s):
        assert hf.parse(hf.render(s)) is s

    def test_parse_canonicalizes(self):
        assert hf.parse("{{{}},{}}") is N(2)
        assert hf.parse(" { {} , {} } ") is N(1)

    def test_render_has_no_whitespace(self):
        assert " " not in hf.render(hf.cumulative_power_set(EMPTY, 4))

    @pytest.mark.parametrize("text,pos", [("", 0), ("{", 1), ("{}}", 2), ("{{},}", 4),
                                          ("{a}", 1), ("{}{}", 2)])
    def test_parse_errors_have_positions(self, text, pos):
        with pytest.raises(ParseError) as info:
            hf.parse(text)
        assert info.value.position == pos

    def test_foundation(self):
        for s in RANK3 + [N(k) for k in range(17)]:
            assert not hf.is_member(s, s)


class TestNaturals:
    def test_cardinality(self):
        for k in range(17):
            assert len(N(k)) == k

    def test_order_is_membership(self):
        for m, n in itertools.product(range(12), repeat=2):
            assert hf.nat_less(N(m), N(n)) == (m < n) == hf.is_member(N(m), N(n))

    def test_arithmetic_matches_integers(self):
        for a, b in itertools.product(range(17), repeat=2):
            va, vb = N(a), N(b)
            if a + b <= 16:
                assert hf.natural_value(hf.nat_add(va, vb)) == a + b
            if a * b <= 16:
                assert hf.natural_value(hf.nat_mul(va, vb)) == a * b
            if a ** b <= 16:
                assert hf.natural_value(hf.nat_exp(va, vb)) == a ** b

    def test_base_cases(self):
        assert hf.nat_mul(N(5), EMPTY) is EMPTY
        assert hf.nat_exp(N(5), EMPTY) is N(1)
        assert hf.nat_add(N(2), N(3)) is N(5)

    def test_non_natural_operand(self):
        with pytest.raises(NotNaturalError):
            hf.nat_add(hf.parse("{{{}}}"), N(1))

    def test_budget(self):
        with pytest.raises(BudgetError):
            N(17)
        with pytest.raises(BudgetError):
            hf.cumulative_power_set(EMPTY, 5)
        with pytest.raises(BudgetError):
            N(10, budget=100)


def by_definition(s):
    """Ordinal as a transitive set of transitive sets."""
    def transitive(x):
        return all(hf.is_subset(y, x) for y in x)
    return transitive(s) and all(transitive(x) for x in s)


class TestOrdinals:
    def test_naturals(self):
        for k in range(13):
            assert hf.is_ordinal(N(k))

    def test_examples(self):
        assert not hf.is_ordinal(hf.parse("{{{}}}"))
        assert hf.is_ordinal(EMPTY)

    def test_rank3_against_definition(self):
        for s in RANK3:
            assert hf.is_ordinal(s) == by_definition(s)
            assert hf.is_ordinal(s) == any(s is N(k) for k in range(5))

    def test_clauses_reported(self):
        c = hf.ordinal_clauses(hf.parse("{{{}}}"))
        assert c == {"transitive": False, "trichotomy": True, "well_founded": True}

    def test_size_limit(self):
        with pytest.raises(BudgetError):
            hf.is_ordinal(N(13))
