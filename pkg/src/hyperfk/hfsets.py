"""Hereditarily finite sets in canonical form.

An :class:`HFSet` is an immutable, interned node whose elements are kept
sorted by the canonical order: smaller cardinality first, ties broken
lexicographically by the ordered elements.  Equality is identity of the
interned node, so extensional equality is cheap.  Since a set can only be
built from sets that already exist, no set can be a member of itself.
"""

from __future__ import annotations

import itertools
import threading

from .errors import BudgetError, NotNaturalError, ParseError

#: total tree nodes (counting repeats) any single result may have
DEFAULT_BUDGET = 2 ** 16
MAX_NATURAL = 16
MAX_ORDINAL_CHECK = 12


class HFSet:
    __slots__ = ("elements", "key", "nodes", "__weakref__")

    _table: dict = {}
    _lock = threading.Lock()

    def __new__(cls, elements=()):
        elems = tuple(sorted(set(elements), key=lambda e: e.key))
        key = (len(elems), tuple(e.key for e in elems))
        with cls._lock:
            found = cls._table.get(key)
            if found is not None:
                return found
            obj = super().__new__(cls)
            obj.elements = elems
            obj.key = key
            obj.nodes = 1 + sum(e.nodes for e in elems)
            cls._table[key] = obj
            return obj

    def __len__(self):
        return len(self.elements)

    def __iter__(self):
        return iter(self.elements)

    def __contains__(self, item):
        return item in self.elements

    def __hash__(self):
        return id(self)

    def __eq__(self, other):
        return self is other

    def __lt__(self, other):
        return self.key < other.key

    def __le__(self, other):
        return self.key <= other.key

    def __repr__(self):
        return f"HFSet({render(self)})"

    def __str__(self):
        return render(self)

    def __reduce__(self):
        return (parse, (render(self),))

    @property
    def rank(self):
        return 0 if not self.elements else 1 + max(e.rank for e in self.elements)


def _check_budget(nodes, budget):
    if nodes > budget:
        raise BudgetError(f"result would have {nodes} nodes, budget is {budget}")


def _make(elements, budget=DEFAULT_BUDGET):
    elements = list(elements)
    _check_budget(1 + sum(e.nodes for e in set(elements)), budget)
    return HFSet(elements)


EMPTY = HFSet(())


def empty():
    return EMPTY


def is_member(a: HFSet, s: HFSet) -> bool:
    return a in s.elements


def is_subset(a: HFSet, b: HFSet) -> bool:
    return all(x in b.elements for x in a.elements)


def insert(s: HFSet, a: HFSet, budget=DEFAULT_BUDGET) -> HFSet:
    """s U {a}."""
    return _make(s.elements + (a,), budget)


def singleton(a: HFSet, budget=DEFAULT_BUDGET) -> HFSet:
    return _make((a,), budget)


def union(s1: HFSet, s2: HFSet, budget=DEFAULT_BUDGET) -> HFSet:
    return _make(s1.elements + s2.elements, budget)


def intersection(s1: HFSet, s2: HFSet, budget=DEFAULT_BUDGET) -> HFSet:
    return _make((e for e in s1.elements if e in s2.elements), budget)


def successor(s: HFSet, budget=DEFAULT_BUDGET) -> HFSet:
    """Suc(x) = x U {x}."""
    return insert(s, s, budget)


def von_neumann_natural(k: int, budget=DEFAULT_BUDGET) -> HFSet:
    """natural(0) = {}, natural(k) = Suc(natural(k - 1))."""
    if int(k) != k or k < 0:
        raise ValueError("k must be a nonnegative integer")
    if k > MAX_NATURAL:
        raise BudgetError(f"natural({k}) exceeds the supported range 0..{MAX_NATURAL}")
    s = EMPTY
    for _ in range(k):
        s = successor(s, budget)
    return s


natural = von_neumann_natural


def power_set(s: HFSet, budget=DEFAULT_BUDGET) -> HFSet:
    elems = s.elements
    if len(elems) > 16:
        raise BudgetError(f"power set of a {len(elems)}-element set exceeds the budget")
    # nodes of P(s): the root, one node per subset, and each element once per
    # subset containing it
    nodes = 1 + 2 ** len(elems) + 2 ** max(len(elems) - 1, 0) * sum(e.nodes for e in elems)
    _check_budget(nodes, budget)
    subsets = (HFSet(c) for r in range(len(elems) + 1) for c in itertools.combinations(elems, r))
    return HFSet(subsets)


def cumulative_power_set(s: HFSet, k: int, budget=DEFAULT_BUDGET) -> HFSet:
    """U_0 = s, U_k = U_{k-1} U P(U_{k-1})."""
    if int(k) != k or k < 0:
        raise ValueError("k must be a nonnegative integer")
    u = s
    for _ in range(k):
        u = union(u, power_set(u, budget), budget)
    return u


# ---------------------------------------------------------------------------
# naturals and arithmetic


def is_natural(s: HFSet) -> bool:
    n = len(s)
    return n <= MAX_NATURAL and s is von_neumann_natural(n)


def natural_value(s: HFSet) -> int:
    if not is_natural(s):
        raise NotNaturalError(f"{render(s)} is not a von Neumann natural")
    return len(s)


def predecessor(s: HFSet) -> HFSet:
    """The largest element of a nonzero natural."""
    natural_value(s)
    if s is EMPTY:
        raise NotNaturalError("0 has no predecessor")
    return s.elements[-1]


def nat_add(a: HFSet, b: HFSet, budget=DEFAULT_BUDGET) -> HFSet:
    """n + 0 = n,  n + Suc(m) = Suc(n + m)."""
    natural_value(a)
    natural_value(b)
    if b is EMPTY:
        return a
    return successor(nat_add(a, predecessor(b), budget), budget)


def nat_mul(a: HFSet, b: HFSet, budget=DEFAULT_BUDGET) -> HFSet:
    """n * 0 = 0,  n * Suc(m) = n * m + n."""
    natural_value(a)
    natural_value(b)
    if b is EMPTY:
        return EMPTY
    return nat_add(nat_mul(a, predecessor(b), budget), a, budget)


def nat_exp(a: HFSet, b: HFSet, budget=DEFAULT_BUDGET) -> HFSet:
    """n ^ 0 = 1,  n ^ Suc(m) = n ^ m * n."""
    natural_value(a)
    natural_value(b)
    if b is EMPTY:
        return successor(EMPTY)
    return nat_mul(nat_exp(a, predecessor(b), budget), a, budget)


def nat_less(a: HFSet, b: HFSet) -> bool:
    """m < n iff m is a member of n."""
    natural_value(a)
    natural_value(b)
    return is_member(a, b)


# ---------------------------------------------------------------------------
# ordinals


def _nonempty_subsets(elems):
    for r in range(1, len(elems) + 1):
        yield from itertools.combinations(elems, r)


def ordinal_clauses(s: HFSet):
    """Truth values of the three defining clauses, checked exhaustively.

    transitive: every element is a subset;
    trichotomy: distinct elements are comparable by membership;
    well_founded: every nonempty subset has a membership-minimal element.
    """
    if len(s) > MAX_ORDINAL_CHECK:
        raise BudgetError(f"exhaustive ordinal check is limited to {MAX_ORDINAL_CHECK} elements")
    elems = s.elements
    transitive = all(is_subset(b, s) for b in elems)
    trichotomy = all(b is c or b in c.elements or c in b.elements
                     for b, c in itertools.combinations(elems, 2))
    well_founded = all(any(not any(y in x.elements for y in sub) for x in sub)
                       for sub in _nonempty_subsets(elems))
    return {"transitive": transitive, "trichotomy": trichotomy, "well_founded": well_founded}


def is_ordinal(s: HFSet) -> bool:
    return all(ordinal_clauses(s).values())


# ---------------------------------------------------------------------------
# text form


def render(s: HFSet) -> str:
    parts = []
    stack = [(s, 0)]
    # iterative to keep deep sets off the Python stack
    while stack:
        node, i = stack.pop()
        if i == 0:
            parts.append("{")
        if i < len(node.elements):
            if i > 0:
                parts.append(",")
            stack.append((node, i + 1))
            stack.append((node.elements[i], 0))
        else:
            parts.append("}")
    return "".join(parts)


def parse(text: str, budget=DEFAULT_BUDGET) -> HFSet:
    """Read brace notation; whitespace is ignored, order and duplicates are free."""
    pos = 0
    n = len(text)

    def skip():
        nonlocal pos
        while pos < n and text[pos].isspace():
            pos += 1

    skip()
    if pos >= n:
        raise ParseError("empty input", pos)
    stack = []
    result = None
    while True:
        skip()
        if pos >= n:
            raise ParseError("unexpected end of input", pos)
        ch = text[pos]
        if ch == "{":
            stack.append([])
            pos += 1
            skip()
            if pos < n and text[pos] == "}":
                continue
            continue
        if ch == "}":
            if not stack:
                raise ParseError("unbalanced '}'", pos)
            elems = stack.pop()
            node = _make(elems, budget)
            pos += 1
            if stack:
                stack[-1].append(node)
                skip()
                if pos < n and text[pos] == ",":
                    pos += 1
                    skip()
                    if pos < n and text[pos] != "{":
                        raise ParseError("expected '{' after ','", pos)
                elif pos < n and text[pos] not in "}":
                    raise ParseError(f"unexpected character {text[pos]!r}", pos)
                continue
            result = node
            skip()
            if pos != n:
                raise ParseError("trailing characters", pos)
            return result
        raise ParseError(f"unexpected character {ch!r}", pos)
