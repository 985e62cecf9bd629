"""Counting measures on walk spaces and the walk-versus-Wiener comparison.

At finite n the standard part is the identity: a counting probability is
compared with the corresponding normalized cylinder measure up to a
tolerance, and the limit statement becomes a convergence table in n.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb

import numpy as np

from . import sampling, walk
from .errors import ConfigurationError, DomainError
from .oracle import CylinderSpec, _normalize_intervals, cylinder_measure, free_line_kernel
from .walk import HyperfiniteGrid

#: largest n for which exact enumeration is offered
MAX_ENUMERATION_N = 20
_POS_TOL = 1e-12


@dataclass(frozen=True)
class CountingSpace:
    """A finite population of equally likely outcomes."""

    size: int
    description: str = ""

    def __post_init__(self):
        if int(self.size) != self.size or self.size < 1:
            raise DomainError("a counting space has at least one element")
        object.__setattr__(self, "size", int(self.size))

    @classmethod
    def free_paths(cls, n):
        return cls(2 ** n, f"free lattice walks with {n} steps")

    @classmethod
    def pinned_paths(cls, n, m):
        if abs(m) > n or (n - m) % 2:
            raise DomainError("offset not reachable")
        return cls(comb(n, (n + m) // 2), f"pinned lattice walks with {n} steps and offset {m}")


def counting_measure(subset_size, space: CountingSpace) -> Fraction:
    """nu(A) = |A| / |Omega| as an exact fraction (use float() for a double)."""
    if int(subset_size) != subset_size or not 0 <= subset_size <= space.size:
        raise DomainError(f"subset size {subset_size} not in 0..{space.size}")
    return Fraction(int(subset_size), space.size)


@dataclass(frozen=True)
class LoebEstimate:
    value: float
    std_error: float
    samples: int
    exact: bool
    fraction: Fraction | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.exact and (self.std_error != 0 or self.fraction is None):
            raise DomainError("exact estimates carry a fraction and no error")

    def to_dict(self):
        d = {"value": self.value, "std_error": self.std_error, "samples": self.samples,
             "exact": self.exact, **self.meta}
        if self.fraction is not None:
            d["fraction"] = f"{self.fraction.numerator}/{self.fraction.denominator}"
        return d


def _snap_bins(grid, bins):
    """[(k, intervals)] sorted by time, with the snap distances."""
    out, snaps = [], []
    for s, intervals in bins:
        k, d = grid.nearest_index(float(s))
        out.append((k, _normalize_intervals(intervals)))
        snaps.append(d)
    order = sorted(range(len(out)), key=lambda i: out[i][0])
    out = [out[i] for i in order]
    snaps = [snaps[i] for i in order]
    ks = [k for k, _ in out]
    if len(set(ks)) != len(ks):
        raise DomainError("two bin times snap to the same lattice time")
    return out, snaps


def _inside(x, intervals):
    ok = np.zeros(np.shape(x), dtype=bool)
    for lo, hi in intervals:
        tol = _POS_TOL * max([1.0] + [abs(v) for v in (lo, hi) if math.isfinite(v)])
        ok |= (x >= lo - tol) & (x <= hi + tol)
    return ok


def count_pinned_cylinder(q1, q2, grid, bins):
    """Exact number of pinned lattice paths meeting every bin, and the total.

    Dynamic programming over lattice offsets between the bin times; the
    number of lattice paths covering offset d in k steps is C(k, (k + d) / 2).
    """
    n = grid.n
    m_end = walk.lattice_offset(q1, q2, grid)
    snapped, snaps = _snap_bins(grid, bins)
    counts = {0: 1}
    prev = 0
    for k, intervals in snapped:
        if k in (0, n):
            pos = q1 if k == 0 else q2
            if not _inside(np.array(pos), intervals):
                return 0, comb(n, (n + m_end) // 2), snaps
            continue
        steps = k - prev
        new = {}
        for j in range(-k, k + 1, 2):
            if not _inside(np.array(q1 + grid.sqrt_eps * j), intervals):
                continue
            if abs(m_end - j) > n - k:
                continue
            c = 0
            for i, ci in counts.items():
                d = j - i
                if abs(d) <= steps and (steps + d) % 2 == 0:
                    c += ci * comb(steps, (steps + d) // 2)
            if c:
                new[j] = c
        counts, prev = new, k
        if not counts:
            break
    steps = n - prev
    total = comb(n, (n + m_end) // 2)
    good = sum(ci * comb(steps, (steps + m_end - i) // 2) for i, ci in counts.items()
               if abs(m_end - i) <= steps and (steps + m_end - i) % 2 == 0)
    return good, total, snaps


def enumerate_pinned_cylinder(q1, q2, grid: HyperfiniteGrid, bins, max_n=MAX_ENUMERATION_N):
    """Exact counting probability that a pinned walk lies in every bin.

    ``bins`` is a list of ``(time, [(lo, hi), ...])`` with closed intervals;
    times are snapped to the nearest lattice time.
    """
    if grid.n > max_n:
        raise ConfigurationError(f"enumeration is limited to n <= {max_n}")
    good, total, snaps = count_pinned_cylinder(q1, q2, grid, bins)
    frac = counting_measure(good, CountingSpace(total, "pinned lattice walks"))
    return LoebEstimate(float(frac), 0.0, total, True, frac,
                        {"n": grid.n, "snap_distances": snaps, "paths_in_set": good})


def sample_pinned_cylinder(q1, q2, grid, bins, samples, seed=0, workers=1):
    """Monte Carlo counting probability from hypergeometric pinned marginals."""
    snapped, snaps = _snap_bins(grid, bins)
    ks = [k for k, _ in snapped]

    def block(idx):
        pos = walk.pinned_marginal_batch(q1, q2, grid, ks, seed, idx)
        ok = np.ones(idx.size, dtype=bool)
        for j, (_, intervals) in enumerate(snapped):
            ok &= _inside(pos[:, j], intervals)
        return ok.astype(float)

    hits = sampling.map_blocks(block, samples, workers)
    p, se = sampling.mean_and_error(hits)
    return LoebEstimate(p, se, int(samples), False, None,
                        {"n": grid.n, "snap_distances": snaps, "hits": int(hits.sum())})


def wiener_probability(q1, q2, t, bins, tol=1e-10):
    """Cylinder measure of the bins divided by the total bridge mass K0_t(q1, q2)."""
    items = sorted(((float(s), iv) for s, iv in bins), key=lambda x: x[0])
    spec = CylinderSpec(q1, q2, t, tuple(s for s, _ in items), tuple(iv for _, iv in items))
    return cylinder_measure(spec, tol=tol) / free_line_kernel(q1, q2, t)


@dataclass(frozen=True)
class AndersonReport:
    p_walk: float
    std_error: float
    exact: bool
    p_wiener: float
    discrepancy: float
    threshold: float
    passed: bool
    n: int
    table: list
    meta: dict = field(default_factory=dict)

    def to_dict(self):
        return {"p_walk": self.p_walk, "std_error": self.std_error, "exact": self.exact,
                "p_wiener": self.p_wiener, "discrepancy": self.discrepancy,
                "threshold": self.threshold, "passed": self.passed, "n": self.n,
                "table": self.table, **self.meta}


def _walk_probability(q1, q2, t, n, bins, samples, seed, workers, method):
    grid = HyperfiniteGrid(t, n)
    if method == "auto":
        method = "enumerate" if samples is None else "sample"
    if method == "enumerate":
        return enumerate_pinned_cylinder(q1, q2, grid, bins)
    if samples is None:
        raise ConfigurationError("sampling needs a sample count")
    return sample_pinned_cylinder(q1, q2, grid, bins, samples, seed, workers)


def anderson_check(q1, q2, t, n, bins, samples=None, seed=0, workers=1, C=2.0, n_sweep=None,
                   method="auto"):
    """Compare walk counting probabilities with the normalized cylinder measure.

    PASS when |p_walk - p_wiener| <= max(3 std_error, C / sqrt(n)).  The
    convergence table lists every n in ``n_sweep`` (default: just ``n``).
    """
    p_w = wiener_probability(q1, q2, t, bins)
    rows = []
    for nn in (n_sweep or [n]):
        est = _walk_probability(q1, q2, t, nn, bins, samples, seed, workers, method)
        rows.append({"n": nn, "p_walk": est.value, "std_error": est.std_error, "p_wiener": p_w,
                     "discrepancy": abs(est.value - p_w), "exact": est.exact,
                     "snap_distances": est.meta["snap_distances"]})
    if n_sweep and n in n_sweep:
        main = rows[list(n_sweep).index(n)]
    else:
        est = _walk_probability(q1, q2, t, n, bins, samples, seed, workers, method)
        main = {"p_walk": est.value, "std_error": est.std_error, "exact": est.exact,
                "discrepancy": abs(est.value - p_w)}
    threshold = max(3 * main["std_error"], C / math.sqrt(n))
    return AndersonReport(main["p_walk"], main["std_error"], main["exact"], p_w,
                          main["discrepancy"], threshold, main["discrepancy"] <= threshold, n,
                          rows, {"q1": q1, "q2": q2, "t": t, "C": C,
                                 "bins": [[s, [list(i) for i in iv]] for s, iv in bins]})


def discrepancy_nonincreasing(table, k_se=2.0):
    """True when each discrepancy is at most the previous one plus k_se combined errors."""
    for a, b in zip(table, table[1:]):
        slack = k_se * math.hypot(a["std_error"], b["std_error"])
        if b["discrepancy"] > a["discrepancy"] + slack:
            return False
    return True
