"""Acceptance suite: eleven pass/fail checks of the estimators and oracles.

Criteria 1-7 run through the command-line interface and write result
files; criterion 11 reruns those commands with eight workers and compares
the files byte for byte.  Every check prints one PASS/FAIL line.
"""

from __future__ import annotations

import contextlib
import io
import itertools
import json
import math
import os
import tempfile
import time
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from . import cli, feynman_kac as fk, hfsets, oracle, results
from .manifold import Circle, EuclideanLine
from .potential import Potential

DEFAULT_SEED = 1


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0
    data: dict = field(default_factory=dict)

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.number:2d} {self.name}: {self.detail} ({self.seconds:.1f} s)"


def within(value, ref, se, rel):
    """|value - ref| <= max(3 se, rel |ref|)."""
    return abs(value - ref) <= max(3 * se, rel * abs(ref))


class Suite:
    def __init__(self, out_dir=None, workers=1, seed=DEFAULT_SEED):
        self._tmp = None
        if out_dir is None:
            self._tmp = tempfile.TemporaryDirectory(prefix="hyperfk-accept-")
            out_dir = self._tmp.name
        self.out_dir = out_dir
        self.workers = int(workers)
        self.other_workers = 8 if self.workers != 8 else 1
        self.seed = int(seed)
        self.runs = []  # (criterion, file name, argv) for the reproducibility check
        self.results = {}
        os.makedirs(os.path.join(out_dir, f"workers{self.workers}"), exist_ok=True)

    def close(self):
        if self._tmp is not None:
            self._tmp.cleanup()

    def cli(self, criterion, name, argv, workers=None, record=True):
        """Run a CLI command writing ``name``; returns (exit code, parsed file, seconds)."""
        workers = self.workers if workers is None else workers
        folder = os.path.join(self.out_dir, f"workers{workers}")
        os.makedirs(folder, exist_ok=True)
        path = os.path.join(folder, name)
        full = list(argv) + ["--seed", str(self.seed), "--workers", str(workers), "--out", path]
        err = io.StringIO()
        start = time.perf_counter()
        with contextlib.redirect_stderr(err):
            code = cli.main(full)
        seconds = time.perf_counter() - start
        if record:
            self.runs.append((criterion, name, list(argv)))
        if code == cli.EXIT_ERROR or not os.path.exists(path):
            raise RuntimeError(f"command {' '.join(argv)} failed: {err.getvalue().strip()}")
        if name.endswith(".json"):
            with open(path) as fh:
                doc = json.load(fh)
        else:
            doc = results.read_csv(path)
        return code, doc, seconds


# ---------------------------------------------------------------------------
# criteria


def free_bridge(suite):
    argv = ["kernel", "bridge", "--q1", "0", "--q2", "0", "--t", "1", "--n", "256",
            "--V", "zero", "--samples", "1000"]
    _, doc, secs = suite.cli(1, "c01_free_bridge.json", argv)
    r = doc["result"]
    exact = oracle.free_line_kernel(0.0, 0.0, 1.0)
    ok = r["value"] == exact and r["std_error"] == 0 and abs(r["value"] - 0.398942) < 5e-7 \
        and secs < 1.0
    return ok, f"value={r['value']:.9f} exact={exact:.9f} std_error={r['std_error']} " \
               f"cli_time={secs:.3f}s"


def harmonic_bridge(suite):
    argv = ["kernel", "bridge", "--q1", "0", "--q2", "0", "--t", "1", "--n", "256",
            "--V", "harmonic:1", "--samples", "100000"]
    _, doc, secs = suite.cli(2, "c02_harmonic_bridge.json", argv)
    r = doc["result"]
    chart = oracle.GridChart.interval(-6.0, 6.0, 2305)
    ref = oracle.spectral_kernel(chart, Potential.harmonic(1.0), 1.0).at(0.0, 0.0)
    mehler = (2 * math.pi * math.sinh(1.0)) ** -0.5
    oracle_ok = abs(ref - mehler) <= 0.002 * mehler
    ok = oracle_ok and within(r["value"], ref, r["std_error"], 0.02) and secs < 60
    return ok, (f"estimate={r['value']:.5f}+-{r['std_error']:.5f} spectral={ref:.5f} "
                f"closed_form={mehler:.5f} cli_time={secs:.1f}s")


def binned_line(suite):
    targets = [0.0, 0.5, 1.0, -1.5, 2.0]
    argv = ["kernel", "binned", "--manifold", "line", "--q1", "0",
            "--q2", ";".join(repr(q) for q in targets), "--t", "1", "--n", "2048",
            "--V", "zero", "--samples", "1000000", "--bin-radius", "0.05"]
    _, doc, secs = suite.cli(3, "c03_binned_line.json", argv)
    ests = doc["result"]["estimates"]
    ok = secs < 120
    parts = []
    for q, e in zip(targets, ests):
        ref = oracle.free_line_kernel(0.0, q, 1.0)
        good = within(e["value"], ref, e["std_error"], 0.02)
        ok &= good
        parts.append(f"q2={q:+.1f}: {e['value']:.4f}+-{e['std_error']:.4f} vs {ref:.4f}")
    return ok, "; ".join(parts) + f"; cli_time={secs:.1f}s"


def circle_kernel(suite):
    seps = [0.5, 1.5, 3.0]
    argv = ["kernel", "binned", "--manifold", "circle:1", "--q1", "0",
            "--q2", ";".join(repr(s) for s in seps), "--t", "0.5", "--n", "1024",
            "--samples", "400000", "--bin-radius", "0.05"]
    _, doc, _ = suite.cli(4, "c04_circle.json", argv)
    ok = True
    parts = []
    for s, e in zip(seps, doc["result"]["estimates"]):
        ref = oracle.circle_kernel(0.0, s, 0.5, 1.0)
        good = within(e["value"], ref, e["std_error"], 0.05)
        ok &= good
        parts.append(f"d={s}: {e['value']:.4f}+-{e['std_error']:.4f} vs {ref:.4f}")
    eq_argv = ["kernel", "binned", "--manifold", "circle:1", "--q1", "0", "--q2", "1.0;3.0",
               "--t", "50", "--n", "20000", "--samples", "100000", "--bin-radius", "1.0"]
    _, doc, _ = suite.cli(4, "c04_circle_equilibrium.json", eq_argv)
    uniform = 1 / (2 * math.pi)
    for e in doc["result"]["estimates"]:
        z = (e["value"] - uniform) / e["std_error"]
        ok &= abs(z) <= 3
        parts.append(f"t=50 q2={e['q2'][0]}: {e['value']:.5f} z={z:+.2f}")
    return ok, "; ".join(parts)


def sphere_kernel(suite):
    seps = [0.0, 0.5, 1.0]
    q1 = f"{math.pi / 2!r},0"
    targets = ";".join(f"{math.pi / 2!r},{s!r}" for s in seps)
    argv = ["kernel", "binned", "--manifold", "sphere2:1", "--q1", q1, "--q2", targets,
            "--t", "0.3", "--n", "256", "--samples", "400000", "--bin-radius", "0.1"]
    _, doc, _ = suite.cli(5, "c05_sphere.json", argv)
    ok = True
    parts = []
    for s, e in zip(seps, doc["result"]["estimates"]):
        ref = oracle.sphere_kernel(s, 0.3, 1.0, l_max=50)
        good = within(e["value"], ref, e["std_error"], 0.05)
        ok &= good
        parts.append(f"gamma={s}: {e['value']:.4f}+-{e['std_error']:.4f} vs {ref:.4f}")
    mom_argv = ["kernel", "semigroup", "--manifold", "sphere2:1", "--q1", "0,0", "--f", "cos:0",
                "--t", "0.3", "--n", "256", "--samples", "200000"]
    _, doc, _ = suite.cli(5, "c05_sphere_moment.json", mom_argv)
    r = doc["result"]
    ref = math.exp(-0.3)
    z = (r["value"] - ref) / r["std_error"]
    ok &= abs(z) <= 3
    parts.append(f"E[cos theta]={r['value']:.5f}+-{r['std_error']:.5f} vs e^-t={ref:.5f} "
                 f"z={z:+.2f}")
    return ok, "; ".join(parts)


def curvature_coupling(suite):
    base = ["kernel", "binned", "--manifold", "sphere2:1", "--q1", f"{math.pi / 2!r},0",
            "--q2", f"{math.pi / 2!r},0;{math.pi / 2!r},0.5", "--t", "0.3", "--n", "128",
            "--samples", "50000", "--bin-radius", "0.15"]
    _, d0, _ = suite.cli(6, "c06_coupling_c0.json", base + ["--c", "0"])
    _, d1, _ = suite.cli(6, "c06_coupling_c1_6.json", base + ["--c", repr(1 / 6)])
    factor = math.exp(-0.3 / 3)
    worst = 0.0
    for e0, e1 in zip(d0["result"]["estimates"], d1["result"]["estimates"]):
        worst = max(worst, abs(e1["value"] / e0["value"] - factor) / factor,
                    abs(e1["std_error"] / e0["std_error"] - factor) / factor)
    ok = worst <= 8 * np.finfo(float).eps
    return ok, f"max relative deviation of ratio from e^(-t/3): {worst:.2e}"


def anderson(suite):
    bins = ["--bin", "0.5:-0.5,0.5"]
    common = ["anderson", "--q1", "0", "--q2", "0", "--t", "1"] + bins
    _, enum_doc, _ = suite.cli(7, "c07_anderson_enum.json", common + ["--n", "16"])
    _, mc_doc, _ = suite.cli(7, "c07_anderson_mc.json",
                             common + ["--n", "16384", "--samples", "100000",
                                       "--n-sweep", "256,1024,4096,16384"])
    e, m = enum_doc["result"], mc_doc["result"]
    p = e["p_wiener"]
    enum_ok = within(e["p_walk"], p, 0.0, 0.02)
    mc_ok = within(m["p_walk"], p, m["std_error"], 0.02)
    mono = m["discrepancy_nonincreasing"]
    table = ", ".join(f"{r['n']}:{r['discrepancy']:.4f}" for r in m["table"])
    return enum_ok and mc_ok and mono, (
        f"p_wiener={p:.6f}; enumeration n=16: {e['p_walk']:.6f} "
        f"({'ok' if enum_ok else 'outside 2%'}); MC n=16384: {m['p_walk']:.4f}+-"
        f"{m['std_error']:.4f} ({'ok' if mc_ok else 'outside'}); discrepancies {table} "
        f"({'nonincreasing' if mono else 'not nonincreasing'})")


def trotter_order(suite):
    chart = oracle.GridChart.interval(-6.0, 6.0, 2305)
    V = Potential.harmonic(1.0)
    ref = oracle.spectral_kernel(chart, V, 1.0).matrix
    slices = [64, 128, 256, 512]
    devs = [float(np.max(np.abs(p.matrix - ref)))
            for p in oracle.trotter_sequence(chart, V, 1.0, slices)]
    ratios = [b / a for a, b in zip(devs, devs[1:])]
    order = -np.polyfit(np.log(slices), np.log(devs), 1)[0]
    ok = all(0.35 <= r <= 0.65 for r in ratios) and order >= 0.8
    return ok, ("deviations " + ", ".join(f"m={m}:{d:.3e}" for m, d in zip(slices, devs))
                + f"; ratios {', '.join(f'{r:.3f}' for r in ratios)}; order {order:.3f}")


def kernel_axioms(suite):
    line = EuclideanLine()
    rep_line = fk.verify_kernel_properties(
        lambda x, y, t: oracle.free_line_kernel(x[..., 0], y[..., 0], t), line, 0.5, 0.5,
        fk.Quadrature.line_adaptive(), 1e-6)
    circ = Circle(1.0)
    rep_circ = fk.verify_kernel_properties(
        lambda x, y, t: oracle.circle_kernel(x[..., 0], y[..., 0], t, 1.0), circ, 0.5, 0.5,
        fk.Quadrature.circle(512, 1.0), 1e-6)
    from .walk import HyperfiniteGrid

    kern = fk.EmpiricalKernel(0.0, HyperfiniteGrid(1.0, 256), Potential.zero(), 100_000,
                              seed=suite.seed, workers=suite.workers)
    quad = fk.Quadrature.line(-13.0, 13.0, panels=4000, order=4)
    mass = quad.integrate(lambda y: kern(0.0, y[..., 0], 1.0))
    ok = rep_line.passed and rep_circ.passed and abs(mass - 1) <= 0.05
    return ok, (f"line: norm {rep_line.normalization_residual:.1e} ck {rep_line.ck_residual:.1e}"
                f" min {rep_line.min_value:.1e}; circle: norm "
                f"{rep_circ.normalization_residual:.1e} ck {rep_circ.ck_residual:.1e} min "
                f"{rep_circ.min_value:.1e}; binned mass {mass:.4f}")


def golden_text(name):
    return resources.files("hyperfk").joinpath("golden", name).read_text().strip()


def _all_sets_of_rank_at_most(r):
    """Every set of rank <= r, built by iterating the power set from {}."""
    level = [hfsets.EMPTY]
    for _ in range(r):
        level = [hfsets.HFSet(c) for k in range(len(level) + 1)
                 for c in itertools.combinations(level, k)]
    return level


def _transitive(s):
    return all(b in s.elements for a in s.elements for b in a.elements)


def hereditarily_finite(suite):
    start = time.perf_counter()
    bad = []
    for k in range(11):
        if hfsets.render(hfsets.von_neumann_natural(k)) != golden_text(f"natural_{k}.txt"):
            bad.append(f"natural {k}")
    for k in range(5):
        got = hfsets.render(hfsets.cumulative_power_set(hfsets.EMPTY, k))
        if got != golden_text(f"cumulative_power_set_{k}.txt"):
            bad.append(f"cumulative power set {k}")
    nat = hfsets.von_neumann_natural
    arith = 0
    for a in range(17):
        for b in range(17):
            for op, fn in (("+", hfsets.nat_add), ("*", hfsets.nat_mul), ("^", hfsets.nat_exp)):
                want = {"+": a + b, "*": a * b, "^": a ** b}[op]
                if want > 16:
                    continue
                arith += 1
                if hfsets.natural_value(fn(nat(a), nat(b))) != want:
                    bad.append(f"{a}{op}{b}")
    sets = _all_sets_of_rank_at_most(3)
    naturals = {nat(k) for k in range(17)}
    for s in sets:
        # independent characterization: a transitive set of transitive sets
        expected = _transitive(s) and all(_transitive(e) for e in s.elements)
        if hfsets.is_ordinal(s) != expected or expected != (s in naturals):
            bad.append(f"ordinal {hfsets.render(s)}")
    secs = time.perf_counter() - start
    ok = not bad and secs < 10
    return ok, (f"16 golden listings, {arith} arithmetic cases, {len(sets)} sets of rank <= 3; "
                + ("all agree" if not bad else "mismatches: " + ", ".join(bad[:5])))


def reproducibility(suite):
    mism = []
    for criterion, name, argv in suite.runs:
        suite.cli(criterion, name, argv, workers=suite.other_workers, record=False)
        a = os.path.join(suite.out_dir, f"workers{suite.workers}", name)
        b = os.path.join(suite.out_dir, f"workers{suite.other_workers}", name)
        with open(a, "rb") as fa, open(b, "rb") as fb:
            if fa.read() != fb.read():
                mism.append(name)
    ok = bool(suite.runs) and not mism
    return ok, (f"{len(suite.runs)} result files compared across workers="
                f"{suite.workers} and workers={suite.other_workers}; "
                + ("byte-identical" if not mism else "differ: " + ", ".join(mism)))


CRITERIA = [
    (1, "free-kernel bridge identity", free_bridge),
    (2, "harmonic Feynman-Kac bridge", harmonic_bridge),
    (3, "binned estimator on the line", binned_line),
    (4, "circle kernel and equilibrium", circle_kernel),
    (5, "sphere kernel and first-mode moment", sphere_kernel),
    (6, "curvature coupling factorization", curvature_coupling),
    (7, "walk vs Wiener cylinder probability", anderson),
    (8, "Trotter splitting order", trotter_order),
    (9, "kernel axioms", kernel_axioms),
    (10, "hereditarily finite sets", hereditarily_finite),
    (11, "reproducibility across worker counts", reproducibility),
]


def run_criterion(suite, number):
    _, name, fn = CRITERIA[number - 1]
    start = time.perf_counter()
    try:
        ok, detail = fn(suite)
    except Exception as exc:  # a crash is a failure of that criterion only
        ok, detail = False, f"error: {type(exc).__name__}: {exc}"
    res = CriterionResult(number, name, bool(ok), detail, time.perf_counter() - start)
    suite.results[number] = res
    return res


def run_all(out_dir=None, workers=1, seed=DEFAULT_SEED, numbers=None, echo=True):
    suite = Suite(out_dir, workers, seed)
    try:
        out = []
        for number, _, _ in CRITERIA:
            if numbers is not None and number not in numbers:
                continue
            res = run_criterion(suite, number)
            if echo:
                print(res.line(), flush=True)
            out.append(res)
        return out
    finally:
        suite.close()


def main(out_dir=None, workers=1, seed=DEFAULT_SEED):
    res = run_all(out_dir, workers, seed)
    passed = sum(r.passed for r in res)
    print(f"{passed}/{len(res)} acceptance criteria passed")
    return passed == len(res)
