"""Command-line interface.

Exit status: 0 on success, 2 when a pass/fail check fails, 1 on error.
Result files are a pure function of the command and its flags; the
worker count and output location are not recorded in them, so runs with
different ``--workers`` are byte-identical.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time

import numpy as np

from . import __version__, feynman_kac as fk, hfsets, loeb, oracle, results, walk
from .errors import HyperFKError, ReachabilityError
from .manifold import Circle, EuclideanLine, EuclideanSpace, Sphere2, from_spec
from .potential import Potential, TestFunction
from .rng import SeedSpec

EXIT_OK, EXIT_ERROR, EXIT_FAIL = 0, 1, 2


class CheckFailed(Exception):
    """Raised by commands whose pass/fail gate did not pass."""


# ---------------------------------------------------------------------------
# argument helpers


def _point(text):
    return [float(v) for v in str(text).split(",")]


def _points(text):
    return [_point(p) for p in str(text).split(";") if p.strip()]


def _ints(text):
    return [int(v) for v in str(text).split(",") if v.strip()]


def _bin(text):
    """``time:lo,hi[;lo,hi...]``; ``inf``/``-inf`` allowed."""
    s, _, rest = text.partition(":")
    ivs = []
    for part in rest.split(";"):
        lo, hi = part.split(",")
        ivs.append((float(lo), float(hi)))
    return (float(s), ivs)


def _config(args):
    skip = {"func", "workers", "out", "format", "gnuplot"}
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
    if "manifold" in cfg:
        cfg["manifold"] = from_spec(cfg["manifold"]).to_dict()
    if "V" in cfg:
        cfg["V"] = _potential(args).to_dict()
    return cfg


def _potential(args):
    return Potential.parse(args.V, c=getattr(args, "c", 0.0) or 0.0)


def _emit(args, command, result, rows=None, columns=None, extra=None):
    """Write the result document to --out (or stdout).

    Tables go to CSV when ``--format csv`` is given or when there is no
    single result; ``extra`` is stored in the CSV header line.
    """
    cfg = _config(args)
    if rows is not None and (args.format == "csv" or result is None):
        header = {"command": command, "version": __version__, "config": cfg}
        if extra:
            header.update(extra)
        text = results.dumps_csv(header, columns, rows)
    else:
        text = results.dumps_json(results.document(command, cfg, result))
    if getattr(args, "out", None):
        results.write_text(args.out, text)
    else:
        sys.stdout.write(text)
    if getattr(args, "gnuplot", None) and getattr(args, "out", None):
        results.write_text(args.gnuplot, results.gnuplot_script(args.out, command))


def _log(msg):
    print(msg, file=sys.stderr)


def _grid(args, n=None):
    return walk.HyperfiniteGrid(args.t, args.n if n is None else n)


def _snap_q2(args, q1, q2, grid):
    """Apply --snap for pinned line walks; returns (q2 used, report or None)."""
    try:
        walk.lattice_offset(q1, q2, grid)
        return q2, None
    except ReachabilityError:
        if not getattr(args, "snap", False):
            raise
        snapped = walk.snap_endpoint(q1, q2, grid)
        _log(f"snapped q2 from {q2!r} to lattice value {snapped!r}")
        return snapped, {"requested_q2": q2, "snapped_q2": snapped}


# ---------------------------------------------------------------------------
# oracles used for sweeps


def _line_oracle(q1, q2, t, V):
    if V.is_constant:
        return oracle.free_line_kernel(q1, q2, t) * math.exp(-t * V.offset)
    half = max(abs(q1), abs(q2)) + 6 * math.sqrt(t) + 6
    size = min(4095, int(2 * half / 0.01) | 1)
    chart = oracle.GridChart.interval(-half, half, size)
    return oracle.spectral_kernel(chart, V, t).at(q1, q2)


def _kernel_oracle(m, q1, q2, t, V):
    if not V.is_constant and not isinstance(m, EuclideanSpace):
        return math.nan
    if isinstance(m, EuclideanSpace) and m.dimension == 1:
        return _line_oracle(float(q1[0]), float(q2[0]), t, V)
    factor = math.exp(-t * V.constant_part(m))
    if isinstance(m, Circle):
        return oracle.circle_kernel(q1[0], q2[0], t, m.radius) * factor
    if isinstance(m, Sphere2):
        gamma = float(m.distance(q1, q2)) / m.radius
        return oracle.sphere_kernel(gamma, t, m.radius) * factor
    return math.nan


# ---------------------------------------------------------------------------
# commands


def cmd_walk_sample(args):
    m = from_spec(args.manifold)
    grid = _grid(args)
    paths = []
    report = None
    for i in range(args.index, args.index + args.count):
        seed = SeedSpec(args.seed, i)
        if args.pinned:
            q1 = float(_point(args.q1)[0])
            # a pinned walk without --q2 is a loop back to q1
            q2_text = args.q1 if args.q2 is None else args.q2
            q2, report = _snap_q2(args, q1, float(_point(q2_text)[0]), grid)
            paths.append(walk.sample_pinned_line_walk(q1, q2, grid, seed))
        elif isinstance(m, EuclideanSpace) and m.dimension == 1 and not args.geodesic:
            paths.append(walk.sample_line_walk(float(_point(args.q1)[0]), grid, seed))
        else:
            paths.append(walk.sample_manifold_walk(m, _point(args.q1), grid, seed))
    header = {"command": "walk sample", "version": __version__, "config": _config(args),
              "grid": grid.to_dict(), "seed": args.seed, "snap": report}
    if args.format == "json":
        doc = results.document("walk sample", _config(args),
                               {"paths": [{"sample": p.seed.sample_index,
                                           "points": p.points.tolist()} for p in paths],
                                "snap": report})
        text = results.dumps_json(doc)
    else:
        text = results.path_csv(paths, header)
    if args.out:
        results.write_text(args.out, text)
    else:
        sys.stdout.write(text)


def _sweep_rows(ns, fn, oracle_value_fn):
    rows = []
    for n in ns:
        est = fn(n)
        ref = oracle_value_fn(n)
        rel = abs(est.value - ref) / abs(ref) if ref and math.isfinite(ref) else math.nan
        rows.append([n, est.value, est.std_error, ref, rel])
    return rows


SWEEP_COLUMNS = ["n", "estimate", "std_error", "oracle", "rel_error"]


def cmd_kernel_bridge(args):
    V = _potential(args)
    q1 = float(args.q1)
    anti = not args.no_antithetic

    def run(n):
        grid = _grid(args, n)
        q2, report = _snap_q2(args, q1, float(args.q2), grid)
        est = fk.estimate_kernel_line_bridge(q1, q2, grid, V, args.samples, args.seed,
                                             args.workers, anti, args.trapezoid)
        if report:
            est.meta["snap"] = report
        return est

    if args.n_sweep:
        ref = _line_oracle(q1, float(args.q2), args.t, V)
        rows = _sweep_rows(_ints(args.n_sweep), run, lambda n: ref)
        _emit(args, "kernel bridge", None, rows, SWEEP_COLUMNS)
        return
    est = run(args.n)
    snap = est.meta.get("snap")
    _emit(args, "kernel bridge", est.to_dict(),
          [[est.grid.n, est.meta["q2"], est.value, est.std_error]],
          ["n", "q2", "value", "std_error"], {"snap": snap} if snap else None)


def cmd_kernel_binned(args):
    m = from_spec(args.manifold)
    V = _potential(args)
    q1 = _point(args.q1)
    targets = _points(args.q2)

    def run(n):
        return fk.estimate_kernel_binned_many(m, q1, targets, _grid(args, n), V, args.samples,
                                              args.bin_radius, args.seed, args.workers,
                                              None if not args.no_antithetic else False,
                                              args.trapezoid, not args.no_snap_radius)

    if args.n_sweep:
        if len(targets) != 1:
            raise HyperFKError("--n-sweep takes a single --q2 target")
        ref = _kernel_oracle(m, m.as_points(q1), m.as_points(targets[0]), args.t, V)
        rows = _sweep_rows(_ints(args.n_sweep), lambda n: run(n)[0], lambda n: ref)
        _emit(args, "kernel binned", None, rows, SWEEP_COLUMNS)
        return
    ests = run(args.n)
    payload = [e.to_dict() for e in ests]
    rows = [[json.dumps(e.meta["q2"]), e.value, e.std_error, e.bin_radius] for e in ests]
    _emit(args, "kernel binned", payload[0] if len(payload) == 1 else {"estimates": payload},
          rows, ["q2", "value", "std_error", "bin_radius"])


def cmd_kernel_semigroup(args):
    m = from_spec(args.manifold)
    V = _potential(args)
    f = TestFunction.parse(args.f)

    def run(n):
        return fk.estimate_semigroup_apply(m, V, f, _point(args.q1), _grid(args, n), args.samples,
                                           args.seed, args.workers,
                                           None if not args.no_antithetic else False,
                                           args.trapezoid)

    if args.n_sweep:
        rows = _sweep_rows(_ints(args.n_sweep), run, lambda n: math.nan)
        _emit(args, "kernel semigroup", None, rows, SWEEP_COLUMNS)
        return
    est = run(args.n)
    _emit(args, "kernel semigroup", est.to_dict(), [[est.grid.n, est.value, est.std_error]],
          ["n", "value", "std_error"])


def _oracle_kernel_fn(name, m):
    if name == "free":
        return lambda x, y, t: oracle.free_line_kernel(x[..., 0], y[..., 0], t)
    if name == "circle":
        return lambda x, y, t: oracle.circle_kernel(x[..., 0], y[..., 0], t, m.radius)
    if name == "sphere":
        def k(x, y, t):
            gamma = np.asarray(m.distance(x, y)) / m.radius
            return oracle.sphere_kernel(gamma, t, m.radius)
        return k
    raise HyperFKError(f"unknown kernel {name!r}")


_KERNEL_MANIFOLDS = {"free": (EuclideanLine, "line"), "binned": (EuclideanLine, "line"),
                     "circle": (Circle, "circle"), "sphere": (Sphere2, "sphere2")}


def cmd_kernel_verify(args):
    cls, default = _KERNEL_MANIFOLDS[args.kernel]
    # the default --manifold is the line; circle and sphere kernels bring their own
    m = from_spec(default if args.manifold == "line" else args.manifold)
    if not isinstance(m, cls):
        raise HyperFKError(f"the {args.kernel} kernel needs a {default} manifold, got {m.kind}")
    if args.kernel == "binned":
        # the empirical kernel exists only at its own time, so only its mass is checked
        grid = walk.HyperfiniteGrid(args.t1, args.n)
        kern = fk.EmpiricalKernel(0.0, grid, _potential(args), args.samples, args.bin_radius,
                                  args.seed, args.workers)
        half = 12 * math.sqrt(args.t1) + 1
        quad = fk.Quadrature.line(-half, half, panels=4000, order=4)
        residual = abs(quad.integrate(lambda y: kern(0.0, y[..., 0], args.t1)) - 1.0)
        rep = fk.KernelPropertyReport(None, residual <= args.tolerance, None, None,
                                      float(residual), None, float(args.tolerance))
    else:
        if isinstance(m, Circle):
            quad = fk.Quadrature.circle(args.nodes, m.radius)
        elif isinstance(m, Sphere2):
            quad = fk.Quadrature.sphere(64, 128, m.radius)
        elif args.quadrature == "adaptive":
            quad = fk.Quadrature.line_adaptive()
        else:
            quad = fk.Quadrature.line(-20, 20)
        rep = fk.verify_kernel_properties(_oracle_kernel_fn(args.kernel, m), m, args.t1, args.t2,
                                          quad, args.tolerance)
    _emit(args, "kernel verify", rep.to_dict())
    if not rep.passed:
        raise CheckFailed("kernel property check failed")


def cmd_oracle_eval(args):
    V = _potential(args)
    name = args.kernel
    extra = {}
    if name == "free":
        value = oracle.free_line_kernel(float(args.q1), float(args.q2), args.t)
    elif name == "circle":
        value = oracle.circle_kernel(float(args.q1), float(args.q2), args.t, args.r)
    elif name == "sphere":
        value = oracle.sphere_kernel(float(args.gamma), args.t, args.r, args.l_max)
        extra["tail_bound"] = oracle.sphere_kernel_tail_bound(args.t, args.r, args.l_max)
    elif name in ("spectral", "trotter"):
        lo, hi = (float(v) for v in args.domain.split(","))
        if args.chart == "circle":
            chart = oracle.GridChart.circle(args.grid_size, args.r)
        else:
            chart = oracle.GridChart.interval(lo, hi, args.grid_size)
        if name == "spectral":
            prop = oracle.spectral_kernel(chart, V, args.t)
        else:
            prop = oracle.grid_trotter_kernel(chart, V, args.t, args.m)
        value = prop.at(float(args.q1), float(args.q2))
        if args.matrix_out:
            prop.write_csv(args.matrix_out)
    else:
        raise HyperFKError(f"unknown kernel {name!r}")
    _emit(args, "oracle eval", {"value": value, **extra})


def cmd_cylinder(args):
    bins = [_bin(b) for b in args.bin]
    bins.sort(key=lambda b: b[0])
    spec = oracle.CylinderSpec(args.q1, args.q2, args.t, tuple(b[0] for b in bins),
                               tuple(b[1] for b in bins))
    value = oracle.cylinder_measure(spec, tol=args.tol)
    _emit(args, "cylinder", {"value": value, "spec": spec.to_dict(),
                             "normalized": value / oracle.free_line_kernel(args.q1, args.q2, args.t)})


def cmd_anderson(args):
    bins = [_bin(b) for b in args.bin]
    sweep = _ints(args.n_sweep) if args.n_sweep else None
    method = "enumerate" if args.samples is None else "sample"
    rep = loeb.anderson_check(args.q1, args.q2, args.t, args.n, bins, args.samples, args.seed,
                              args.workers, args.C, sweep, method)
    out = rep.to_dict()
    if sweep:
        out["discrepancy_nonincreasing"] = loeb.discrepancy_nonincreasing(rep.table)
    if args.format == "csv":
        rows = [[r["n"], r["p_walk"], r["std_error"], r["p_wiener"], r["discrepancy"]]
                for r in rep.table]
        _emit(args, "anderson", out, rows, ["n", "p_walk", "std_error", "p_wiener", "discrepancy"])
    else:
        _emit(args, "anderson", out)
    if not rep.passed:
        raise CheckFailed("walk probability outside the tolerance")


def _hfs_natural_arg(text):
    text = text.strip()
    if text.startswith("{"):
        return hfsets.parse(text)
    return hfsets.von_neumann_natural(int(text))


def cmd_hfs(args):
    op = args.op
    a = args.args
    if op == "nat":
        out = hfsets.render(hfsets.von_neumann_natural(int(a[0])))
    elif op == "cps":
        base = hfsets.parse(a[1]) if len(a) > 1 else hfsets.empty()
        out = hfsets.render(hfsets.cumulative_power_set(base, int(a[0])))
    elif op in ("add", "mul", "exp"):
        fn = {"add": hfsets.nat_add, "mul": hfsets.nat_mul, "exp": hfsets.nat_exp}[op]
        out = hfsets.render(fn(_hfs_natural_arg(a[0]), _hfs_natural_arg(a[1])))
    elif op == "ord":
        s = _hfs_natural_arg(a[0])
        out = "true" if hfsets.is_ordinal(s) else "false"
    elif op == "parse":
        out = hfsets.render(hfsets.parse(a[0]))
    else:
        raise HyperFKError(f"unknown hfs operation {op!r}")
    sys.stdout.write(out + "\n")


def cmd_accept(args):
    from . import acceptance

    seed = acceptance.DEFAULT_SEED if args.seed is None else args.seed
    ok = acceptance.main(out_dir=args.out, workers=args.workers, seed=seed)
    if not ok:
        raise CheckFailed("acceptance criteria failed")


# ---------------------------------------------------------------------------
# parser


def _common(p, manifold=True, potential=True, sampling=True):
    if manifold:
        p.add_argument("--manifold", default="line", help="JSON object or short name")
    if potential:
        p.add_argument("--V", default="zero", help="potential name[:params]")
        p.add_argument("--c", type=float, default=0.0, help="curvature coupling")
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--n", type=int, default=256)
    if sampling:
        p.add_argument("--n-sweep", default=None, help="comma-separated slice counts")
        p.add_argument("--samples", type=int, default=10000)
        p.add_argument("--trapezoid", action="store_true")
        p.add_argument("--no-antithetic", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default=None)
    p.add_argument("--format", choices=("csv", "json"), default="json")
    p.add_argument("--gnuplot", default=None, help="write a gnuplot script for sweeps")


def build_parser():
    ap = argparse.ArgumentParser(prog="hyperfk", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    wk = sub.add_parser("walk").add_subparsers(dest="sub", required=True)
    p = wk.add_parser("sample", help="sample walk paths")
    _common(p, potential=False, sampling=False)
    p.add_argument("--q1", default="0")
    p.add_argument("--q2", default=None)
    p.add_argument("--pinned", action="store_true")
    p.add_argument("--geodesic", action="store_true", help="use the generic geodesic walker")
    p.add_argument("--snap", action="store_true")
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--count", type=int, default=1)
    p.set_defaults(func=cmd_walk_sample, format="csv")

    kn = sub.add_parser("kernel").add_subparsers(dest="sub", required=True)
    p = kn.add_parser("bridge", help="pinned-walk kernel estimate on the line")
    _common(p, manifold=False)
    p.add_argument("--q1", type=float, default=0.0)
    p.add_argument("--q2", type=float, default=0.0)
    p.add_argument("--snap", action="store_true")
    p.set_defaults(func=cmd_kernel_bridge)

    p = kn.add_parser("binned", help="endpoint-binned kernel estimate")
    _common(p)
    p.add_argument("--q1", default="0")
    p.add_argument("--q2", default="0", help="target point(s), ';'-separated")
    p.add_argument("--bin-radius", type=float, default=None)
    p.add_argument("--no-snap-radius", action="store_true")
    p.set_defaults(func=cmd_kernel_binned)

    p = kn.add_parser("semigroup", help="estimate (T_t f)(q1)")
    _common(p)
    p.add_argument("--q1", default="0")
    p.add_argument("--f", default="one")
    p.set_defaults(func=cmd_kernel_semigroup)

    p = kn.add_parser("verify", help="check positivity, normalization, Chapman-Kolmogorov")
    _common(p, sampling=False)
    p.add_argument("--kernel", choices=("free", "circle", "sphere", "binned"), default="free")
    p.add_argument("--t1", type=float, default=0.5)
    p.add_argument("--t2", type=float, default=0.5)
    p.add_argument("--tolerance", type=float, default=1e-6)
    p.add_argument("--quadrature", choices=("adaptive", "fixed"), default="adaptive")
    p.add_argument("--nodes", type=int, default=512)
    p.add_argument("--samples", type=int, default=100000)
    p.add_argument("--bin-radius", type=float, default=None)
    p.set_defaults(func=cmd_kernel_verify)

    orc = sub.add_parser("oracle").add_subparsers(dest="sub", required=True)
    p = orc.add_parser("eval", help="evaluate a reference kernel")
    _common(p, manifold=False, sampling=False)
    p.add_argument("--kernel", choices=("free", "circle", "sphere", "spectral", "trotter"),
                   default="free")
    p.add_argument("--q1", default="0")
    p.add_argument("--q2", default="0")
    p.add_argument("--gamma", type=float, default=0.0)
    p.add_argument("--r", type=float, default=1.0)
    p.add_argument("--l-max", type=int, default=50)
    p.add_argument("--chart", choices=("interval", "circle"), default="interval")
    p.add_argument("--domain", default="-6,6")
    p.add_argument("--grid-size", type=int, default=1201)
    p.add_argument("--m", type=int, default=64)
    p.add_argument("--matrix-out", default=None)
    p.set_defaults(func=cmd_oracle_eval)

    p = sub.add_parser("cylinder", help="pinned Wiener measure of a cylinder set")
    _common(p, manifold=False, potential=False, sampling=False)
    p.add_argument("--q1", type=float, default=0.0)
    p.add_argument("--q2", type=float, default=0.0)
    p.add_argument("--bin", action="append", required=True, help="time:lo,hi[;lo,hi]")
    p.add_argument("--tol", type=float, default=1e-10)
    p.set_defaults(func=cmd_cylinder)

    p = sub.add_parser("anderson", help="walk counting probability vs cylinder measure")
    _common(p, manifold=False, potential=False, sampling=False)
    p.add_argument("--q1", type=float, default=0.0)
    p.add_argument("--q2", type=float, default=0.0)
    p.add_argument("--bin", action="append", required=True, help="time:lo,hi[;lo,hi]")
    p.add_argument("--samples", type=int, default=None, help="omit for exact enumeration")
    p.add_argument("--n-sweep", default=None)
    p.add_argument("--C", type=float, default=2.0)
    p.set_defaults(func=cmd_anderson)

    p = sub.add_parser("hfs", help="hereditarily finite sets")
    p.add_argument("op", choices=("nat", "cps", "add", "mul", "exp", "ord", "parse"))
    p.add_argument("args", nargs="+")
    p.set_defaults(func=cmd_hfs)

    p = sub.add_parser("accept", help="run the acceptance suite")
    p.add_argument("--out", default=None, help="directory for result files")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--seed", type=int, default=None, help="master seed (suite default if omitted)")
    p.set_defaults(func=cmd_accept)
    return ap


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    start = time.perf_counter()
    try:
        args.func(args)
    except CheckFailed as exc:
        _log(f"FAIL: {exc}")
        return EXIT_FAIL
    except (HyperFKError, ValueError, ArithmeticError, MemoryError, OSError) as exc:
        _log(f"error: {exc}")
        return EXIT_ERROR
    finally:
        elapsed = time.perf_counter() - start
        if args.command != "hfs":
            label = " ".join(filter(None, [args.command, getattr(args, "sub", None)]))
            _log(f"[{label}] finished in {elapsed:.2f} s")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
