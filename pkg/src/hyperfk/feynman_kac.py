"""Feynman-Kac estimators built on sampled walks.

Path weights are exp(-eps * sum_{k=1..n} V_eff(omega(t_k))) with
V_eff = V + c R (right-endpoint rule; a trapezoid rule is available).  The
constant part of V_eff (offset and c R on constant-curvature spaces) is
applied as the separate factor exp(-t * const), so shifting V by a constant
rescales every estimate by exactly that factor under common random numbers.

Estimators:

* :func:`estimate_semigroup_apply`  -- (T_t f)(q1) from free walks;
* :func:`estimate_kernel_line_bridge` -- K_t(q1, q2) on the line as
  K0_t(q1, q2) times the mean weight of uniformly drawn pinned walks;
* :func:`estimate_kernel_binned` -- K_t(q1, q2) on any manifold from the
  weighted fraction of free walks ending in a geodesic ball around q2,
  divided by the ball volume.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from . import sampling, walk
from .errors import ConfigurationError, DegenerateEstimateError, DomainError, EvaluationError
from .manifold import Circle, EuclideanLine, EuclideanSpace, Manifold, Sphere2, _wrap
from .oracle import free_line_kernel
from .potential import Potential, TestFunction
from .walk import HyperfiniteGrid, WalkPath

__all__ = [
    "Potential", "TestFunction", "KernelEstimate", "action_weight", "log_weights",
    "estimate_semigroup_apply", "estimate_kernel_line_bridge", "estimate_kernel_binned",
    "estimate_kernel_binned_many", "lattice_bin_radius",
    "default_bin_radius", "Quadrature", "KernelPropertyReport", "verify_kernel_properties",
    "EmpiricalKernel",
]


@dataclass(frozen=True)
class KernelEstimate:
    value: float
    std_error: float
    samples: int
    grid: HyperfiniteGrid
    method: str
    bin_radius: float | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def to_dict(self):
        return {"value": self.value, "std_error": self.std_error, "samples": self.samples,
                "grid": self.grid.to_dict(), "method": self.method,
                "bin_radius": self.bin_radius, **self.meta}


def _is_line(m):
    return isinstance(m, EuclideanSpace) and m.dimension == 1


def log_weights(m: Manifold, V: Potential, points, grid: HyperfiniteGrid, trapezoid=False):
    """eps * sum of the non-constant part of V_eff along each path.

    ``points`` has shape (N, n + 1, D) or (N, n + 1) for one-dimensional
    spaces.  Raises :class:`EvaluationError` naming the first bad step.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 2:
        pts = pts[..., None]
    v = V.variable_part(m, pts)
    bad = ~np.isfinite(v)
    if bad.any():
        k = int(np.argwhere(bad)[0][1])
        raise EvaluationError(f"potential is not finite at step {k}", step_index=k)
    if trapezoid:
        s = v[:, 1:-1].sum(axis=1) + 0.5 * (v[:, 0] + v[:, -1])
    else:
        s = v[:, 1:].sum(axis=1)
    return grid.epsilon * s


def action_weight(path: WalkPath, V: Potential, trapezoid=False):
    """exp(-eps * sum_{k=1..n} V_eff(omega(t_k))) for a single path."""
    a = log_weights(path.manifold, V, path.points[None], path.grid, trapezoid)[0]
    const = V.constant_part(path.manifold)
    return float(math.exp(-a) * math.exp(-path.grid.t * const))


def _antithetic_default(m, antithetic):
    if antithetic is None:
        return _is_line(m)
    if antithetic and not _is_line(m):
        raise ConfigurationError("antithetic pairing is implemented on the euclidean line only")
    return bool(antithetic)


def _summarize(values, antithetic):
    if antithetic:
        pairs = 0.5 * (values[0::2] + values[1::2])
        _, se = sampling.mean_and_error(pairs)
        return sampling.stable_mean(values), se
    return sampling.mean_and_error(values)


def _check_samples(samples, antithetic):
    if samples < 2:
        raise DomainError("need at least 2 samples")
    if antithetic and samples % 2:
        raise ConfigurationError("antithetic pairing needs an even sample count")


def _free_endpoints_and_logw(m, V, q1, grid, master_seed, idx, antithetic, trapezoid):
    """Endpoints (N, D) and variable log weights (N,) of free walks."""
    need_path = not V.is_constant or (V.curvature_coupling and m.constant_curvature is None)
    if _is_line(m):
        q = float(np.asarray(q1, dtype=float).reshape(-1)[0])
        if not need_path:
            return walk.line_walk_endpoints(q, grid, master_seed, idx, antithetic)[:, None], \
                np.zeros(idx.size)
        pts = walk.line_walk_batch(q, grid, master_seed, idx, antithetic)
        return pts[:, -1:], log_weights(m, V, pts, grid, trapezoid)
    if isinstance(m, Circle) and not need_path:
        offs = walk.lattice_endpoint_offsets(grid, master_seed, idx, walk.rng.STREAM_MANIFOLD)
        ang = _wrap(float(q1[0]) + (grid.sqrt_eps / m.radius) * offs)
        return ang[:, None], np.zeros(idx.size)
    if not need_path:
        return walk.manifold_walk_endpoints(m, q1, grid, master_seed, idx), np.zeros(idx.size)
    pts = walk.manifold_walk_batch(m, q1, grid, master_seed, idx)
    return pts[:, -1], log_weights(m, V, pts, grid, trapezoid)


def estimate_semigroup_apply(m: Manifold, V: Potential, f, q1, grid: HyperfiniteGrid, samples,
                             seed=0, workers=1, antithetic=None, trapezoid=False):
    """Monte Carlo estimate of (T_t f)(q1) = E[weight * f(endpoint)] over free walks."""
    f = TestFunction.parse(f) if isinstance(f, str) else f
    antithetic = _antithetic_default(m, antithetic)
    _check_samples(samples, antithetic)
    q1p = m.as_points(q1)
    const = math.exp(-grid.t * V.constant_part(m))

    def block(idx):
        end, a = _free_endpoints_and_logw(m, V, q1p, grid, seed, idx, antithetic, trapezoid)
        return np.exp(-a) * f(end)

    vals = sampling.map_blocks(block, samples, workers)
    if not np.all(np.isfinite(vals)):
        raise EvaluationError("test function is not finite at some endpoint")
    mean, se = _summarize(vals, antithetic)
    meta = {"manifold": m.to_dict(), "q1": np.asarray(q1p).tolist(), "potential": V.to_dict(),
            "f": f.to_dict(), "seed": int(seed), "antithetic": antithetic, "trapezoid": trapezoid}
    return KernelEstimate(const * mean, const * se, int(samples), grid, "semigroup", None, meta)


def estimate_kernel_line_bridge(q1, q2, grid: HyperfiniteGrid, V: Potential, samples, seed=0,
                                workers=1, antithetic=True, trapezoid=False):
    """K_t(q1, q2) = K0_t(q1, q2) * mean weight over uniform pinned lattice walks."""
    q1, q2 = float(q1), float(q2)
    walk.lattice_offset(q1, q2, grid)
    _check_samples(samples, antithetic)
    m = EuclideanLine()
    k0 = free_line_kernel(q1, q2, grid.t)
    const = math.exp(-grid.t * V.constant_part(m))
    meta = {"manifold": m.to_dict(), "q1": q1, "q2": q2, "potential": V.to_dict(),
            "seed": int(seed), "antithetic": bool(antithetic), "trapezoid": trapezoid,
            "free_kernel": k0}
    if V.is_constant:
        return KernelEstimate(k0 * const, 0.0, int(samples), grid, "bridge", None, meta)

    def block(idx):
        pts = walk.pinned_walk_batch(q1, q2, grid, seed, idx, antithetic)
        return np.exp(-log_weights(m, V, pts, grid, trapezoid))

    w = sampling.map_blocks(block, samples, workers)
    mean, se = _summarize(w, antithetic)
    return KernelEstimate(k0 * const * mean, k0 * const * se, int(samples), grid, "bridge",
                          None, meta)


def default_bin_radius(t, samples):
    return 0.4 * math.sqrt(t) * samples ** (-0.2)


def lattice_bin_radius(m, q1, q2, grid, radius):
    """Bin radius adapted to the endpoint lattice of a one-dimensional walk.

    Endpoints of a D = 1 walk sit on a lattice of spacing 2 sqrt(eps).  With
    delta the distance from q2 to the nearest site, a ball of radius
    N sqrt(eps) holds exactly N sites when N is odd and delta < sqrt(eps),
    or N is even and delta > 0.  The parity giving the larger margin between
    the ball boundary and the nearest site is used.
    """
    se = grid.sqrt_eps
    n = grid.n
    if isinstance(m, Circle):
        x = float(np.mod(q2 - q1 + math.pi, 2 * math.pi) - math.pi) * m.radius / se
    else:
        x = float(q2 - q1) / se
    # nearest site with the parity of n
    j = 2 * round((x - n) / 2) + n
    delta = abs(x - j)
    target = radius / se
    parity = 1 if delta <= 0.5 else 0
    N = max(2 * round((target - parity) / 2) + parity, 1 if parity else 2)
    return N * se


def estimate_kernel_binned(m: Manifold, q1, q2, grid: HyperfiniteGrid, V: Potential, samples,
                           bin_radius=None, seed=0, workers=1, antithetic=None, trapezoid=False,
                           snap_radius=True):
    """K_t(q1, q2) from the weighted fraction of free walks ending within bin_radius of q2.

    For one-dimensional spaces the radius is adjusted to the endpoint lattice
    (see :func:`lattice_bin_radius`) unless ``snap_radius`` is false.
    """
    return estimate_kernel_binned_many(m, q1, [q2], grid, V, samples, bin_radius, seed,
                                       workers, antithetic, trapezoid, snap_radius)[0]


def estimate_kernel_binned_many(m: Manifold, q1, targets, grid: HyperfiniteGrid, V: Potential,
                                samples, bin_radius=None, seed=0, workers=1, antithetic=None,
                                trapezoid=False, snap_radius=True):
    """Binned estimates at several targets from one set of walks."""
    antithetic = _antithetic_default(m, antithetic)
    _check_samples(samples, antithetic)
    q1p = m.as_points(q1)
    targets = [m.as_points(q) for q in targets]
    requested = default_bin_radius(grid.t, samples) if bin_radius is None else float(bin_radius)
    if not requested > 0:
        raise DomainError("bin_radius must be positive")
    radii = []
    for q2p in targets:
        rho = min(requested, m.injectivity_radius)
        if snap_radius and m.dimension == 1:
            rho = min(lattice_bin_radius(m, float(q1p[0]), float(q2p[0]), grid, rho),
                      m.injectivity_radius)
        radii.append(rho)
    vols = [m.ball_volume(q2p, rho) for q2p, rho in zip(targets, radii)]
    const = math.exp(-grid.t * V.constant_part(m))

    def block(idx):
        end, a = _free_endpoints_and_logw(m, V, q1p, grid, seed, idx, antithetic, trapezoid)
        w = np.exp(-a)
        cols = [np.where(np.asarray(m.distance(end, q2p)) <= rho * (1 + 1e-12), w, 0.0)
                for q2p, rho in zip(targets, radii)]
        return np.stack(cols, axis=-1)

    vals = sampling.map_blocks(block, samples, workers)
    out = []
    for j, (q2p, rho, vol) in enumerate(zip(targets, radii, vols)):
        col = vals[:, j]
        hits = int(np.count_nonzero(col))
        if hits == 0:
            raise DegenerateEstimateError(
                f"no walk ended within {rho:.4g} of q2={q2p.tolist()} after {samples} samples; "
                "use a larger bin radius or more samples")
        mean, se = _summarize(col / float(vol), antithetic)
        meta = {"manifold": m.to_dict(), "q1": q1p.tolist(), "q2": q2p.tolist(),
                "potential": V.to_dict(), "seed": int(seed), "antithetic": antithetic,
                "trapezoid": trapezoid, "requested_bin_radius": requested,
                "ball_volume": float(vol), "ball_clamped": bool(vol.clamped), "hits": hits}
        out.append(KernelEstimate(const * mean, const * se, int(samples), grid, "binned", rho, meta))
    return out


# ---------------------------------------------------------------------------
# kernel axioms


@dataclass(frozen=True)
class Quadrature:
    """Nodes with Riemannian volume weights covering a manifold.

    ``adaptive`` line quadratures integrate with scipy's adaptive rule
    over (lo, hi) instead of fixed nodes.
    """

    kind: str
    nodes: np.ndarray | None
    weights: np.ndarray | None
    lo: float = -math.inf
    hi: float = math.inf
    radius: float = 1.0
    adaptive: bool = False

    @classmethod
    def line(cls, lo, hi, panels=400, order=10):
        g, gw = np.polynomial.legendre.leggauss(order)
        edges = np.linspace(lo, hi, panels + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[1:] + edges[:-1])
        x = (mid[:, None] + half[:, None] * g).ravel()
        w = (half[:, None] * gw).ravel()
        return cls("line", x[:, None], w, float(lo), float(hi))

    @classmethod
    def line_adaptive(cls, lo=-math.inf, hi=math.inf):
        return cls("line", None, None, float(lo), float(hi), adaptive=True)

    @classmethod
    def circle(cls, size=512, radius=1.0):
        x = 2 * math.pi * np.arange(size) / size
        return cls("circle", x[:, None], np.full(size, 2 * math.pi * radius / size),
                   radius=float(radius))

    @classmethod
    def sphere(cls, n_theta=64, n_phi=128, radius=1.0):
        c, cw = np.polynomial.legendre.leggauss(n_theta)
        phi = 2 * math.pi * np.arange(n_phi) / n_phi
        T, P = np.meshgrid(np.arccos(c), phi, indexing="ij")
        W = np.outer(cw, np.full(n_phi, 2 * math.pi / n_phi)) * radius ** 2
        return cls("sphere2", np.stack([T.ravel(), P.ravel()], axis=-1), W.ravel(),
                   radius=float(radius))

    def integrate(self, fn):
        """Integral of fn(points) -> values over the manifold."""
        if self.adaptive:
            val, _ = integrate.quad(lambda y: float(fn(np.array([[y]]))[0]), self.lo, self.hi,
                                    epsabs=1e-13, epsrel=1e-12, limit=400)
            return val
        return float(np.sum(self.weights * fn(self.nodes)))


def _check_coverage(m, quad, probes, times):
    if quad.kind == "line":
        if not _is_line(m):
            raise ConfigurationError("line quadrature does not cover this manifold")
        spread = 10 * math.sqrt(max(times))
        lo, hi = float(np.min(probes)) - spread, float(np.max(probes)) + spread
        if quad.lo > lo or quad.hi < hi:
            raise ConfigurationError(
                f"quadrature [{quad.lo}, {quad.hi}] does not cover [{lo:.3g}, {hi:.3g}]")
    elif quad.kind == "circle":
        if not isinstance(m, Circle) or not math.isclose(quad.radius, m.radius):
            raise ConfigurationError("circle quadrature does not match the manifold")
    elif quad.kind == "sphere2":
        if not isinstance(m, Sphere2) or not math.isclose(quad.radius, m.radius):
            raise ConfigurationError("sphere quadrature does not match the manifold")
    else:
        raise ConfigurationError(f"unsupported quadrature {quad.kind!r}")


@dataclass(frozen=True)
class KernelPropertyReport:
    positivity: bool | None
    normalization: bool | None
    chapman_kolmogorov: bool | None
    min_value: float | None
    normalization_residual: float | None
    ck_residual: float | None
    tolerance: float

    @property
    def passed(self):
        return all(v for v in (self.positivity, self.normalization, self.chapman_kolmogorov)
                   if v is not None)

    def to_dict(self):
        return {"positivity": self.positivity, "normalization": self.normalization,
                "chapman_kolmogorov": self.chapman_kolmogorov, "min_value": self.min_value,
                "normalization_residual": self.normalization_residual,
                "ck_residual": self.ck_residual, "tolerance": self.tolerance,
                "passed": self.passed}


def _default_probes(m):
    if _is_line(m):
        return np.array([[-1.0], [-0.3], [0.0], [0.5], [1.2]])
    if isinstance(m, Circle):
        return np.array([[0.0], [1.0], [2.5], [4.0]])
    if isinstance(m, Sphere2):
        return np.array([[0.0, 0.0], [0.7, 1.0], [1.6, 3.0], [2.9, 5.0]])
    raise ConfigurationError("no default probes for this manifold")


def verify_kernel_properties(kernel, m: Manifold, t1, t2, quadrature: Quadrature, tolerance,
                             probes=None, properties=("positivity", "normalization",
                                                      "chapman_kolmogorov")):
    """Check positivity, unit mass and the semigroup identity of ``kernel(x, y, t)``.

    ``kernel`` takes point arrays with trailing coordinate axis (broadcast
    against each other) and returns densities per unit Riemannian volume.
    """
    probes = _default_probes(m) if probes is None else np.atleast_2d(np.asarray(probes, dtype=float))
    if m.dimension == 1 and probes.shape[-1] != 1:
        probes = probes.reshape(-1, 1)
    times = (t1, t2, t1 + t2)
    _check_coverage(m, quadrature, probes, times)
    bad = set(properties) - {"positivity", "normalization", "chapman_kolmogorov"}
    if bad:
        raise ConfigurationError(f"unknown properties {sorted(bad)}")

    pos = norm = ck = None
    min_val = norm_res = ck_res = None
    if "positivity" in properties:
        if quadrature.adaptive:
            ys = np.linspace(-8 * math.sqrt(max(times)), 8 * math.sqrt(max(times)), 801)[:, None]
        else:
            ys = quadrature.nodes
        vals = [np.asarray(kernel(x[None, :], ys, s)) for x in probes for s in times]
        min_val = float(min(np.min(v) for v in vals))
        pos = min_val > 0
    if "normalization" in properties:
        norm_res = max(abs(quadrature.integrate(lambda y, x=x, s=s: kernel(x[None, :], y, s)) - 1.0)
                       for x in probes for s in times)
        norm = norm_res <= tolerance
    if "chapman_kolmogorov" in properties:
        ck_res = 0.0
        for x in probes:
            for z in probes:
                lhs = float(np.asarray(kernel(x[None, :], z[None, :], t1 + t2)).reshape(-1)[0])
                rhs = quadrature.integrate(
                    lambda y, x=x, z=z: kernel(x[None, :], y, t1) * kernel(y, z[None, :], t2))
                ck_res = max(ck_res, abs(lhs - rhs))
        ck = ck_res <= tolerance
    return KernelPropertyReport(pos, norm, ck, min_val, norm_res, ck_res, float(tolerance))


class EmpiricalKernel:
    """Binned estimator as a kernel function y -> K_t(q1, y) for fixed q1 and t.

    Walk endpoints and weights are sampled once; evaluating at y counts the
    weighted endpoints within ``bin_radius`` of y.  Only one-dimensional
    euclidean manifolds are supported.
    """

    def __init__(self, q1, grid, V=None, samples=100_000, bin_radius=None, seed=0, workers=1):
        m = EuclideanLine()
        V = Potential.zero() if V is None else V
        anti = True
        _check_samples(samples, anti)
        self.q1, self.grid = float(q1), grid
        self.bin_radius = default_bin_radius(grid.t, samples) if bin_radius is None else bin_radius

        def block(idx):
            end, a = _free_endpoints_and_logw(m, V, np.array([self.q1]), grid, seed, idx, anti, False)
            return end[:, 0], np.exp(-a) * math.exp(-grid.t * V.constant_part(m))

        end, w = sampling.map_blocks(block, samples, workers)
        order = np.argsort(end, kind="stable")
        self.endpoints = end[order]
        self.cum = np.concatenate([[0.0], np.cumsum(w[order])])
        self.samples = samples

    def __call__(self, x, y, t):
        if not math.isclose(t, self.grid.t) or not np.allclose(np.asarray(x), self.q1):
            raise ConfigurationError("empirical kernel only defined for its own q1 and t")
        y = np.asarray(y, dtype=float).reshape(-1)
        r = self.bin_radius
        lo = np.searchsorted(self.endpoints, y - r, side="left")
        hi = np.searchsorted(self.endpoints, y + r, side="right")
        return (self.cum[hi] - self.cum[lo]) / (self.samples * 2 * r)
