"""Reference kernels that do not use random walks.

* closed forms: free kernel on the line, image sum on the circle,
  Legendre series on the round sphere;
* grid propagators on an interval or circle chart, built from the
  finite-volume Laplace-Beltrami matrix, either exactly (dense
  eigendecomposition) or by Trotter splitting;
* cylinder-set measures of the pinned Wiener measure by nested
  Gauss-Legendre quadrature.

Sign convention: the Laplace-Beltrami operator is the positive one,
Delta = -(1/sqrt g) d (sqrt g g^{-1} d), and every semigroup is
exp(-t (Delta / 2 + V)).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import AccuracyError, ConfigurationError, DomainError, NumericalError, TruncationError

SQRT_2PI = math.sqrt(2.0 * math.pi)


def free_line_kernel(q1, q2, t):
    """(2 pi t)^(-1/2) exp(-(q2 - q1)^2 / 2t); broadcasts over arrays."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr <= 0):
        raise DomainError("t must be positive")
    d = np.asarray(q2, dtype=float) - np.asarray(q1, dtype=float)
    out = np.exp(-d * d / (2 * t_arr)) / np.sqrt(2 * math.pi * t_arr)
    return float(out) if out.ndim == 0 else out


def circle_kernel(theta1, theta2, t, r=1.0, tol=1e-12):
    """Heat kernel of a circle of radius r per unit arc length (image sum).

    Images are added in order of increasing |m| until the next pair is
    below ``tol`` relative to the running sum.
    """
    if t <= 0 or r <= 0:
        raise DomainError("t and r must be positive")
    L = 2 * math.pi * r
    d = np.mod(np.asarray(theta2, dtype=float) - np.asarray(theta1, dtype=float) + math.pi,
               2 * math.pi) - math.pi
    x = r * d
    total = free_line_kernel(0.0, x, t) * np.ones_like(x)
    m = 1
    while True:
        pair = free_line_kernel(0.0, x + m * L, t) + free_line_kernel(0.0, x - m * L, t)
        total = total + pair
        # |x| <= L/2, so later images are smaller than this pair
        if np.all(np.asarray(pair) <= tol * np.asarray(total)):
            break
        m += 1
    return float(total) if np.ndim(total) == 0 else total


def sphere_kernel_tail_bound(t, r=1.0, l_max=50):
    """Upper bound on the omitted terms l > l_max of the Legendre series."""
    tau = t / (2 * r * r)
    L = l_max

    def f(x):
        return (2 * x + 1) * math.exp(-tau * x * (x + 1))

    # f is unimodal; sum_{l > L} f(l) <= max_{x >= L} f + int_L^inf f
    x_peak = max(L, (math.sqrt(2 / tau) - 1) / 2)
    integral = math.exp(-tau * L * (L + 1)) / tau
    return (f(x_peak) + integral) / (4 * math.pi * r * r)


def sphere_kernel(gamma, t, r=1.0, l_max=50, tail_tol=1e-10):
    """Heat kernel of the round sphere at geodesic angle ``gamma``.

    Sum_{l <= l_max} (2l+1)/(4 pi r^2) exp(-l(l+1) t / 2r^2) P_l(cos gamma).
    """
    if t <= 0 or r <= 0:
        raise DomainError("t and r must be positive")
    if l_max < 1:
        raise DomainError("l_max must be >= 1")
    bound = sphere_kernel_tail_bound(t, r, l_max)
    if bound > tail_tol:
        raise TruncationError(
            f"Legendre tail bound {bound:.3g} exceeds {tail_tol:g}; increase l_max or t/r^2")
    x = np.cos(np.asarray(gamma, dtype=float))
    tau = t / (2 * r * r)
    p_prev, p = np.ones_like(x), x
    total = np.ones_like(x) + 3 * math.exp(-2 * tau) * x
    envelope = 1.0 + 3 * math.exp(-2 * tau)
    for l in range(1, l_max):
        p_prev, p = p, ((2 * l + 1) * x * p - l * p_prev) / (l + 1)
        ll = l + 1
        c = (2 * ll + 1) * math.exp(-tau * ll * (ll + 1))
        total = total + c * p
        envelope += c
    # the kernel is positive; near the antipode at small t the series cancels
    # to below its rounding envelope, so clip those values to zero
    floor = 64 * np.finfo(float).eps * envelope + bound * 4 * math.pi * r * r
    if np.any(total < -floor):
        raise TruncationError("Legendre series lost positivity beyond rounding")
    total = np.maximum(total, 0.0) / (4 * math.pi * r * r)
    return float(total) if total.ndim == 0 else total


# ---------------------------------------------------------------------------
# grid propagators


@dataclass(frozen=True)
class GridChart:
    """Uniform node grid on an interval (Dirichlet) or a circle (periodic).

    ``sqrt_g`` is the metric density in the chart coordinate; the default
    corresponds to a flat metric of unit scale (``radius`` on the circle).
    Interval nodes are a + i h, i = 1..N with h = (b - a) / (N + 1).
    """

    kind: str
    a: float
    b: float
    size: int
    radius: float = 1.0
    sqrt_g: object = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.kind not in ("interval", "circle"):
            raise DomainError("grid chart kind must be 'interval' or 'circle'")
        if self.size < 64:
            raise ConfigurationError("grid needs at least 64 points")
        if not self.b > self.a:
            raise DomainError("need a < b")

    @classmethod
    def interval(cls, a, b, size, sqrt_g=None):
        return cls("interval", float(a), float(b), int(size), 1.0, sqrt_g)

    @classmethod
    def circle(cls, size, radius=1.0):
        return cls("circle", 0.0, 2 * math.pi, int(size), float(radius))

    @property
    def boundary(self):
        return "dirichlet" if self.kind == "interval" else "periodic"

    @property
    def h(self):
        if self.kind == "interval":
            return (self.b - self.a) / (self.size + 1)
        return (self.b - self.a) / self.size

    @property
    def nodes(self):
        i = np.arange(self.size)
        if self.kind == "interval":
            return self.a + (i + 1) * self.h
        return self.a + i * self.h

    def density(self, x):
        if self.kind == "circle":
            return np.full_like(np.asarray(x, dtype=float), self.radius)
        if self.sqrt_g is None:
            return np.ones_like(np.asarray(x, dtype=float))
        return np.asarray(self.sqrt_g(np.asarray(x, dtype=float)), dtype=float)

    @property
    def weights(self):
        """Quadrature weights sqrt(g) h at the nodes."""
        return self.density(self.nodes) * self.h

    def laplacian(self):
        """Symmetric S with Delta = W^{-1} S, W = diag(weights).

        (Delta f)_i = -(1 / (s_i h^2)) [(f_{i+1} - f_i) / s_{i+1/2} - (f_i - f_{i-1}) / s_{i-1/2}]
        """
        N, h = self.size, self.h
        x = self.nodes
        half = self.density(x + h / 2)  # s_{i+1/2}
        S = np.zeros((N, N))
        c = 1.0 / (h * half)
        idx = np.arange(N)
        if self.kind == "interval":
            c_left = 1.0 / (h * self.density(x - h / 2))
            S[idx, idx] = c + c_left
            S[idx[:-1], idx[:-1] + 1] = -c[:-1]
            S[idx[:-1] + 1, idx[:-1]] = -c[:-1]
        else:
            S[idx, idx] = c + np.roll(c, 1)
            nxt = (idx + 1) % N
            S[idx, nxt] -= c
            S[nxt, idx] -= c
        return S

    def to_dict(self):
        return {"kind": self.kind, "a": self.a, "b": self.b, "size": self.size,
                "radius": self.radius, "boundary": self.boundary}


@dataclass(frozen=True)
class GridPropagator:
    """Kernel matrix K[i, j] = K_t(x_i, x_j) per unit Riemannian volume."""

    chart: GridChart
    t: float
    matrix: np.ndarray
    potential: dict
    method: str
    slices: int | None = None

    @property
    def nodes(self):
        return self.chart.nodes

    @property
    def weights(self):
        return self.chart.weights

    def row_integrals(self):
        return self.matrix @ self.weights

    def at(self, q1, q2):
        """Bilinear interpolation of the kernel between nodes."""
        x = self.nodes
        if self.chart.kind == "circle":
            q1, q2 = q1 % (2 * math.pi), q2 % (2 * math.pi)
            xs = np.append(x, 2 * math.pi)
            M = np.vstack([self.matrix, self.matrix[:1]])
            M = np.hstack([M, M[:, :1]])
        else:
            xs, M = x, self.matrix
            if not (xs[0] <= q1 <= xs[-1] and xs[0] <= q2 <= xs[-1]):
                raise DomainError("point outside the grid")
        i = min(max(int(np.searchsorted(xs, q1, side="right")) - 1, 0), len(xs) - 2)
        j = min(max(int(np.searchsorted(xs, q2, side="right")) - 1, 0), len(xs) - 2)
        fi = (q1 - xs[i]) / (xs[i + 1] - xs[i])
        fj = (q2 - xs[j]) / (xs[j + 1] - xs[j])
        return float((1 - fi) * (1 - fj) * M[i, j] + fi * (1 - fj) * M[i + 1, j]
                     + (1 - fi) * fj * M[i, j + 1] + fi * fj * M[i + 1, j + 1])

    def header(self):
        return {"chart": self.chart.to_dict(), "t": self.t, "method": self.method,
                "slices": self.slices, "potential": self.potential}

    def write_csv(self, path):
        with open(path, "w") as fh:
            fh.write("# " + json.dumps(self.header(), sort_keys=True) + "\n")
            fh.write("x," + ",".join(f"{v:.17g}" for v in self.nodes) + "\n")
            for xi, row in zip(self.nodes, self.matrix):
                fh.write(f"{xi:.17g}," + ",".join(f"{v:.17g}" for v in row) + "\n")


def _potential_values(chart, V):
    from .potential import Potential

    if V is None:
        V = Potential.zero()
    x = chart.nodes
    vals = np.asarray(V(x[:, None]), dtype=float) + V.offset
    if not np.all(np.isfinite(vals)):
        raise NumericalError("potential is not finite on the grid")
    return V, vals


def _symmetric_generator(chart, V):
    """W^{1/2} (Delta/2 + V) W^{-1/2}, symmetric."""
    V, vals = _potential_values(chart, V)
    w = chart.weights
    S = chart.laplacian()
    rs = 1.0 / np.sqrt(w)
    A = 0.5 * (rs[:, None] * S * rs[None, :])
    A[np.diag_indices_from(A)] += vals
    return V, A


def _eigh(A):
    try:
        return linalg.eigh(A)
    except linalg.LinAlgError as exc:
        raise NumericalError(f"eigensolver failed: {exc}") from exc


def spectral_kernel(chart: GridChart, V=None, t=1.0, max_size=4096):
    """exp(-t (Delta/2 + V)) on the grid by dense eigendecomposition."""
    if chart.size > max_size:
        raise ConfigurationError(f"grid size {chart.size} exceeds {max_size}")
    if t <= 0:
        raise DomainError("t must be positive")
    V, A = _symmetric_generator(chart, V)
    lam, U = _eigh(A)
    rs = 1.0 / np.sqrt(chart.weights)
    P = (U * np.exp(-t * lam)) @ U.T
    return GridPropagator(chart, float(t), rs[:, None] * P * rs[None, :], V.to_dict(), "spectral")


def _check_resolution(chart, t, m, points_per_width):
    width = math.sqrt(t / m)
    if width / chart.h < points_per_width:
        raise ConfigurationError(
            f"grid spacing {chart.h:.3g} does not resolve the slice kernel width "
            f"{width:.3g} with {points_per_width} points; need size >= "
            f"{int(math.ceil((chart.b - chart.a) * points_per_width / width))}")


def grid_trotter_kernel(chart: GridChart, V=None, t=1.0, m=64, points_per_width=8, max_size=4096):
    """[exp(-(t/m) Delta/2) exp(-(t/m) V)]^m on the grid."""
    if m < 1 or int(m) != m:
        raise DomainError("slices m must be a positive integer")
    if chart.size > max_size:
        raise ConfigurationError(f"grid size {chart.size} exceeds {max_size}")
    _check_resolution(chart, t, m, points_per_width)
    return trotter_sequence(chart, V, t, [int(m)], points_per_width=points_per_width)[0]


def trotter_sequence(chart, V, t, slices, points_per_width=8):
    """Trotter propagators for several slice counts, sharing one diagonalization."""
    from .potential import Potential

    V = Potential.zero() if V is None else V
    for m in slices:
        _check_resolution(chart, t, m, points_per_width)
    V, vals = _potential_values(chart, V)
    zero_V, A0 = _symmetric_generator(chart, Potential.zero())
    lam, U = _eigh(A0)
    rs = 1.0 / np.sqrt(chart.weights)
    out = []
    for m in slices:
        tau = t / m
        step = (U * np.exp(-tau * lam)) @ U.T
        step = step * np.exp(-tau * vals)[None, :]
        P = np.linalg.matrix_power(step, m)
        out.append(GridPropagator(chart, float(t), rs[:, None] * P * rs[None, :], V.to_dict(),
                                  "trotter", slices=m))
    return out


# ---------------------------------------------------------------------------
# cylinder sets


def _normalize_intervals(intervals):
    """Sort and merge a finite union of closed intervals."""
    iv = sorted((float(lo), float(hi)) for lo, hi in intervals)
    for lo, hi in iv:
        if not lo <= hi:
            raise DomainError(f"empty interval [{lo}, {hi}]")
    merged = []
    for lo, hi in iv:
        if merged and lo <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], hi))
        else:
            merged.append((lo, hi))
    return tuple(merged)


@dataclass(frozen=True)
class CylinderSpec:
    """Paths from q1 at time 0 to q2 at time t constrained to sets[k] at times[k]."""

    q1: float
    q2: float
    t: float
    times: tuple
    sets: tuple

    def __post_init__(self):
        if self.t <= 0:
            raise DomainError("t must be positive")
        times = tuple(float(s) for s in self.times)
        if len(times) != len(self.sets):
            raise DomainError("one set per interior time")
        if any(not 0 < s < self.t for s in times):
            raise DomainError("interior times must lie in (0, t)")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise DomainError("interior times must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "sets", tuple(_normalize_intervals(s) for s in self.sets))

    def to_dict(self):
        return {"q1": self.q1, "q2": self.q2, "t": self.t, "times": list(self.times),
                "sets": [[list(iv) for iv in s] for s in self.sets]}


def _gl_nodes(intervals, panels, order, clip):
    xs, ws = [], []
    g, gw = np.polynomial.legendre.leggauss(order)
    for lo, hi in intervals:
        lo, hi = max(lo, clip[0]), min(hi, clip[1])
        if hi <= lo:
            continue
        edges = np.linspace(lo, hi, panels + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[1:] + edges[:-1])
        xs.append((mid[:, None] + half[:, None] * g[None, :]).ravel())
        ws.append((half[:, None] * gw[None, :]).ravel())
    if not xs:
        return np.zeros(0), np.zeros(0)
    return np.concatenate(xs), np.concatenate(ws)


def _cylinder_at(spec, panels, order, clip):
    times = (0.0,) + spec.times + (spec.t,)
    f = None
    x_prev = np.array([spec.q1])
    w_prev = np.array([1.0])
    for k, B in enumerate(spec.sets):
        x, w = _gl_nodes(B, panels, order, clip)
        if x.size == 0:
            return 0.0
        dt = times[k + 1] - times[k]
        T = free_line_kernel(x_prev[:, None], x[None, :], dt)
        f = (w_prev * (np.ones(1) if f is None else f)) @ T
        x_prev, w_prev = x, w
    dt = spec.t - times[-2]
    T = free_line_kernel(x_prev, spec.q2, dt)
    return float(np.sum(w_prev * (np.ones(1) if f is None else f) * T))


def cylinder_measure(spec: CylinderSpec, tol=1e-10, order=16, max_panels=512, max_interior=4):
    """Pinned Wiener measure of a cylinder set by nested Gauss-Legendre quadrature.

    The integrand is a chain of free kernels, so the nested integral is a
    product of transfer matrices.  Panels per interval are doubled until two
    successive values agree within ``tol``.  Unbounded ends are cut at 20
    standard deviations beyond the endpoints.
    """
    if len(spec.times) > max_interior:
        raise ConfigurationError(f"at most {max_interior} interior times")
    if not spec.times:
        return free_line_kernel(spec.q1, spec.q2, spec.t)
    pad = 20.0 * math.sqrt(spec.t)
    clip = (min(spec.q1, spec.q2) - pad, max(spec.q1, spec.q2) + pad)
    panels = 4
    prev = _cylinder_at(spec, panels, order, clip)
    while True:
        panels *= 2
        cur = _cylinder_at(spec, panels, order, clip)
        err = abs(cur - prev)
        if err <= tol:
            return cur
        if panels >= max_panels:
            raise AccuracyError(f"cylinder quadrature reached {err:.3g} > {tol:g}", achieved=err)
        prev = cur
