"""Lattice and geodesic-step random walks on a finite time grid.

A walk with ``n`` slices of length ``eps = t / n`` moves by a fixed
geodesic distance at every slice: ``sqrt(eps)`` on one-dimensional spaces
and ``sqrt(D * eps)`` in dimension ``D`` (an isotropic step of length
``l`` has generator ``l**2 / (2 D)`` times the Laplacian, so this length
gives ``-Delta/2`` per unit time).

Single-path samplers return :class:`WalkPath`; the ``*_batch`` variants
return plain arrays for a block of sample indices and are what the
estimators use.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from . import rng
from .errors import DomainError, ReachabilityError
from .manifold import Circle, EuclideanSpace, Manifold, Sphere2, _sphere_coords, _wrap

_REACH_TOL = 1e-9


@dataclass(frozen=True)
class HyperfiniteGrid:
    """Time lattice t_k = k * t / n, k = 0..n."""

    t: float
    n: int

    def __post_init__(self):
        if not (self.t > 0 and math.isfinite(self.t)):
            raise DomainError("horizon t must be positive and finite")
        if int(self.n) != self.n or self.n < 1:
            raise DomainError("slice count n must be an integer >= 1")
        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "n", int(self.n))

    @property
    def epsilon(self):
        return self.t / self.n

    @property
    def sqrt_eps(self):
        return math.sqrt(self.epsilon)

    @property
    def times(self):
        out = np.arange(self.n + 1) * self.epsilon
        out[-1] = self.t
        return out

    def nearest_index(self, s):
        """Index of the lattice time closest to ``s`` and the snap distance."""
        if not 0 <= s <= self.t:
            raise DomainError(f"time {s} outside [0, {self.t}]")
        k = int(round(s / self.epsilon))
        return k, abs(s - k * self.epsilon)

    def to_dict(self):
        return {"t": self.t, "n": self.n}


@dataclass(frozen=True)
class WalkPath:
    """One sampled walk: n + 1 points joined by geodesic segments."""

    grid: HyperfiniteGrid
    manifold: Manifold
    points: np.ndarray
    step_length: float
    seed: rng.SeedSpec | None = field(default=None, compare=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.shape[0] != self.grid.n + 1:
            raise DomainError("a walk on n slices has n + 1 points")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def endpoint(self):
        return self.points[-1]

    def step_lengths(self):
        return np.asarray(self.manifold.distance(self.points[:-1], self.points[1:]))


def step_length(m: Manifold, grid: HyperfiniteGrid):
    return math.sqrt(m.dimension * grid.epsilon)


# ---------------------------------------------------------------------------
# free lattice walk on the line


def line_increments(grid, master_seed, indices, stream=rng.STREAM_LINE):
    """±1 increments, shape (N, n), int8."""
    return rng.sign_bits(master_seed, indices, grid.n, stream)


def line_walk_batch(q1, grid, master_seed, indices, antithetic=False):
    """Positions q1 + sqrt(eps) * S_k for a block of samples, shape (N, n + 1).

    With ``antithetic`` every odd sample index is the mirror image of the
    preceding even one.
    """
    idx = np.asarray(indices, dtype=np.uint64)
    base = idx - (idx & np.uint64(1)) if antithetic else idx
    steps = line_increments(grid, master_seed, base)
    if antithetic:
        odd = (idx & np.uint64(1)).astype(bool)
        steps[odd] = -steps[odd]
    lattice = np.zeros((idx.size, grid.n + 1), dtype=np.int32)
    np.cumsum(steps, axis=1, dtype=np.int32, out=lattice[:, 1:])
    return q1 + grid.sqrt_eps * lattice


def lattice_endpoint_offsets(grid, master_seed, indices, stream=rng.STREAM_LINE):
    """Net number of up-steps of each sign sequence, from bit counts.

    Agrees exactly with summing :func:`rng.sign_bits` over the same stream.
    """
    n = grid.n
    words = rng.random_words(master_seed, indices, (n + 63) // 64, stream)
    if n % 64:
        words[:, -1] &= np.uint64((1 << (n % 64)) - 1)
    ups = np.bitwise_count(words).sum(axis=1, dtype=np.int64)
    return 2 * ups - n


def line_walk_endpoints(q1, grid, master_seed, indices, antithetic=False):
    """Endpoints only, computed from bit counts without forming the path."""
    idx = np.asarray(indices, dtype=np.uint64)
    base = idx - (idx & np.uint64(1)) if antithetic else idx
    m = lattice_endpoint_offsets(grid, master_seed, base)
    if antithetic:
        odd = (idx & np.uint64(1)).astype(bool)
        m[odd] = -m[odd]
    return q1 + grid.sqrt_eps * m


def sample_line_walk(q1, grid: HyperfiniteGrid, seed: rng.SeedSpec) -> WalkPath:
    """Free ±sqrt(eps) walk started at q1."""
    from .manifold import EuclideanLine

    pts = line_walk_batch(float(q1), grid, seed.master_seed, [seed.sample_index])[0]
    return WalkPath(grid, EuclideanLine(), pts, grid.sqrt_eps, seed)


# ---------------------------------------------------------------------------
# pinned lattice walk


def lattice_offset(q1, q2, grid):
    """Number m of net up-steps from q1 to q2; raises if unreachable."""
    n = grid.n
    x = (q2 - q1) / grid.sqrt_eps
    m = round(x)
    ok = abs(x - m) <= _REACH_TOL * max(1.0, abs(x)) and abs(m) <= n and (m - n) % 2 == 0
    if not ok:
        lo, hi = _nearest_reachable(x, n)
        nearest = (q1 + grid.sqrt_eps * lo, q1 + grid.sqrt_eps * hi)
        raise ReachabilityError(
            f"q2={q2} is not reachable from q1={q1} in n={n} steps of {grid.sqrt_eps:.6g}; "
            f"nearest reachable values are {nearest[0]!r} and {nearest[1]!r}",
            nearest=nearest,
        )
    return int(m)


def _nearest_reachable(x, n):
    """The two reachable offsets closest to x (bracketing x when |x| < n)."""
    closest = sorted(range(-n, n + 1, 2), key=lambda r: (abs(r - x), r))[:2]
    return min(closest), max(closest)


def snap_endpoint(q1, q2, grid):
    """Nearest lattice-reachable endpoint to q2 (ties go down)."""
    n = grid.n
    x = (q2 - q1) / grid.sqrt_eps
    cands = [m for m in range(-n, n + 1, 2)]
    best = min(cands, key=lambda m: (abs(m - x), m))
    return q1 + grid.sqrt_eps * best


def pinned_increments(n, ups, master_seed, indices):
    """Uniformly random arrangements of ``ups`` up-steps among ``n`` steps.

    Sequential selection sampling: the k-th step is up with probability
    (ups remaining) / (steps remaining), which yields every arrangement with
    probability 1 / C(n, ups).
    """
    idx = np.asarray(indices, dtype=np.uint64)
    u = rng.uniforms(master_seed, idx, n, rng.STREAM_PINNED)
    out = np.empty((idx.size, n), dtype=np.int8)
    remaining = np.full(idx.size, ups, dtype=np.int64)
    for k in range(n):
        up = u[:, k] * (n - k) < remaining
        out[:, k] = np.where(up, 1, -1)
        remaining -= up
    return out


def pinned_walk_batch(q1, q2, grid, master_seed, indices, antithetic=False):
    """Uniform pinned walks from q1 to q2, shape (N, n + 1); last column is q2 exactly.

    With ``antithetic`` every odd sample is the image of the preceding even
    one under a measure-preserving involution of the pinned path space:
    reflection about q1 when q1 == q2, time reversal otherwise.
    """
    n = grid.n
    m = lattice_offset(q1, q2, grid)
    ups = (n + m) // 2
    idx = np.asarray(indices, dtype=np.uint64)
    base = idx - (idx & np.uint64(1)) if antithetic else idx
    steps = pinned_increments(n, ups, master_seed, base)
    if antithetic:
        odd = (idx & np.uint64(1)).astype(bool)
        if m == 0:
            steps[odd] = -steps[odd]
        else:
            steps[odd] = steps[odd, ::-1]
    lattice = np.zeros((idx.size, n + 1), dtype=np.int32)
    np.cumsum(steps, axis=1, dtype=np.int32, out=lattice[:, 1:])
    out = q1 + grid.sqrt_eps * lattice
    out[:, -1] = q2
    return out


def sample_pinned_line_walk(q1, q2, grid: HyperfiniteGrid, seed: rng.SeedSpec) -> WalkPath:
    """Walk drawn uniformly from all lattice paths q1 -> q2 in n steps."""
    from .manifold import EuclideanLine

    pts = pinned_walk_batch(float(q1), float(q2), grid, seed.master_seed, [seed.sample_index])[0]
    return WalkPath(grid, EuclideanLine(), pts, grid.sqrt_eps, seed)


@functools.lru_cache(maxsize=4096)
def _hypergeom_cdf(pop, good, draws):
    """Support and normalized CDF of the count of good items in ``draws`` draws."""
    support = np.arange(max(0, draws - (pop - good)), min(draws, good) + 1)
    k = support.astype(float)
    logp = (special.gammaln(good + 1) - special.gammaln(k + 1) - special.gammaln(good - k + 1)
            + special.gammaln(pop - good + 1) - special.gammaln(draws - k + 1)
            - special.gammaln(pop - good - draws + k + 1))
    cdf = np.cumsum(np.exp(logp - logp.max()))
    cdf /= cdf[-1]
    support.setflags(write=False)
    cdf.setflags(write=False)
    return support, cdf


def pinned_marginal_batch(q1, q2, grid, step_indices, master_seed, indices):
    """Positions of uniform pinned walks at the given lattice times only.

    The number of up-steps among the first k steps of a uniform arrangement
    is hypergeometric, and successive counts are conditionally hypergeometric
    given the previous one, so positions at a few times can be drawn without
    forming the path.  Returns shape (N, len(step_indices)).
    """
    n = grid.n
    m = lattice_offset(q1, q2, grid)
    total_up = (n + m) // 2
    ks = [int(k) for k in step_indices]
    if sorted(ks) != ks or (ks and (ks[0] < 0 or ks[-1] > n)):
        raise DomainError("step indices must be increasing within 0..n")
    idx = np.asarray(indices, dtype=np.uint64)
    u = rng.uniforms(master_seed, idx, max(len(ks), 1), rng.STREAM_MARGINAL)
    ups_so_far = np.zeros(idx.size, dtype=np.int64)
    prev = 0
    out = np.empty((idx.size, len(ks)))
    for j, k in enumerate(ks):
        draws = k - prev
        if draws:
            remaining_up = total_up - ups_so_far
            pop = n - prev
            new = np.empty_like(ups_so_far)
            for r in np.unique(remaining_up):
                sel = remaining_up == r
                support, cdf = _hypergeom_cdf(pop, int(r), draws)
                pos = np.searchsorted(cdf, u[sel, j], side="right")
                new[sel] = support[np.minimum(pos, support.size - 1)]
            ups_so_far = ups_so_far + new
        prev = k
        out[:, j] = q1 + grid.sqrt_eps * (2 * ups_so_far - k)
        if k == n:
            out[:, j] = q2
    return out


# ---------------------------------------------------------------------------
# geodesic-step walks on manifolds


def _direction_randoms(m, grid, master_seed, idx):
    """Per-step randomness, shape (N, n) signs or (N, n, k) uniforms."""
    k = m.uniforms_per_step
    if k == 0:
        return rng.sign_bits(master_seed, idx, grid.n, rng.STREAM_MANIFOLD).astype(float)
    u = rng.uniforms32(master_seed, idx, grid.n * k, rng.STREAM_MANIFOLD)
    return u.reshape(idx.size, grid.n, k)


def manifold_walk_batch(m: Manifold, q1, grid, master_seed, indices):
    """Geodesic-step walks from q1, shape (N, n + 1, D)."""
    q1 = m.as_points(q1)
    idx = np.asarray(indices, dtype=np.uint64)
    L = step_length(m, grid)
    rand = _direction_randoms(m, grid, master_seed, idx)
    N, n, D = idx.size, grid.n, m.dimension
    if isinstance(m, EuclideanSpace) and D == 1:
        lattice = np.zeros((N, n + 1))
        np.cumsum(rand, axis=1, out=lattice[:, 1:])
        return (q1[0] + L * lattice)[..., None]
    if isinstance(m, Circle):
        lattice = np.zeros((N, n + 1))
        np.cumsum(rand, axis=1, out=lattice[:, 1:])
        return _wrap(q1[0] + (L / m.radius) * lattice)[..., None]
    if isinstance(m, Sphere2):
        return _sphere_walk(m, q1, rand, L)
    out = np.empty((N, n + 1, D))
    out[:, 0] = q1
    p = np.broadcast_to(q1, (N, D)).copy()
    from .errors import DomainExitError

    for k in range(n):
        r = rand[:, k]
        try:
            p = m.random_step(p, r, L)
        except DomainExitError as exc:
            exc.step_index = k
            raise DomainExitError(f"{exc} (step {k})", boundary_point=exc.boundary_point,
                                  step_index=k) from None
        out[:, k + 1] = p
    return out


def _sphere_steps(m, q1, rand, L, record):
    """Sphere walk carried out in the embedding R^3.

    Each step uses the (e_theta, e_phi) frame at the current point, written
    directly in terms of the embedded vector; the step angle is uniform, so
    the direction is uniform on the unit tangent circle.  Returns embedded
    points (N, n + 1, 3) when ``record`` is true, else endpoints (N, 3).
    """
    from .manifold import _sphere_frame

    N, n = rand.shape[0], rand.shape[1]
    x0, _, _ = _sphere_frame(q1[0], q1[1])
    psi = (2 * math.pi) * np.ascontiguousarray(rand[:, :, 0].T)
    sa = math.sin(L / m.radius)
    a_all, b_all = sa * np.cos(psi), sa * np.sin(psi)
    ca = math.cos(L / m.radius)
    x = np.full(N, x0[0])
    y = np.full(N, x0[1])
    z = np.full(N, x0[2])
    path = np.empty((N, n + 1, 3)) if record else None
    if record:
        path[:, 0] = x0
    for k in range(n):
        a, b = a_all[k], b_all[k]
        rho = np.sqrt(x * x + y * y)
        if np.any(rho < 1e-150):
            pole = rho < 1e-150
            safe = np.where(pole, 1.0, rho)
            cphi = np.where(pole, 1.0, x / safe)
            sphi = np.where(pole, 0.0, y / safe)
        else:
            cphi, sphi = x / rho, y / rho
        az = a * z
        nx = ca * x + az * cphi - b * sphi
        ny = ca * y + az * sphi + b * cphi
        nz = ca * z - a * rho
        inv = 1.0 / np.sqrt(nx * nx + ny * ny + nz * nz)
        x, y, z = nx * inv, ny * inv, nz * inv
        if record:
            path[:, k + 1, 0] = x
            path[:, k + 1, 1] = y
            path[:, k + 1, 2] = z
    if record:
        return path
    return np.stack([x, y, z], axis=-1)


def _sphere_walk(m, q1, rand, L):
    out = _sphere_coords(_sphere_steps(m, q1, rand, L, True))
    out[:, 0] = q1
    return out


def manifold_walk_endpoints(m: Manifold, q1, grid, master_seed, indices):
    """Endpoints (N, D) of geodesic-step walks; same values as the last path point."""
    q1 = m.as_points(q1)
    idx = np.asarray(indices, dtype=np.uint64)
    if isinstance(m, Sphere2):
        rand = _direction_randoms(m, grid, master_seed, idx)
        end = _sphere_coords(_sphere_steps(m, q1, rand, step_length(m, grid), False))
        if grid.n == 0:
            end[:] = q1
        return end
    return manifold_walk_batch(m, q1, grid, master_seed, idx)[:, -1]


def sample_manifold_walk(m: Manifold, q1, grid: HyperfiniteGrid, seed: rng.SeedSpec) -> WalkPath:
    """Walk with geodesic steps of length sqrt(D eps) in uniform random directions."""
    pts = manifold_walk_batch(m, q1, grid, seed.master_seed, [seed.sample_index])[0]
    return WalkPath(grid, m, pts, step_length(m, grid), seed)


# ---------------------------------------------------------------------------


def path_position(path: WalkPath, s):
    """Point at time s, interpolating geodesically within a slice."""
    grid = path.grid
    if not 0 <= s <= grid.t:
        raise DomainError(f"time {s} outside [0, {grid.t}]")
    times = grid.times
    k = int(np.searchsorted(times, s, side="right")) - 1
    k = min(max(k, 0), grid.n)
    if times[k] == s:
        return path.points[k].copy()
    frac = (s - times[k]) / grid.epsilon
    a, b = path.points[k], path.points[k + 1]
    return np.asarray(path.manifold.interpolate(a, b, frac), dtype=float)
