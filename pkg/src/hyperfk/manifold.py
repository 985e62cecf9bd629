"""Riemannian manifolds in fixed canonical charts.

Points are float arrays whose last axis holds the ``D`` chart coordinates;
all methods broadcast over leading axes.  Tangent directions are given in
chart components and are expected to have unit length in the metric.

Built-in charts:

* ``EuclideanLine`` / ``EuclideanSpace(D)``: cartesian coordinates.
* ``Circle(radius)``: angle in [0, 2*pi).
* ``Sphere2(radius)``: (colatitude, longitude); longitude is irrelevant at
  the poles.
* ``HyperbolicPlane(pseudo_radius)``: upper half plane (x, y), y > 0.
* ``Chart``: a box in R^D with a metric taken from :data:`METRIC_CATALOGUE`;
  geodesics are integrated numerically.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy import optimize
from scipy.special import gamma as gamma_fn

from .errors import DomainError, DomainExitError, NumericalError

TWO_PI = 2.0 * math.pi


class BallVolume(NamedTuple):
    """Riemannian volume of a geodesic ball."""

    value: float
    clamped: bool = False
    std_error: float = 0.0

    def __float__(self):
        return float(self.value)


def _wrap(angle):
    r = np.mod(angle, TWO_PI)
    # mod of a tiny negative angle rounds up to 2 pi itself
    return np.where(r >= TWO_PI, 0.0, r)


class Manifold:
    """Common interface of all manifolds."""

    kind = "abstract"
    #: value of R when it is the same at every point, else None
    constant_curvature = None
    injectivity_radius = math.inf
    total_volume = math.inf

    # -- coordinates ---------------------------------------------------
    def as_points(self, p):
        """Float array with trailing coordinate axis, reduced to the chart."""
        arr = np.asarray(p, dtype=float)
        if self.dimension == 1 and (arr.ndim == 0 or arr.shape[-1] != 1):
            arr = arr[..., None]
        if arr.shape[-1] != self.dimension:
            raise DomainError(f"expected {self.dimension} coordinates, got shape {arr.shape}")
        self.check_domain(arr)
        return self.canonical(arr)

    def canonical(self, p):
        return p

    def check_domain(self, p):
        if not np.all(np.isfinite(p)):
            raise DomainError("non-finite coordinates")

    # -- geometry ------------------------------------------------------
    def metric(self, p):
        raise NotImplementedError

    def metric_density(self, p):
        p = self.as_points(p)
        return np.sqrt(np.abs(np.linalg.det(self.metric(p))))

    def distance(self, p, q):
        raise NotImplementedError

    def exp(self, p, direction, length):
        return self.exp_with_velocity(p, direction, length)[0]

    def exp_with_velocity(self, p, direction, length):
        """Geodesic step; returns the end point and the transported unit velocity."""
        raise NotImplementedError

    def scalar_curvature(self, p):
        raise NotImplementedError

    def ball_volume(self, center, radius):
        raise NotImplementedError

    def interpolate(self, p, q, fraction):
        """Point at ``fraction`` of the shortest geodesic from p to q."""
        raise NotImplementedError

    def gnorm(self, p, v):
        g = self.metric(self.as_points(p))
        v = np.asarray(v, dtype=float)
        if self.dimension == 1 and (v.ndim == 0 or v.shape[-1] != 1):
            v = v[..., None]
        return np.sqrt(np.einsum("...i,...ij,...j->...", v, g, v))

    # -- random walk support --------------------------------------------
    #: number of 32-bit uniforms consumed per step; 0 means one sign bit
    uniforms_per_step = 0

    def random_step(self, p, rand, length):
        """Advance the points ``p`` by a geodesic step in a random direction.

        ``rand`` holds ±1 signs (shape ``(N,)``) when ``uniforms_per_step``
        is 0, otherwise uniforms of shape ``(N, uniforms_per_step)``.
        """
        raise NotImplementedError

    # -- serialization ---------------------------------------------------
    def to_dict(self):
        return {"kind": self.kind}

    def _normalize_direction(self, p, direction):
        v = np.asarray(direction, dtype=float)
        if self.dimension == 1 and (v.ndim == 0 or v.shape[-1] != 1):
            v = v[..., None]
        return v


@dataclass(frozen=True, eq=True)
class EuclideanSpace(Manifold):
    """Flat R^D."""

    dimension: int = 1
    kind = "euclidean"
    constant_curvature = 0.0

    def __post_init__(self):
        if int(self.dimension) < 1:
            raise DomainError("dimension must be >= 1")

    @property
    def uniforms_per_step(self):
        if self.dimension == 1:
            return 0
        if self.dimension == 2:
            return 1
        return 2 * ((self.dimension + 1) // 2)

    def metric(self, p):
        p = np.asarray(p, dtype=float)
        return np.broadcast_to(np.eye(self.dimension), p.shape[:-1] + (self.dimension,) * 2)

    def metric_density(self, p):
        p = self.as_points(p)
        return np.ones(p.shape[:-1])

    def distance(self, p, q):
        p, q = self.as_points(p), self.as_points(q)
        return np.linalg.norm(q - p, axis=-1)

    def exp_with_velocity(self, p, direction, length):
        p = self.as_points(p)
        v = self._normalize_direction(p, direction)
        length = np.asarray(length, dtype=float)[..., None]
        return p + length * v, np.broadcast_to(v, np.broadcast_shapes(p.shape, v.shape)).copy()

    def scalar_curvature(self, p):
        p = self.as_points(p)
        return np.zeros(p.shape[:-1])

    def ball_volume(self, center, radius):
        if radius <= 0:
            raise DomainError("radius must be positive")
        self.as_points(center)
        d = self.dimension
        return BallVolume(float(math.pi ** (d / 2) / gamma_fn(d / 2 + 1) * radius ** d))

    def interpolate(self, p, q, fraction):
        p, q = self.as_points(p), self.as_points(q)
        f = np.asarray(fraction, dtype=float)[..., None]
        return p + f * (q - p)

    def random_step(self, p, rand, length):
        if self.dimension == 1:
            return p + length * rand[:, None]
        if self.dimension == 2:
            psi = TWO_PI * rand[:, 0]
            return p + length * np.stack([np.cos(psi), np.sin(psi)], axis=-1)
        z = _box_muller(rand)[:, : self.dimension]
        z /= np.linalg.norm(z, axis=-1, keepdims=True)
        return p + length * z

    def to_dict(self):
        return {"kind": self.kind, "dimension": self.dimension}


@dataclass(frozen=True, eq=True)
class EuclideanLine(EuclideanSpace):
    """The real line with the euclidean metric."""

    dimension: int = 1
    kind = "line"

    def __post_init__(self):
        if self.dimension != 1:
            raise DomainError("EuclideanLine has dimension 1")

    def ball_volume(self, center, radius):
        if radius <= 0:
            raise DomainError("radius must be positive")
        self.as_points(center)
        return BallVolume(2.0 * radius)

    def to_dict(self):
        return {"kind": self.kind}


@dataclass(frozen=True, eq=True)
class Circle(Manifold):
    """Circle of the given radius, angle coordinate in [0, 2*pi)."""

    radius: float = 1.0
    kind = "circle"
    dimension = 1
    constant_curvature = 0.0
    uniforms_per_step = 0

    def __post_init__(self):
        if not self.radius > 0:
            raise DomainError("radius must be positive")

    @property
    def injectivity_radius(self):
        return math.pi * self.radius

    @property
    def total_volume(self):
        return TWO_PI * self.radius

    def canonical(self, p):
        return _wrap(p)

    def metric(self, p):
        p = np.asarray(p, dtype=float)
        return np.full(p.shape[:-1] + (1, 1), self.radius ** 2)

    def metric_density(self, p):
        p = self.as_points(p)
        return np.full(p.shape[:-1], float(self.radius))

    def _signed_arc(self, p, q):
        return np.mod(q - p + math.pi, TWO_PI) - math.pi

    def distance(self, p, q):
        p, q = self.as_points(p), self.as_points(q)
        return self.radius * np.abs(self._signed_arc(p, q))[..., 0]

    def exp_with_velocity(self, p, direction, length):
        p = self.as_points(p)
        v = self._normalize_direction(p, direction)
        length = np.asarray(length, dtype=float)[..., None]
        out = _wrap(p + length * v)
        return out, np.broadcast_to(v, out.shape).copy()

    def scalar_curvature(self, p):
        p = self.as_points(p)
        return np.zeros(p.shape[:-1])

    def ball_volume(self, center, radius):
        if radius <= 0:
            raise DomainError("radius must be positive")
        self.as_points(center)
        if radius >= self.injectivity_radius:
            return BallVolume(self.total_volume, clamped=radius > self.injectivity_radius)
        return BallVolume(2.0 * radius)

    def interpolate(self, p, q, fraction):
        p, q = self.as_points(p), self.as_points(q)
        f = np.asarray(fraction, dtype=float)[..., None]
        return _wrap(p + f * self._signed_arc(p, q))

    def random_step(self, p, rand, length):
        return _wrap(p + (length / self.radius) * rand[:, None])

    def to_dict(self):
        return {"kind": self.kind, "radius": self.radius}


def _sphere_frame(theta, phi):
    st, ct = np.sin(theta), np.cos(theta)
    sp, cp = np.sin(phi), np.cos(phi)
    x = np.stack([st * cp, st * sp, ct], axis=-1)
    e_theta = np.stack([ct * cp, ct * sp, -st], axis=-1)
    e_phi = np.stack([-sp, cp, np.zeros_like(sp)], axis=-1)
    return x, e_theta, e_phi


def _sphere_coords(x):
    theta = np.arctan2(np.hypot(x[..., 0], x[..., 1]), x[..., 2])
    phi = _wrap(np.arctan2(x[..., 1], x[..., 0]))
    return np.stack([theta, phi], axis=-1)


@dataclass(frozen=True, eq=True)
class Sphere2(Manifold):
    """Round 2-sphere in (colatitude, longitude) coordinates."""

    radius: float = 1.0
    kind = "sphere2"
    dimension = 2
    uniforms_per_step = 1

    def __post_init__(self):
        if not self.radius > 0:
            raise DomainError("radius must be positive")

    @property
    def injectivity_radius(self):
        return math.pi * self.radius

    @property
    def total_volume(self):
        return 2.0 * TWO_PI * self.radius ** 2

    @property
    def constant_curvature(self):
        return 2.0 / self.radius ** 2

    def check_domain(self, p):
        super().check_domain(p)
        theta = p[..., 0]
        if np.any(theta < -1e-12) or np.any(theta > math.pi + 1e-12):
            raise DomainError("colatitude must lie in [0, pi]")

    def canonical(self, p):
        out = np.array(p, dtype=float, copy=True)
        out[..., 0] = np.clip(out[..., 0], 0.0, math.pi)
        out[..., 1] = _wrap(out[..., 1])
        return out

    def embed(self, p):
        """Unit vectors in R^3 for the given points."""
        p = self.as_points(p)
        return _sphere_frame(p[..., 0], p[..., 1])[0]

    def metric(self, p):
        p = np.asarray(p, dtype=float)
        g = np.zeros(p.shape[:-1] + (2, 2))
        g[..., 0, 0] = self.radius ** 2
        g[..., 1, 1] = (self.radius * np.sin(p[..., 0])) ** 2
        return g

    def metric_density(self, p):
        p = self.as_points(p)
        return self.radius ** 2 * np.sin(p[..., 0])

    def distance(self, p, q):
        x, y = self.embed(p), self.embed(q)
        cross = np.linalg.norm(np.cross(x, y), axis=-1)
        return self.radius * np.arctan2(cross, np.sum(x * y, axis=-1))

    def exp_with_velocity(self, p, direction, length):
        p = self.as_points(p)
        v = self._normalize_direction(p, direction)
        x, et, ep = _sphere_frame(p[..., 0], p[..., 1])
        r = self.radius
        a = r * v[..., 0:1]
        b = r * np.sin(p[..., 0:1]) * v[..., 1:2]
        tangent = a * et + b * ep
        ang = np.asarray(length, dtype=float)[..., None] / r
        x_new = np.cos(ang) * x + np.sin(ang) * tangent
        t_new = -np.sin(ang) * x + np.cos(ang) * tangent
        q = _sphere_coords(x_new)
        _, et2, ep2 = _sphere_frame(q[..., 0], q[..., 1])
        st = np.sin(q[..., 0])
        with np.errstate(divide="ignore", invalid="ignore"):
            dphi = np.where(st > 0, np.sum(t_new * ep2, axis=-1) / (r * st), 0.0)
        vel = np.stack([np.sum(t_new * et2, axis=-1) / r, dphi], axis=-1)
        return q, vel

    def scalar_curvature(self, p):
        p = self.as_points(p)
        return np.full(p.shape[:-1], 2.0 / self.radius ** 2)

    def ball_volume(self, center, radius):
        if radius <= 0:
            raise DomainError("radius must be positive")
        self.as_points(center)
        rho = min(radius, self.injectivity_radius)
        value = TWO_PI * self.radius ** 2 * (1.0 - math.cos(rho / self.radius))
        return BallVolume(value, clamped=radius > self.injectivity_radius)

    def interpolate(self, p, q, fraction):
        x, y = self.embed(p), self.embed(q)
        f = np.asarray(fraction, dtype=float)[..., None]
        omega = np.arctan2(np.linalg.norm(np.cross(x, y), axis=-1), np.sum(x * y, axis=-1))[..., None]
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.sin(omega)
            z = np.where(s > 1e-300, (np.sin((1 - f) * omega) * x + np.sin(f * omega) * y) / s, x)
        return _sphere_coords(z)

    def random_step(self, p, rand, length):
        x, et, ep = _sphere_frame(p[:, 0], p[:, 1])
        psi = TWO_PI * rand[:, 0:1]
        ang = length / self.radius
        x_new = math.cos(ang) * x + math.sin(ang) * (np.cos(psi) * et + np.sin(psi) * ep)
        return _sphere_coords(x_new)

    def to_dict(self):
        return {"kind": self.kind, "radius": self.radius}


def _hyperboloid(p):
    x, y = p[..., 0], p[..., 1]
    s = x * x + y * y
    return np.stack([(s + 1) / (2 * y), x / y, (s - 1) / (2 * y)], axis=-1)


def _hyperboloid_jacobian(p):
    """d(X0, X1, X2)/d(x, y), shape (..., 3, 2)."""
    x, y = p[..., 0], p[..., 1]
    y2 = y * y
    jx = np.stack([x / y, 1 / y, x / y], axis=-1)
    jy = np.stack([(y2 - x * x - 1) / (2 * y2), -x / y2, (y2 - x * x + 1) / (2 * y2)], axis=-1)
    return np.stack([jx, jy], axis=-1)


def _from_hyperboloid(X):
    y = 1.0 / (X[..., 0] - X[..., 2])
    return np.stack([X[..., 1] * y, y], axis=-1)


def _minkowski(a, b):
    return -a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1] + a[..., 2] * b[..., 2]


@dataclass(frozen=True, eq=True)
class HyperbolicPlane(Manifold):
    """Upper half plane with metric a^2 (dx^2 + dy^2) / y^2."""

    pseudo_radius: float = 1.0
    kind = "hyperbolic"
    dimension = 2
    uniforms_per_step = 1

    def __post_init__(self):
        if not self.pseudo_radius > 0:
            raise DomainError("pseudo_radius must be positive")

    @property
    def constant_curvature(self):
        return -2.0 / self.pseudo_radius ** 2

    def check_domain(self, p):
        super().check_domain(p)
        if np.any(p[..., 1] <= 0):
            raise DomainError("upper half plane requires y > 0")

    def metric(self, p):
        p = np.asarray(p, dtype=float)
        s = (self.pseudo_radius / p[..., 1]) ** 2
        return s[..., None, None] * np.eye(2)

    def metric_density(self, p):
        p = self.as_points(p)
        return (self.pseudo_radius / p[..., 1]) ** 2

    def distance(self, p, q):
        p, q = self.as_points(p), self.as_points(q)
        chord = np.linalg.norm(q - p, axis=-1)
        return 2 * self.pseudo_radius * np.arcsinh(chord / (2 * np.sqrt(p[..., 1] * q[..., 1])))

    def exp_with_velocity(self, p, direction, length):
        p = self.as_points(p)
        v = self._normalize_direction(p, direction)
        a = self.pseudo_radius
        X = _hyperboloid(p)
        T = a * np.einsum("...ij,...j->...i", _hyperboloid_jacobian(p), v)
        s = np.asarray(length, dtype=float)[..., None] / a
        X_new = np.cosh(s) * X + np.sinh(s) * T
        T_new = np.sinh(s) * X + np.cosh(s) * T
        q = _from_hyperboloid(X_new)
        y = q[..., 1]
        dy = -y * y * (T_new[..., 0] - T_new[..., 2])
        dx = T_new[..., 1] * y + X_new[..., 1] * dy
        return q, np.stack([dx, dy], axis=-1) / a

    def scalar_curvature(self, p):
        p = self.as_points(p)
        return np.full(p.shape[:-1], -2.0 / self.pseudo_radius ** 2)

    def ball_volume(self, center, radius):
        if radius <= 0:
            raise DomainError("radius must be positive")
        self.as_points(center)
        a = self.pseudo_radius
        return BallVolume(TWO_PI * a * a * (math.cosh(radius / a) - 1.0))

    def interpolate(self, p, q, fraction):
        p, q = self.as_points(p), self.as_points(q)
        X1, X2 = _hyperboloid(p), _hyperboloid(q)
        d = (self.distance(p, q) / self.pseudo_radius)[..., None]
        f = np.asarray(fraction, dtype=float)[..., None]
        with np.errstate(divide="ignore", invalid="ignore"):
            sd = np.sinh(d)
            X = np.where(sd > 1e-300, (np.sinh((1 - f) * d) * X1 + np.sinh(f * d) * X2) / sd, X1)
        return _from_hyperboloid(X)

    def random_step(self, p, rand, length):
        X = _hyperboloid(p)
        J = _hyperboloid_jacobian(p)
        y = p[:, 1:2]
        e1 = y * J[..., 0]
        e2 = y * J[..., 1]
        psi = TWO_PI * rand[:, 0:1]
        T = np.cos(psi) * e1 + np.sin(psi) * e2
        s = length / self.pseudo_radius
        return _from_hyperboloid(math.cosh(s) * X + math.sinh(s) * T)

    def to_dict(self):
        return {"kind": self.kind, "pseudo_radius": self.pseudo_radius}


# ---------------------------------------------------------------------------
# chart manifolds


def _euclidean_metric(dimension):
    def g(p):
        return np.broadcast_to(np.eye(dimension), p.shape[:-1] + (dimension, dimension))
    return g


def _round_sphere_metric(radius=1.0):
    def g(p):
        out = np.zeros(p.shape[:-1] + (2, 2))
        out[..., 0, 0] = radius ** 2
        out[..., 1, 1] = (radius * np.sin(p[..., 0])) ** 2
        return out
    return g


def _half_plane_metric(pseudo_radius=1.0):
    def g(p):
        s = (pseudo_radius / p[..., 1]) ** 2
        return s[..., None, None] * np.eye(2)
    return g


def _gaussian_bump_metric(dimension, amplitude=0.5, width=1.0):
    """Conformally flat metric exp(2 a exp(-|x|^2 / 2 w^2)) delta."""
    def g(p):
        sigma = amplitude * np.exp(-np.sum(p * p, axis=-1) / (2 * width ** 2))
        return np.exp(2 * sigma)[..., None, None] * np.eye(dimension)
    return g


#: name -> (factory(dimension, **params) -> metric function, fixed dimension or None)
METRIC_CATALOGUE: dict[str, tuple[Callable, int | None]] = {
    "euclidean": (lambda dimension: _euclidean_metric(dimension), None),
    "round_sphere": (lambda dimension, radius=1.0: _round_sphere_metric(radius), 2),
    "half_plane": (lambda dimension, pseudo_radius=1.0: _half_plane_metric(pseudo_radius), 2),
    "gaussian_bump": (lambda dimension, amplitude=0.5, width=1.0:
                      _gaussian_bump_metric(dimension, amplitude, width), None),
}


@dataclass(frozen=True, eq=False)
class Chart(Manifold):
    """A coordinate box in R^D carrying a catalogued metric.

    Geodesics are integrated with RK4 using finite-difference Christoffel
    symbols; distances are found by shooting on the initial velocity.
    """

    dimension: int
    metric_name: str
    domain_box: tuple
    params: dict = field(default_factory=dict)
    kind = "chart"
    _g: Callable = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.metric_name not in METRIC_CATALOGUE:
            raise DomainError(f"unknown metric {self.metric_name!r}; "
                              f"choose from {sorted(METRIC_CATALOGUE)}")
        factory, fixed_dim = METRIC_CATALOGUE[self.metric_name]
        if fixed_dim is not None and fixed_dim != self.dimension:
            raise DomainError(f"metric {self.metric_name!r} needs dimension {fixed_dim}")
        if self.dimension < 1:
            raise DomainError("dimension must be >= 1")
        box = np.asarray(self.domain_box, dtype=float)
        if box.shape != (self.dimension, 2) or not np.all(box[:, 1] > box[:, 0]):
            raise DomainError("domain_box must be D pairs (lo, hi) with lo < hi")
        if not np.all(np.isfinite(box)):
            raise DomainError("domain_box must be finite")
        object.__setattr__(self, "domain_box", tuple(map(tuple, box.tolist())))
        object.__setattr__(self, "_g", factory(self.dimension, **self.params))
        self._validate_metric(box)

    def _validate_metric(self, box, n_samples=64):
        rng = np.random.default_rng(20240601)
        pts = box[:, 0] + rng.random((n_samples, self.dimension)) * (box[:, 1] - box[:, 0])
        g = np.asarray(self._g(pts))
        if not np.allclose(g, np.swapaxes(g, -1, -2), rtol=1e-12, atol=1e-14):
            raise DomainError("metric is not symmetric on the domain box")
        if not np.all(np.linalg.eigvalsh(g) > 0):
            raise DomainError("metric is not positive definite on the domain box")

    @property
    def _box(self):
        return np.asarray(self.domain_box)

    @property
    def scale(self):
        b = self._box
        return float(np.mean(b[:, 1] - b[:, 0]))

    @property
    def uniforms_per_step(self):
        return 0 if self.dimension == 1 else 2 * ((self.dimension + 1) // 2)

    def inside(self, p):
        b = self._box
        return np.all((p >= b[:, 0]) & (p <= b[:, 1]), axis=-1)

    def check_domain(self, p):
        super().check_domain(p)
        if not np.all(self.inside(p)):
            raise DomainError(f"point outside chart domain {self.domain_box}")

    def metric(self, p):
        return np.asarray(self._g(np.asarray(p, dtype=float)))

    # -- differential geometry by finite differences --------------------------
    def _metric_derivatives(self, p, h):
        """dg[..., l, i, j] = d g_ij / d x^l by central differences."""
        D = self.dimension
        out = np.empty(p.shape[:-1] + (D, D, D))
        for l in range(D):
            e = np.zeros(D)
            e[l] = h
            out[..., l, :, :] = (self.metric(p + e) - self.metric(p - e)) / (2 * h)
        return out

    def christoffel(self, p, h=None):
        """Gamma[..., k, i, j] of the Levi-Civita connection."""
        h = 1e-5 * self.scale if h is None else h
        dg = self._metric_derivatives(p, h)
        ginv = np.linalg.inv(self.metric(p))
        # lower[..., l, i, j] = d_i g_jl + d_j g_il - d_l g_ij
        lower = np.einsum("...ijl->...lij", dg) + np.einsum("...jil->...lij", dg) - dg
        return 0.5 * np.einsum("...kl,...lij->...kij", ginv, lower)

    def _geodesic_rhs(self, x, v):
        gam = self.christoffel(x)
        return v, -np.einsum("...kij,...i,...j->...k", gam, v, v)

    def _flow(self, p, v, length, n_sub=None, check=True):
        """RK4 integration of the geodesic equation for parameter ``length``."""
        length = float(length)
        if n_sub is None:
            n_sub = max(10, int(math.ceil(abs(length) / (0.05 * self.scale))))
        h = length / n_sub
        x, u = np.array(p, dtype=float), np.array(v, dtype=float)
        for _ in range(n_sub):
            k1x, k1v = self._geodesic_rhs(x, u)
            k2x, k2v = self._geodesic_rhs(x + 0.5 * h * k1x, u + 0.5 * h * k1v)
            k3x, k3v = self._geodesic_rhs(x + 0.5 * h * k2x, u + 0.5 * h * k2v)
            k4x, k4v = self._geodesic_rhs(x + h * k3x, u + h * k3v)
            x_new = x + (h / 6) * (k1x + 2 * k2x + 2 * k3x + k4x)
            u = u + (h / 6) * (k1v + 2 * k2v + 2 * k3v + k4v)
            if check and not np.all(self.inside(x_new)):
                bad = np.argwhere(~np.atleast_1d(self.inside(x_new))).ravel()
                exit_point = np.atleast_2d(x)[bad[0]] if x.ndim > 1 else x
                raise DomainExitError(
                    f"geodesic left the chart domain near {exit_point.tolist()}",
                    boundary_point=np.clip(np.atleast_2d(x_new)[bad[0]] if x.ndim > 1 else x_new,
                                           self._box[:, 0], self._box[:, 1]),
                )
            x = x_new
        return x, u

    def metric_density(self, p):
        p = self.as_points(p)
        return np.sqrt(np.linalg.det(self.metric(p)))

    def exp_with_velocity(self, p, direction, length):
        p = self.as_points(p)
        v = self._normalize_direction(p, direction)
        p, v = np.broadcast_arrays(p, v)
        length = float(length)
        if length < 0:
            raise DomainError("length must be nonnegative")
        if length == 0:
            return p.copy(), v.copy()
        return self._flow(p, v, length)

    def log(self, p, q, tol=1e-10):
        """Initial velocity w with exp_p(w) = q after unit parameter time."""
        p, q = self.as_points(p), self.as_points(q)
        if np.allclose(p, q, rtol=0, atol=1e-15):
            return np.zeros_like(p)
        n_sub = 40

        def residual(w):
            return self._flow(p, w, 1.0, n_sub=n_sub, check=False)[0] - q

        sol = optimize.root(residual, q - p, method="hybr", tol=1e-13)
        err = float(np.max(np.abs(residual(sol.x))))
        if not sol.success and err > tol:
            raise NumericalError("geodesic shooting did not converge",
                                 {"residual": err, "message": sol.message, "nfev": sol.nfev})
        if err > 1e-8 * max(1.0, float(np.max(np.abs(q)))):
            raise NumericalError("geodesic shooting residual too large",
                                 {"residual": err, "message": sol.message, "nfev": sol.nfev})
        return sol.x

    def distance(self, p, q):
        p, q = self.as_points(p), self.as_points(q)
        shape = np.broadcast_shapes(p.shape, q.shape)[:-1]
        pp = np.broadcast_to(p, shape + (self.dimension,)).reshape(-1, self.dimension)
        qq = np.broadcast_to(q, shape + (self.dimension,)).reshape(-1, self.dimension)
        out = np.empty(len(pp))
        for i, (a, b) in enumerate(zip(pp, qq)):
            w = self.log(a, b)
            out[i] = float(self.gnorm(a, w))
        return out.reshape(shape)

    def interpolate(self, p, q, fraction):
        p, q = self.as_points(p), self.as_points(q)
        w = self.log(p, q)
        f = float(fraction)
        if f == 0:
            return p
        return self._flow(p, f * w, 1.0, n_sub=40)[0]

    def scalar_curvature(self, p, h=None):
        p = self.as_points(p)
        D = self.dimension
        h = 1e-4 * self.scale if h is None else h
        b = self._box
        if np.any(p - 2 * h < b[:, 0]) or np.any(p + 2 * h > b[:, 1]):
            raise NumericalError("finite-difference stencil leaves the chart domain",
                                 {"point": p.tolist(), "step": h})
        gam = self.christoffel(p, h)
        dgam = np.empty(p.shape[:-1] + (D, D, D, D))  # [..., m, k, i, j] = d_m Gamma^k_ij
        for m in range(D):
            e = np.zeros(D)
            e[m] = h
            dgam[..., m, :, :, :] = (self.christoffel(p + e, h) - self.christoffel(p - e, h)) / (2 * h)
        # Ricci_{sn} = d_r G^r_{ns} - d_n G^r_{rs} + G^r_{rl} G^l_{ns} - G^r_{nl} G^l_{rs}
        ricci = (np.einsum("...rrns->...sn", dgam)
                 - np.einsum("...nrrs->...sn", dgam)
                 + np.einsum("...rrl,...lns->...sn", gam, gam)
                 - np.einsum("...rnl,...lrs->...sn", gam, gam))
        ginv = np.linalg.inv(self.metric(p))
        return np.einsum("...sn,...sn->...", ginv, ricci)

    def ball_volume(self, center, radius, n_radial=24, n_angular=64):
        """Volume by quadrature in geodesic polar coordinates (D <= 3)."""
        if radius <= 0:
            raise DomainError("radius must be positive")
        p = self.as_points(center)
        D = self.dimension
        if D == 1:
            # a geodesic ball in one dimension is an arc of length 2 * radius
            for sign in (1.0, -1.0):
                v = sign / float(self.gnorm(p, [1.0]))
                self._flow(p, np.array([v]), radius)
            return BallVolume(2.0 * radius)
        if D > 3:
            raise NotImplementedError("chart ball volume is implemented for D <= 3")
        L = np.linalg.cholesky(self.metric(p))
        Linv_T = np.linalg.inv(L).T
        s_nodes, s_w = np.polynomial.legendre.leggauss(n_radial)
        s = 0.5 * radius * (s_nodes + 1)
        s_w = 0.5 * radius * s_w
        if D == 2:
            psi = TWO_PI * np.arange(n_angular) / n_angular
            ang_w = np.full(n_angular, TWO_PI / n_angular)

            def dirs(a):
                return np.stack([np.cos(a[:, 0]), np.sin(a[:, 0])], axis=-1)
            angles = psi[:, None]
        else:
            c_nodes, c_w = np.polynomial.legendre.leggauss(n_angular // 2)
            beta = TWO_PI * np.arange(n_angular) / n_angular
            C, B = np.meshgrid(c_nodes, beta, indexing="ij")
            angles = np.stack([C.ravel(), B.ravel()], axis=-1)
            ang_w = np.outer(c_w, np.full(n_angular, TWO_PI / n_angular)).ravel()

            def dirs(a):
                c, be = a[:, 0], a[:, 1]
                sn = np.sqrt(1 - c * c)
                return np.stack([sn * np.cos(be), sn * np.sin(be), c], axis=-1)
        delta = 1e-5

        def endpoints(a, s_val):
            v = dirs(a) @ Linv_T.T
            x = np.broadcast_to(p, v.shape)
            return self._flow(x, v * s_val, 1.0, n_sub=max(10, int(math.ceil(s_val / (0.05 * self.scale)))))

        total = 0.0
        for si, wi in zip(s, s_w):
            x, vel = endpoints(angles, si)
            cols = [vel / si]
            for j in range(D - 1):
                e = np.zeros(D - 1)
                e[j] = delta
                xp, _ = endpoints(angles + e, si)
                xm, _ = endpoints(angles - e, si)
                cols.append((xp - xm) / (2 * delta))
            jac = np.stack(cols, axis=-1)
            dens = np.sqrt(np.linalg.det(self.metric(x)))
            total += wi * float(np.sum(ang_w * dens * np.abs(np.linalg.det(jac))))
        return BallVolume(float(total))

    def random_step(self, p, rand, length):
        g = self.metric(p)
        if self.dimension == 1:
            v = rand[:, None] / np.sqrt(g[..., 0])
        else:
            z = _box_muller(rand)[:, : self.dimension]
            z /= np.linalg.norm(z, axis=-1, keepdims=True)
            L = np.linalg.cholesky(g)
            v = np.linalg.solve(np.swapaxes(L, -1, -2), z[..., None])[..., 0]
        return self._flow(p, v, length)[0]

    def to_dict(self):
        return {"kind": self.kind, "dimension": self.dimension, "metric": self.metric_name,
                "params": dict(self.params), "domain_box": [list(b) for b in self.domain_box]}

    def __eq__(self, other):
        return isinstance(other, Chart) and self.to_dict() == other.to_dict()

    def __hash__(self):
        return hash(json.dumps(self.to_dict(), sort_keys=True))


def _box_muller(u):
    """Standard normals from pairs of uniforms, shape (N, 2k) -> (N, 2k)."""
    u1 = 1.0 - u[:, 0::2]
    u2 = u[:, 1::2]
    rad = np.sqrt(-2.0 * np.log(u1))
    out = np.empty_like(u)
    out[:, 0::2] = rad * np.cos(TWO_PI * u2)
    out[:, 1::2] = rad * np.sin(TWO_PI * u2)
    return out


# ---------------------------------------------------------------------------
# functional surface


def _scalar(x):
    x = np.asarray(x)
    return float(x) if x.ndim == 0 else x


def metric_density(m, p):
    """sqrt|det g| at p."""
    return _scalar(m.metric_density(p))


def geodesic_distance(m, p, q):
    return _scalar(m.distance(p, q))


def geodesic_step(m, p, direction, length):
    """Exponential map: move ``length`` along the geodesic with unit initial direction."""
    if np.any(np.asarray(length) < 0):
        raise DomainError("length must be nonnegative")
    return m.exp(p, direction, length)


def scalar_curvature(m, p):
    return _scalar(m.scalar_curvature(p))


def ball_volume(m, center, radius):
    return m.ball_volume(center, radius)


def from_spec(spec):
    """Build a manifold from a JSON object, JSON text or short name.

    Short names: ``line``, ``circle[:r]``, ``sphere2[:r]``, ``hyperbolic[:a]``,
    ``euclidean:D``.
    """
    if isinstance(spec, Manifold):
        return spec
    if isinstance(spec, str):
        text = spec.strip()
        if text.startswith("{"):
            spec = json.loads(text)
        else:
            name, _, arg = text.partition(":")
            spec = {"kind": name}
            if arg:
                key = {"circle": "radius", "sphere2": "radius", "hyperbolic": "pseudo_radius",
                       "euclidean": "dimension"}.get(name)
                if key is None:
                    raise DomainError(f"manifold {name!r} takes no parameter")
                spec[key] = int(arg) if key == "dimension" else float(arg)
    spec = dict(spec)
    kind = spec.pop("kind", None)
    if kind == "line":
        return EuclideanLine()
    if kind == "euclidean":
        return EuclideanSpace(int(spec.get("dimension", 1)))
    if kind == "circle":
        return Circle(float(spec.get("radius", 1.0)))
    if kind == "sphere2":
        return Sphere2(float(spec.get("radius", 1.0)))
    if kind == "hyperbolic":
        return HyperbolicPlane(float(spec.get("pseudo_radius", spec.get("radius", 1.0))))
    if kind == "chart":
        return Chart(int(spec["dimension"]), spec["metric"], tuple(map(tuple, spec["domain_box"])),
                     dict(spec.get("params", {})))
    raise DomainError(f"unknown manifold kind {kind!r}")
