"""Synthetic source laws with known densities and supports.

Each generator samples deterministically from a seed, evaluates its density,
describes its support, and, when derivable, returns lower/upper density bounds
on balls of radius ``R`` and closed-form center-outward maps.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import spatial, stats

from . import _seeds
from .errors import InvalidArgument, Unsupported
from .monge_ampere import AnalyticPotential
from .ot import Dataset
from .reference import (
    ball_volume,
    sample_spherical_uniform,
    sphere_area,
    spherical_uniform_density,
    uniform_directions,
)
from .regions import Box

KINDS = ("uniform-ball", "uniform-box", "uniform-convex-polytope", "gaussian", "spherical-uniform", "mixture")


@dataclass(frozen=True)
class GeneratorSpec:
    kind: str
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": self.params}

    @classmethod
    def from_dict(cls, obj: dict) -> "GeneratorSpec":
        if not isinstance(obj, dict) or "kind" not in obj:
            raise InvalidArgument("generator spec needs a 'kind'")
        extra = set(obj) - {"kind", "params"}
        if extra:
            raise InvalidArgument(f"unknown generator keys: {sorted(extra)}")
        return cls(obj["kind"], dict(obj.get("params") or {}))


class Generator:
    dim: int
    compact: bool = True

    def _draw(self, n, rng) -> np.ndarray:
        raise NotImplementedError

    def sample(self, n: int, seed) -> Dataset:
        if int(n) != n or n < 1:
            raise InvalidArgument("n must be a positive integer")
        rng = _seeds.rng(seed)
        return Dataset(self._draw(int(n), rng), self.support_hint())

    def density(self, x) -> np.ndarray:
        raise NotImplementedError

    def contains(self, x) -> np.ndarray:
        raise NotImplementedError

    def support_hint(self):
        return "unbounded" if not self.compact else None

    def support_descriptor(self) -> dict:
        raise NotImplementedError

    def support_sample(self, m: int, rng) -> np.ndarray:
        if not self.compact:
            raise Unsupported("support is not compact")
        return self._draw(m, _seeds.rng(rng))

    def boundary_sample(self, m: int, rng) -> np.ndarray:
        raise Unsupported("no boundary sampler for this law")

    def density_bounds(self, R: float):
        """``(lam_R, Lam_R)`` with ``lam_R <= p <= Lam_R`` on the support inside ``R B_d``, or ``None``."""
        return None

    def analytic_potential(self) -> AnalyticPotential | None:
        return None


def _pts(x, d):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None] if d == 1 else x[None, :]
    return x


class UniformBall(Generator):
    def __init__(self, d=2, center=None, radius=1.0):
        self.dim = int(d)
        self.center = np.zeros(self.dim) if center is None else np.asarray(center, dtype=float)
        if self.center.shape != (self.dim,):
            raise InvalidArgument("center has the wrong dimension")
        if not radius > 0:
            raise InvalidArgument("radius must be positive")
        self.radius = float(radius)
        self.vol = ball_volume(self.dim) * self.radius**self.dim

    def _draw(self, n, rng):
        s = uniform_directions(n, self.dim, rng)
        return self.center + self.radius * rng.uniform(size=(n, 1)) ** (1 / self.dim) * s

    def contains(self, x):
        return np.linalg.norm(_pts(x, self.dim) - self.center, axis=1) <= self.radius

    def density(self, x):
        return np.where(self.contains(x), 1.0 / self.vol, 0.0)

    def support_descriptor(self):
        return {"kind": "ball", "center": self.center.tolist(), "radius": self.radius}

    def boundary_sample(self, m, rng):
        return self.center + self.radius * uniform_directions(m, self.dim, _seeds.rng(rng))

    def density_bounds(self, R):
        return 1.0 / self.vol, 1.0 / self.vol

    def analytic_potential(self):
        if np.any(self.center != 0):
            return None
        d, Rr = self.dim, self.radius
        return AnalyticPotential.radial(d, lambda r: np.clip(r / Rr, 0, 1) ** d, lambda s: Rr * s ** (1 / d), Rr, "uniform-ball")


class ConvexPolytope(Generator):
    """Uniform law on the convex hull of given vertices."""

    def __init__(self, vertices):
        v = np.asarray(vertices, dtype=float)
        if v.ndim != 2 or len(v) < v.shape[1] + 1:
            raise InvalidArgument("need at least d+1 vertices in R^d")
        self.dim = v.shape[1]
        if self.dim == 1:
            self.lo, self.hi = v.min(0), v.max(0)
            self.A = np.array([[-1.0], [1.0]])
            self.b = np.array([-self.lo[0], self.hi[0]])
            self.vol = float(self.hi[0] - self.lo[0])
            self.vertices = np.array([self.lo, self.hi])
            self._facets = None
        else:
            try:
                hull = spatial.ConvexHull(v)
            except spatial.QhullError as exc:
                raise InvalidArgument(f"degenerate polytope: {exc}") from exc
            self.A = hull.equations[:, :-1]
            self.b = -hull.equations[:, -1]
            self.vol = float(hull.volume)
            self.vertices = v[hull.vertices]
            self.lo, self.hi = v.min(0), v.max(0)
            self._facets = v[hull.simplices]
        if self.vol <= 0:
            raise InvalidArgument("polytope has zero volume")

    def _draw(self, n, rng):
        out = np.empty((0, self.dim))
        frac = max(self.vol / float(np.prod(self.hi - self.lo)), 1e-3)
        while len(out) < n:
            m = int(1.2 * (n - len(out)) / frac) + 16
            z = self.lo + (self.hi - self.lo) * rng.uniform(size=(m, self.dim))
            out = np.vstack([out, z[self.contains(z)]])
        return out[:n]

    def contains(self, x):
        x = _pts(x, self.dim)
        return np.all(x @ self.A.T <= self.b + 1e-12, axis=1)

    def density(self, x):
        return np.where(self.contains(x), 1.0 / self.vol, 0.0)

    def support_hint(self):
        return {"A": self.A.tolist(), "b": self.b.tolist()}

    def support_descriptor(self):
        return {"kind": "polytope", "A": self.A.tolist(), "b": self.b.tolist()}

    def boundary_sample(self, m, rng):
        rng = _seeds.rng(rng)
        if self.dim == 1:
            return self.vertices[rng.integers(2, size=m)]
        F = self._facets  # (k, d, d): simplices of the boundary
        edges = F[:, 1:, :] - F[:, :1, :]
        gram = np.einsum("kid,kjd->kij", edges, edges)
        area = np.sqrt(np.clip(np.linalg.det(gram), 0, None))
        which = rng.choice(len(F), size=m, p=area / area.sum())
        w = rng.dirichlet(np.ones(self.dim), size=m)
        return np.einsum("mi,mid->md", w, F[which])

    def density_bounds(self, R):
        return 1.0 / self.vol, 1.0 / self.vol


class UniformBox(ConvexPolytope):
    def __init__(self, lo, hi):
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        if lo.shape != hi.shape or np.any(hi <= lo):
            raise InvalidArgument("box needs lo < hi")
        corners = np.array(np.meshgrid(*[[a, b] for a, b in zip(lo, hi)], indexing="ij")).reshape(len(lo), -1).T
        super().__init__(corners)
        self.lo, self.hi = lo, hi

    def _draw(self, n, rng):
        return self.lo + (self.hi - self.lo) * rng.uniform(size=(n, self.dim))

    def support_descriptor(self):
        return {"kind": "box", "lo": self.lo.tolist(), "hi": self.hi.tolist()}


class Gaussian(Generator):
    compact = False

    def __init__(self, mean, cov):
        self.mean = np.atleast_1d(np.asarray(mean, dtype=float))
        self.dim = self.mean.shape[0]
        cov = np.asarray(cov, dtype=float)
        if cov.ndim == 0:
            cov = cov * np.eye(self.dim)
        if cov.shape != (self.dim, self.dim):
            raise InvalidArgument("covariance has the wrong shape")
        try:
            self.law = stats.multivariate_normal(self.mean, cov)
        except (ValueError, np.linalg.LinAlgError) as exc:
            raise InvalidArgument(f"covariance is not positive definite: {exc}") from exc
        self.cov = cov
        ev = np.linalg.eigvalsh(cov)
        if ev.min() <= 0:
            raise InvalidArgument("covariance is not positive definite")
        self._ev = ev

    def _draw(self, n, rng):
        L = np.linalg.cholesky(self.cov)
        return self.mean + rng.standard_normal((n, self.dim)) @ L.T

    def contains(self, x):
        return np.ones(len(_pts(x, self.dim)), dtype=bool)

    def density(self, x):
        return np.atleast_1d(self.law.pdf(_pts(x, self.dim)))

    def support_descriptor(self):
        return {"kind": "unbounded"}

    def density_bounds(self, R):
        # quadratic form q(x) = (x-m)' S^-1 (x-m) over |x| <= R, bounded via |x - m|
        m = float(np.linalg.norm(self.mean))
        far = (R + m) ** 2 / self._ev.min()
        near = max(0.0, m - R) ** 2 / self._ev.max()
        c = 1.0 / math.sqrt((2 * math.pi) ** self.dim * float(np.prod(self._ev)))
        return c * math.exp(-0.5 * far), c * math.exp(-0.5 * near)

    def analytic_potential(self):
        s2 = self._ev[0]
        if np.any(self.mean != 0) or not np.allclose(self.cov, s2 * np.eye(self.dim), rtol=0, atol=0):
            return None
        s = math.sqrt(s2)
        chi = stats.chi(self.dim)
        return AnalyticPotential.radial(
            self.dim, lambda r: chi.cdf(r / s), lambda q: s * chi.ppf(q), 40.0 * s, "spherical-gaussian"
        )


class SphericalUniform(Generator):
    def __init__(self, d=2):
        self.dim = int(d)

    def _draw(self, n, rng):
        return sample_spherical_uniform(n, self.dim, rng)

    def contains(self, x):
        return np.linalg.norm(_pts(x, self.dim), axis=1) < 1

    def density(self, x):
        return np.atleast_1d(spherical_uniform_density(_pts(x, self.dim)))

    def support_descriptor(self):
        return {"kind": "ball", "center": [0.0] * self.dim, "radius": 1.0}

    def boundary_sample(self, m, rng):
        return uniform_directions(m, self.dim, _seeds.rng(rng))

    def density_bounds(self, R):
        # the density 1/(a_d |x|^(d-1)) is unbounded near the origin when d > 1
        hi = math.inf if self.dim > 1 else 1.0 / sphere_area(1)
        return 1.0 / sphere_area(self.dim), hi

    def analytic_potential(self):
        return AnalyticPotential.identity(self.dim, Box(-np.ones(self.dim), np.ones(self.dim)))


class Mixture(Generator):
    def __init__(self, components, weights):
        if not components:
            raise InvalidArgument("mixture needs components")
        w = np.asarray(weights, dtype=float)
        if w.shape != (len(components),) or np.any(w < 0) or not np.isclose(w.sum(), 1.0):
            raise InvalidArgument("weights must be nonnegative and sum to 1")
        dims = {c.dim for c in components}
        if len(dims) != 1:
            raise InvalidArgument("components have different dimensions")
        self.components = components
        self.weights = w
        self.dim = dims.pop()
        self.compact = all(c.compact for c in components)

    def _draw(self, n, rng):
        which = rng.choice(len(self.components), size=n, p=self.weights)
        out = np.empty((n, self.dim))
        for k, comp in enumerate(self.components):
            sel = which == k
            if sel.any():
                out[sel] = comp._draw(int(sel.sum()), rng)
        return out

    def contains(self, x):
        return np.any([c.contains(x) for c in self.components], axis=0)

    def density(self, x):
        return sum(w * c.density(x) for w, c in zip(self.weights, self.components))

    def support_descriptor(self):
        return {"kind": "union", "parts": [c.support_descriptor() for c in self.components]}

    def boundary_sample(self, m, rng):
        """Boundary of the union: component boundary points with a nearby probe outside every component."""
        rng = _seeds.rng(rng)
        # axis and diagonal probe directions; a shared edge between two parts has all probes inside
        probes = np.vstack([np.eye(self.dim), -np.eye(self.dim),
                            np.array(list(itertools.product((-1.0, 1.0), repeat=self.dim)))])
        out = np.empty((0, self.dim))
        for _ in range(100):
            if len(out) >= m:
                break
            k = rng.choice(len(self.components), size=m)
            pts = np.vstack([self.components[i].boundary_sample(1, rng) for i in k])
            outside = np.zeros(len(pts), bool)
            for v in probes:
                outside |= ~self.contains(pts + 1e-7 * v)
            out = np.vstack([out, pts[outside]])
        return out[:m]


def l_shape() -> Mixture:
    """Uniform law on the L-shaped union of ``[0,2]x[0,1]`` and ``[0,1]x[1,2]``."""
    return Mixture([UniformBox([0, 0], [2, 1]), UniformBox([0, 1], [1, 2])], [2 / 3, 1 / 3])


def make_generator(spec: GeneratorSpec | dict, d: int | None = None) -> Generator:
    """Instantiate a generator from a spec; ``d`` fills in the dimension when the params omit it."""
    if isinstance(spec, dict):
        spec = GeneratorSpec.from_dict(spec)
    p = dict(spec.params)
    dim = int(p.pop("d", d or 2))
    try:
        if spec.kind == "uniform-ball":
            gen = UniformBall(dim, p.pop("center", None), p.pop("radius", 1.0))
        elif spec.kind == "uniform-box":
            gen = UniformBox(p.pop("lo", [0.0] * dim), p.pop("hi", [1.0] * dim))
        elif spec.kind == "uniform-convex-polytope":
            gen = ConvexPolytope(p.pop("vertices"))
        elif spec.kind == "gaussian":
            gen = Gaussian(p.pop("mean", [0.0] * dim), p.pop("cov", np.eye(dim).tolist()))
        elif spec.kind == "spherical-uniform":
            gen = SphericalUniform(dim)
        elif spec.kind == "mixture":
            if p.pop("shape", None) == "L":
                gen = l_shape()
            else:
                gen = Mixture([make_generator(c, dim) for c in p.pop("components")], p.pop("weights"))
        else:
            raise InvalidArgument(f"unknown generator kind {spec.kind!r}; expected one of {KINDS}")
    except KeyError as exc:
        raise InvalidArgument(f"missing generator parameter {exc}") from exc
    if p:
        raise InvalidArgument(f"unknown parameters for {spec.kind}: {sorted(p)}")
    return gen
