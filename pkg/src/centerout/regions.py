"""Simple Euclidean regions with membership, volume and uniform sampling."""

from __future__ import annotations

import numpy as np

from .errors import InvalidArgument, Unsupported
from .reference import ball_volume, uniform_directions


def _pts(x, d):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None] if d == 1 else x[None, :]
    if x.shape[1] != d:
        raise InvalidArgument(f"expected points of dimension {d}, got {x.shape[1]}")
    return x


class Region:
    dim: int

    def contains(self, x) -> np.ndarray:
        raise NotImplementedError

    @property
    def volume(self) -> float:
        raise NotImplementedError

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def origin_distance(self) -> float:
        """Distance from the origin to the region."""
        raise NotImplementedError

    def inner_distance(self, x) -> np.ndarray:
        """Distance from points inside the region to its complement."""
        raise NotImplementedError

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


class Ball(Region):
    def __init__(self, center, radius: float):
        self.center = np.atleast_1d(np.asarray(center, dtype=float))
        self.dim = self.center.shape[0]
        if not radius > 0:
            raise InvalidArgument("ball radius must be positive")
        self.radius = float(radius)

    def contains(self, x):
        return np.linalg.norm(_pts(x, self.dim) - self.center, axis=1) < self.radius

    @property
    def volume(self):
        return ball_volume(self.dim) * self.radius**self.dim

    def sample(self, n, rng):
        s = uniform_directions(n, self.dim, rng)
        r = self.radius * rng.uniform(size=(n, 1)) ** (1.0 / self.dim)
        return self.center + r * s

    def origin_distance(self):
        return max(0.0, float(np.linalg.norm(self.center)) - self.radius)

    def inner_distance(self, x):
        return self.radius - np.linalg.norm(_pts(x, self.dim) - self.center, axis=1)

    def bounds(self):
        return self.center - self.radius, self.center + self.radius

    def to_dict(self):
        return {"kind": "ball", "center": self.center.tolist(), "radius": self.radius}


class Annulus(Region):
    """``r_in < |x - center| < r_out``; ``r_in = 0`` gives a ball."""

    def __init__(self, r_in: float, r_out: float, dim: int = 2, center=None):
        if not 0 <= r_in < r_out:
            raise InvalidArgument("annulus needs 0 <= r_in < r_out")
        self.dim = int(dim)
        self.r_in = float(r_in)
        self.r_out = float(r_out)
        self.center = np.zeros(self.dim) if center is None else np.atleast_1d(np.asarray(center, dtype=float))

    def _r(self, x):
        return np.linalg.norm(_pts(x, self.dim) - self.center, axis=1)

    def contains(self, x):
        r = self._r(x)
        return (r > self.r_in) & (r < self.r_out)

    @property
    def volume(self):
        return ball_volume(self.dim) * (self.r_out**self.dim - self.r_in**self.dim)

    def sample(self, n, rng):
        d = self.dim
        s = uniform_directions(n, d, rng)
        t = rng.uniform(size=(n, 1))
        r = (self.r_in**d + t * (self.r_out**d - self.r_in**d)) ** (1.0 / d)
        return self.center + r * s

    def origin_distance(self):
        c = float(np.linalg.norm(self.center))
        if c <= self.r_in:
            return self.r_in - c
        return max(0.0, c - self.r_out)

    def inner_distance(self, x):
        r = self._r(x)
        return np.minimum(r - self.r_in, self.r_out - r)

    def bounds(self):
        return self.center - self.r_out, self.center + self.r_out

    def to_dict(self):
        return {"kind": "annulus", "center": self.center.tolist(), "r_in": self.r_in, "r_out": self.r_out}


class Box(Region):
    def __init__(self, lo, hi):
        self.lo = np.atleast_1d(np.asarray(lo, dtype=float))
        self.hi = np.atleast_1d(np.asarray(hi, dtype=float))
        if self.lo.shape != self.hi.shape or np.any(self.hi <= self.lo):
            raise InvalidArgument("box needs lo < hi coordinatewise")
        self.dim = self.lo.shape[0]

    def contains(self, x):
        x = _pts(x, self.dim)
        return np.all((x > self.lo) & (x < self.hi), axis=1)

    @property
    def volume(self):
        return float(np.prod(self.hi - self.lo))

    def sample(self, n, rng):
        return self.lo + (self.hi - self.lo) * rng.uniform(size=(n, self.dim))

    def origin_distance(self):
        return float(np.linalg.norm(np.clip(0.0, self.lo, self.hi)))

    def inner_distance(self, x):
        x = _pts(x, self.dim)
        return np.minimum(x - self.lo, self.hi - x).min(axis=1)

    def bounds(self):
        return self.lo.copy(), self.hi.copy()

    def to_dict(self):
        return {"kind": "box", "lo": self.lo.tolist(), "hi": self.hi.tolist()}


class PointSet(Region):
    """Union of balls of common radius around finitely many points (radius 0: the points)."""

    def __init__(self, points, radius: float = 0.0):
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if len(pts) == 0:
            raise InvalidArgument("point set is empty")
        self.points = pts
        self.dim = pts.shape[1]
        self.radius = float(radius)
        if self.radius < 0:
            raise InvalidArgument("radius must be nonnegative")
        if self.radius > 0 and len(pts) > 1:
            diff = pts[:, None, :] - pts[None, :, :]
            dist = np.linalg.norm(diff, axis=-1)
            np.fill_diagonal(dist, np.inf)
            if dist.min() < 2 * self.radius:
                raise Unsupported("overlapping balls: volume and uniform sampling are not available")

    def contains(self, x):
        x = _pts(x, self.dim)
        if self.radius == 0:
            return (x[:, None, :] == self.points[None, :, :]).all(-1).any(1)
        return (np.linalg.norm(x[:, None, :] - self.points[None], axis=-1) < self.radius).any(1)

    @property
    def volume(self):
        return len(self.points) * ball_volume(self.dim) * self.radius**self.dim

    def sample(self, n, rng):
        if self.radius == 0:
            return self.points[rng.integers(len(self.points), size=n)]
        which = rng.integers(len(self.points), size=n)
        return Ball(np.zeros(self.dim), self.radius).sample(n, rng) + self.points[which]

    def origin_distance(self):
        return max(0.0, float(np.linalg.norm(self.points, axis=1).min()) - self.radius)

    def inner_distance(self, x):
        x = _pts(x, self.dim)
        return self.radius - np.linalg.norm(x[:, None, :] - self.points[None], axis=-1).min(1)

    def bounds(self):
        return self.points.min(0) - self.radius, self.points.max(0) + self.radius

    def to_dict(self):
        return {"kind": "points", "points": self.points.tolist(), "radius": self.radius}


def region_from_dict(obj: dict) -> Region:
    kind = obj.get("kind")
    if kind == "ball":
        return Ball(obj["center"], obj["radius"])
    if kind == "annulus":
        c = obj.get("center")
        dim = len(c) if c is not None else int(obj.get("dim", 2))
        return Annulus(obj["r_in"], obj["r_out"], dim, c)
    if kind == "box":
        return Box(obj["lo"], obj["hi"])
    if kind == "points":
        return PointSet(obj["points"], obj.get("radius", 0.0))
    raise InvalidArgument(f"unknown region kind {kind!r}")

