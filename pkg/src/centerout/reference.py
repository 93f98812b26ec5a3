"""Spherical uniform reference measure on the open unit ball.

The measure is the law of ``R * S`` with ``S`` uniform on the unit sphere and
``R ~ Uniform(0, 1)`` independent of ``S``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special, stats
from scipy.stats import qmc

from .errors import InvalidArgument


def _check_dim(d):
    if int(d) != d or d < 1:
        raise InvalidArgument(f"dimension must be a positive integer, got {d!r}")
    return int(d)


def sphere_area(d: int) -> float:
    """Surface area ``2 pi^(d/2) / Gamma(d/2)`` of the unit sphere in R^d."""
    d = _check_dim(d)
    return 2.0 * math.pi ** (d / 2) / math.gamma(d / 2)


def ball_volume(d: int) -> float:
    """Volume ``pi^(d/2) / Gamma(1 + d/2)`` of the unit ball in R^d."""
    d = _check_dim(d)
    return math.pi ** (d / 2) / math.gamma(1 + d / 2)


@dataclass(frozen=True)
class ReferenceConstants:
    dim: int
    sphere_area: float
    ball_volume: float

    @classmethod
    def for_dim(cls, d: int) -> "ReferenceConstants":
        return cls(d, sphere_area(d), ball_volume(d))


def spherical_uniform_density(x) -> np.ndarray | float:
    """Density of the spherical uniform law at ``x`` (last axis is the coordinate axis).

    Zero at the origin and outside the open ball.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x[None]
    d = x.shape[-1]
    r = np.linalg.norm(x, axis=-1)
    inside = (r > 0) & (r < 1)
    with np.errstate(divide="ignore"):
        val = np.where(inside, 1.0 / (sphere_area(d) * np.where(inside, r, 1.0) ** (d - 1)), 0.0)
    return float(val) if val.ndim == 0 else val


def uniform_directions(n: int, d: int, rng) -> np.ndarray:
    """``n`` i.i.d. uniform points on the unit sphere of R^d."""
    z = rng.standard_normal((n, d))
    norms = np.linalg.norm(z, axis=1, keepdims=True)
    # a zero draw has probability zero; redraw defensively
    while np.any(norms == 0):
        bad = norms[:, 0] == 0
        z[bad] = rng.standard_normal((bad.sum(), d))
        norms = np.linalg.norm(z, axis=1, keepdims=True)
    return z / norms


def sample_spherical_uniform(n: int, d: int, seed=None) -> np.ndarray:
    """Draw ``n`` points from the spherical uniform law on the unit ball."""
    d = _check_dim(d)
    if n < 1:
        raise InvalidArgument("n must be >= 1")
    rng = np.random.default_rng(seed)
    s = uniform_directions(n, d, rng)
    r = rng.uniform(0.0, 1.0, size=(n, 1))
    return r * s


def sphere_directions(n_s: int, d: int, seed=None) -> np.ndarray:
    """Deterministic low-discrepancy directions on the unit sphere.

    d=1: ``{-1, +1}``; d=2: equiangular starting at angle 0; d=3: Fibonacci
    spiral; d>=4: Halton points pushed through the Gaussian quantile and
    normalized. For d>=3 the set is rotated by a seeded random rotation.
    """
    d = _check_dim(d)
    if d == 1:
        if n_s != 2:
            raise InvalidArgument("in dimension 1 the sphere has exactly 2 points (n_S=2)")
        return np.array([[-1.0], [1.0]])
    if n_s < 1:
        raise InvalidArgument("n_S must be >= 1")
    if d == 2:
        theta = 2.0 * np.pi * np.arange(n_s) / n_s
        return np.column_stack([np.cos(theta), np.sin(theta)])
    if d == 3:
        k = np.arange(n_s) + 0.5
        z = 1.0 - 2.0 * k / n_s
        rho = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
        phi = np.pi * (3.0 - math.sqrt(5.0)) * np.arange(n_s)
        dirs = np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])
    else:
        pts = qmc.Halton(d=d, scramble=False).random(n_s + 1)[1:]
        pts = np.clip(pts, 1e-12, 1 - 1e-12)
        dirs = special.ndtri(pts)
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    rot = stats.special_ortho_group.rvs(d, random_state=np.random.default_rng(seed))
    dirs = dirs @ rot.T
    return dirs / np.linalg.norm(dirs, axis=1, keepdims=True)


@dataclass(frozen=True, eq=False)
class SphericalGrid:
    """Radii x directions product grid plus copies of the origin, uniform weights."""

    dim: int
    radii: np.ndarray
    directions: np.ndarray
    origin_copies: int
    atoms: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.atoms.shape[0]

    @property
    def n_radii(self) -> int:
        return len(self.radii)

    @property
    def n_directions(self) -> int:
        return len(self.directions)

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.n, 1.0 / self.n)

    @property
    def max_radius(self) -> float:
        return float(self.radii[-1]) if len(self.radii) else 0.0

    @property
    def shell_spacing(self) -> float:
        return 1.0 / (self.n_radii + 1)

    @property
    def angular_spacing(self) -> float:
        """Largest distance from a unit vector to its nearest grid direction (estimated for d>=3)."""
        if self.dim == 1:
            return 0.0
        if self.dim == 2:
            return 2.0 * math.sin(math.pi / (2 * self.n_directions))
        # covering radius estimate from nearest-neighbour spacing
        from scipy.spatial import cKDTree

        dist, _ = cKDTree(self.directions).query(self.directions, k=2)
        return float(dist[:, 1].max())

    @property
    def radius_index(self) -> np.ndarray:
        """Shell index (0-based) per atom, -1 for origin copies."""
        n_prod = self.n_radii * self.n_directions
        idx = np.full(self.n, -1, dtype=np.int64)
        idx[:n_prod] = np.repeat(np.arange(self.n_radii), self.n_directions)
        return idx

    @property
    def direction_index(self) -> np.ndarray:
        """Direction index per atom, -1 for origin copies."""
        n_prod = self.n_radii * self.n_directions
        idx = np.full(self.n, -1, dtype=np.int64)
        idx[:n_prod] = np.tile(np.arange(self.n_directions), self.n_radii)
        return idx

    @property
    def origin_mask(self) -> np.ndarray:
        return self.radius_index < 0

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "radii": self.radii.tolist(),
            "directions": self.directions.tolist(),
            "origin_copies": self.origin_copies,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, obj: dict) -> "SphericalGrid":
        dim = int(obj["dim"])
        radii = np.asarray(obj["radii"], dtype=float)
        directions = np.asarray(obj["directions"], dtype=float).reshape(-1, dim)
        return _assemble(dim, radii, directions, int(obj["origin_copies"]))

    @classmethod
    def from_json(cls, text: str) -> "SphericalGrid":
        return cls.from_dict(json.loads(text))


def _assemble(dim, radii, directions, n0) -> SphericalGrid:
    prod = (radii[:, None, None] * directions[None, :, :]).reshape(-1, dim)
    atoms = np.vstack([prod, np.zeros((n0, dim))])
    for arr in (radii, directions, atoms):
        arr.setflags(write=False)
    return SphericalGrid(dim, radii, directions, n0, atoms)


def default_factorization(n: int, d: int) -> tuple[int, int]:
    """A balanced ``(n_R, n_S)`` with ``n_R * n_S <= n < n_R * n_S + n_S``."""
    if n < 1:
        raise InvalidArgument("n must be >= 1")
    if n == 1:
        return 0, 2  # a single origin atom
    if d == 1:
        return n // 2, 2
    n_r = max(1, int(math.isqrt(n)))
    n_s = n // n_r
    return n_r, n_s


def build_grid(n: int, d: int, n_r: int | None = None, n_s: int | None = None, seed=None) -> SphericalGrid:
    """Discretize the spherical uniform law with ``n`` equally weighted atoms.

    Radii are ``i/(n_R+1)``, ``i = 1..n_R``; the remainder ``n - n_R*n_S`` (which
    must be smaller than ``n_S``) is filled with copies of the origin.
    """
    d = _check_dim(d)
    if n_r is None or n_s is None:
        dr, ds = default_factorization(n, d)
        n_r = dr if n_r is None else n_r
        n_s = ds if n_s is None else n_s
    if n < 1 or n_r < 0 or n_s < 1:
        raise InvalidArgument(f"invalid grid sizes n={n}, n_R={n_r}, n_S={n_s}")
    n0 = n - n_r * n_s
    if n0 < 0:
        raise InvalidArgument(f"n_R*n_S = {n_r * n_s} exceeds n = {n}")
    if n0 >= n_s:
        raise InvalidArgument(f"remainder {n0} must be smaller than n_S = {n_s}")
    radii = np.arange(1, n_r + 1) / (n_r + 1)
    directions = sphere_directions(n_s, d, seed)
    return _assemble(d, radii, directions, n0)


def _angular_area(d: int) -> float:
    """Sphere area by quadrature over hyperspherical angles (independent of the Gamma formula)."""
    if d == 1:
        return 2.0
    area = 2.0 * math.pi
    for k in range(1, d - 1):
        val, _ = integrate.quad(lambda t, k=k: math.sin(t) ** k, 0.0, math.pi, epsabs=1e-14, epsrel=1e-13)
        area *= val
    return area


def coarea_radial_integral(r: float, d: int) -> float:
    """Quadrature of ``int_{|y|<r} |y|^(1-d) dy`` in hyperspherical coordinates.

    The radial Jacobian ``rho^(d-1)`` cancels the integrand, leaving a regular
    radial integral times the angular area; both factors are integrated numerically.
    Closed form: ``sphere_area(d) * r``.
    """
    d = _check_dim(d)
    if not (0 < r <= 1):
        raise InvalidArgument(f"r must lie in (0, 1], got {r}")
    radial, _ = integrate.quad(lambda rho: rho ** (1 - d) * rho ** (d - 1), 0.0, r, epsabs=1e-14, epsrel=1e-13)
    return radial * _angular_area(d)


def density_mass(d: int) -> float:
    """Quadrature of the reference density over the unit ball (should be 1)."""
    d = _check_dim(d)
    a = sphere_area(d)
    radial, _ = integrate.quad(lambda rho: rho ** (d - 1) / (a * rho ** (d - 1)), 0.0, 1.0, epsabs=1e-14)
    return radial * _angular_area(d)
