"""Discrete convex potentials built from optimal transport duals.

For a plan matching sample points to grid atoms, the grid potential ``psi`` and
its support lines ``z -> <y_b, z - u_b> + psi(u_b)`` (one per atom ``u_b`` with
matched point ``y_b``) define

* the minimal extension ``psi_tilde(z) = max_b <y_b, z - u_b> + psi(u_b)``, whose
  gradient is the empirical quantile map ``Q``;
* the Legendre transform ``phi(x) = max_j <u_j, x> - psi(u_j)``, whose gradient
  is the empirical distribution map ``F``.

Both are max-affine, so gradients are the maximizing slopes; at ties the
average of the distinct slopes is returned together with a multiplicity flag.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from ._maxaffine import MaxAffine
from .errors import InvalidArgument, OutOfDomain
from .ot import Dataset, TransportPlan, normalize_psi
from .reference import SphericalGrid

TIE_ATOL = 1e-10


def grid_digest(grid: SphericalGrid) -> str:
    return hashlib.sha256(grid.to_json().encode()).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class ExtendedPotential:
    """Support lines ``(base u_b, slope y_b, intercept psi(u_b))`` of the minimal extension."""

    bases: np.ndarray
    slopes: np.ndarray
    intercepts: np.ndarray
    atol: float = TIE_ATOL
    max_radius: float = 1.0
    _phi: MaxAffine = field(init=False, repr=False)
    _psi: MaxAffine = field(init=False, repr=False)

    def __post_init__(self):
        # phi: slopes u_j, offsets psi_j; psi_tilde: slopes y_b, offsets <y_b,u_b> - psi_b
        object.__setattr__(self, "_phi", MaxAffine(self.bases, self.intercepts, self.atol))
        offs = (self.slopes * self.bases).sum(1) - self.intercepts
        object.__setattr__(self, "_psi", MaxAffine(self.slopes, offs, self.atol))

    @property
    def n(self) -> int:
        return len(self.intercepts)

    @property
    def dim(self) -> int:
        return self.bases.shape[1]

    def psi_tilde(self, z) -> np.ndarray:
        z, single = _batch(z, self.dim)
        vals = self._psi.evaluate(z)[0]
        return vals[0] if single else vals

    def phi(self, x) -> np.ndarray:
        x, single = _batch(x, self.dim)
        vals = self._phi.evaluate(x)[0]
        return vals[0] if single else vals

    def with_intercepts(self, intercepts) -> "ExtendedPotential":
        return ExtendedPotential(self.bases, self.slopes, np.asarray(intercepts, dtype=float), self.atol, self.max_radius)

    def to_dict(self, grid_ref: str = "") -> dict:
        return {
            "grid_ref": grid_ref,
            "psi": self.intercepts.tolist(),
            "lines": [
                {"u_b": ub.tolist(), "y_b": yb.tolist(), "c": float(c)}
                for ub, yb, c in zip(self.bases, self.slopes, self.intercepts)
            ],
        }

    def to_json(self, grid_ref: str = "") -> str:
        return json.dumps(self.to_dict(grid_ref))

    @classmethod
    def from_dict(cls, obj: dict) -> "ExtendedPotential":
        lines = obj["lines"]
        bases = np.array([ln["u_b"] for ln in lines], dtype=float)
        slopes = np.array([ln["y_b"] for ln in lines], dtype=float)
        c = np.array([ln["c"] for ln in lines], dtype=float)
        rmax = float(np.linalg.norm(bases, axis=1).max())
        return cls(bases, slopes, c, max_radius=rmax)


@dataclass(frozen=True, eq=False)
class DiscretePotential:
    grid: SphericalGrid
    psi_values: np.ndarray
    matched_points: np.ndarray
    exact: bool = True

    def extend(self) -> ExtendedPotential:
        return ExtendedPotential(self.grid.atoms, self.matched_points, self.psi_values, max_radius=self.grid.max_radius)

    def consistency_error(self) -> float:
        """Largest gap between ``psi`` on atoms and the max of the support lines there."""
        ep = self.extend()
        return float(np.max(np.abs(ep.psi_tilde(self.grid.atoms) - self.psi_values)))


def _batch(x, d):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1, 1)
        return x, True
    if x.ndim == 1:
        if d == 1 and x.shape[0] != 1:
            return x[:, None], False
        return x[None, :], True
    return x, False


def _ext(ep) -> ExtendedPotential:
    if isinstance(ep, DiscretePotential):
        return ep.extend()
    if isinstance(ep, ExtendedPotential):
        return ep
    raise InvalidArgument(f"expected a potential, got {type(ep).__name__}")


def build_potentials(plan: TransportPlan, data: Dataset, grid: SphericalGrid) -> tuple[DiscretePotential, ExtendedPotential]:
    """Grid potential ``psi = (|u|^2 - g)/2`` and its support lines.

    Exact plans give the matched point of each atom; dense couplings use the
    barycentric projection ``n * sum_i pi_ij x_i`` (then ``psi`` is only
    approximately consistent with its lines).
    """
    if plan.n != grid.n or data.n != grid.n:
        raise InvalidArgument("plan, data and grid sizes differ")
    u = grid.atoms
    x = data.points
    if plan.is_exact:
        matched = x[plan.inverse_assignment()]
    else:
        matched = grid.n * plan.coupling.T @ x
    psi = 0.5 * ((u * u).sum(1) - plan.g)
    psi = normalize_psi(psi, matched, u, grid.origin_mask)
    dp = DiscretePotential(grid, psi, matched, exact=plan.is_exact)
    return dp, dp.extend()


def legendre_transform(ep, x, atol: float = TIE_ATOL):
    """``phi(x) = max_j <u_j, x> - psi(u_j)`` and the indices of all atoms within ``atol`` of the max."""
    ep = _ext(ep)
    x = np.asarray(x, dtype=float).reshape(-1)
    vals = ep.bases @ x - ep.intercepts
    best = vals.max()
    return float(best), np.flatnonzero(vals >= best - atol)


def F_pm(ep, x):
    """Empirical center-outward distribution function (gradient of ``phi``).

    Returns ``(points, multiplicity)``; a single input point gives a single output.
    """
    ep = _ext(ep)
    xb, single = _batch(x, ep.dim)
    out, multi, _ = ep._phi.averaged_argmax(xb)
    if single:
        return out[0], bool(multi[0])
    return out, multi


def Q_pm(ep, u):
    """Empirical center-outward quantile function (gradient of the minimal extension).

    Defined on the open unit ball; returns ``(points, multiplicity)``.
    """
    ep = _ext(ep)
    ub, single = _batch(u, ep.dim)
    if np.any(np.linalg.norm(ub, axis=1) >= 1.0):
        raise OutOfDomain("quantile function is defined on the open unit ball only")
    out, multi, _ = ep._psi.averaged_argmax(ub)
    if single:
        return out[0], bool(multi[0])
    return out, multi


def check_inverse(ep, x):
    """Round-trip residual ``|Q(F(x)) - x|`` for sample points."""
    ep = _ext(ep)
    xb, single = _batch(x, ep.dim)
    fx, _ = F_pm(ep, xb)
    res = np.linalg.norm(Q_pm(ep, fx)[0] - xb, axis=1)
    return float(res[0]) if single else res


def lipschitz_audit(ep, pairs) -> float:
    """Largest ``|phi(x) - phi(x')| / |x - x'|`` over non-coincident pairs."""
    ep = _ext(ep)
    pairs = np.asarray(pairs, dtype=float)
    if pairs.ndim == 2:
        pairs = pairs[:, :, None]
    a, b = pairs[:, 0, :], pairs[:, 1, :]
    dist = np.linalg.norm(a - b, axis=1)
    keep = dist > 0
    if not keep.any():
        return 0.0
    diff = np.abs(ep.phi(a[keep]) - ep.phi(b[keep]))
    return float(np.max(diff / dist[keep]))
