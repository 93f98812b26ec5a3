"""Monte Carlo estimates of Monge-Ampere measures of the transport potentials.

Two routes are compared for each region:

* ``value_subdiff``: Lebesgue volume of the subdifferential image, estimated by
  rejection sampling (``mu_phi(A)`` = volume of ``{u in B_d : Q(u) in A}``,
  ``mu_psi(B)`` = volume of ``{x : F(x) in B}``);
* ``value_formula``: the density representation, ``a_d * int_A p |F|^(d-1)``
  for ``mu_phi`` and ``(1/a_d) * int_B 1 / (p(Q(y)) |y|^(d-1)) dy`` for ``mu_psi``.

Potentials are either the empirical ones built from a plan or an
:class:`AnalyticPotential` holding closed-form maps, which lets the estimators be
validated independently of grid resolution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _seeds
from .errors import InvalidArgument, NumericError, OutOfDomain
from .ot import Dataset, TransportPlan
from .potential import F_pm, Q_pm, _ext
from .reference import SphericalGrid, ball_volume, sample_spherical_uniform, sphere_area
from .regions import Ball, Box, Region


@dataclass(frozen=True, eq=False)
class AnalyticPotential:
    """Closed-form gradient maps ``F = grad phi`` and ``Q = grad psi``.

    ``F`` and ``Q`` take and return ``(m, d)`` arrays. ``support`` is a box
    containing the support of the source law (needed for volumes of
    ``{x : F(x) in B}``).
    """

    dim: int
    F: Callable[[np.ndarray], np.ndarray]
    Q: Callable[[np.ndarray], np.ndarray]
    support: Box
    name: str = "analytic"

    @classmethod
    def identity(cls, d: int, support: Box | None = None) -> "AnalyticPotential":
        """Both maps equal to the identity: the source law is the reference law itself
        (in d=1 this is also Uniform(-1, 1))."""
        box = support or Box(-np.ones(d), np.ones(d))
        return cls(d, lambda x: np.array(x, dtype=float), lambda u: np.array(u, dtype=float), box, "identity")

    @classmethod
    def radial(cls, d: int, G, G_inv, support_radius: float, name: str = "radial") -> "AnalyticPotential":
        """Radial maps ``F(x) = G(|x|) x/|x|`` and ``Q(u) = G_inv(|u|) u/|u|``.

        ``G`` is the cdf of ``|X|`` for a spherically symmetric source law.
        """

        def _radial(h):
            def f(z):
                z = np.asarray(z, dtype=float)
                r = np.linalg.norm(z, axis=1, keepdims=True)
                safe = np.where(r > 0, r, 1.0)
                return np.where(r > 0, h(r) * z / safe, 0.0)

            return f

        R = float(support_radius)
        return cls(d, _radial(G), _radial(G_inv), Box(-R * np.ones(d), R * np.ones(d)), name)


def _maps(pot):
    """Return ``(F, Q, support_box, empirical)`` for any supported potential."""
    if isinstance(pot, AnalyticPotential):
        return pot.F, pot.Q, pot.support, False
    ep = _ext(pot)
    lo, hi = ep.slopes.min(0), ep.slopes.max(0)
    pad = 1e-9 * (1.0 + np.abs(hi - lo))
    lo, hi = lo - pad, hi + pad
    return (lambda x: F_pm(ep, x)[0]), (lambda u: Q_pm(ep, u)[0]), Box(lo, hi), True


def _dim(pot) -> int:
    return pot.dim if isinstance(pot, AnalyticPotential) else _ext(pot).dim


@dataclass
class MAEstimate:
    """Two estimates of one Monge-Ampere measure value with their standard errors."""

    region: dict
    measure: str
    value_subdiff: float
    value_formula: float | None
    mc_samples: int
    se_subdiff: float
    se_formula: float | None
    flags: list = field(default_factory=list)

    @property
    def std_error(self) -> float:
        """Standard error of the difference between the two estimates."""
        sf = self.se_formula or 0.0
        return math.hypot(self.se_subdiff, sf)

    def agrees(self, reference: float | None = None, k: float = 3.0) -> bool:
        """Both estimates within ``k`` standard errors of ``reference``; without a
        reference, the two estimates within ``k`` standard errors of each other.

        A floor of 1e-12 on the tolerance covers estimators with zero variance.
        """
        if reference is None:
            if self.value_formula is None:
                return False
            return abs(self.value_subdiff - self.value_formula) <= k * self.std_error + 1e-12
        ok = abs(self.value_subdiff - reference) <= k * self.se_subdiff + 1e-12
        if self.value_formula is not None:
            ok = ok and abs(self.value_formula - reference) <= k * self.se_formula + 1e-12
        return bool(ok)

    def to_report(self, reference: float | None = None, k: float = 3.0) -> dict:
        rep = {
            "region": self.region,
            "measure": self.measure,
            "value_subdiff": self.value_subdiff,
            "value_formula": self.value_formula,
            "se": self.std_error,
            "se_subdiff": self.se_subdiff,
            "se_formula": self.se_formula,
            "n_mc": self.mc_samples,
            "pass": self.agrees(reference, k),
            "threshold": k,
            "flags": list(self.flags),
        }
        if reference is not None:
            rep["reference"] = reference
        return rep


def _mean_se(vals, scale):
    n = len(vals)
    mean = float(np.mean(vals)) * scale
    se = float(np.std(vals, ddof=1)) * scale / math.sqrt(n) if n > 1 else 0.0
    return mean, se


def _rate(hits, scale):
    n = len(hits)
    p = float(np.mean(hits))
    return p * scale, math.sqrt(max(p * (1 - p), 0.0) / n) * scale


def _density(density_p, pts):
    vals = np.asarray(density_p(pts), dtype=float).reshape(-1)
    if vals.shape[0] != pts.shape[0]:
        raise InvalidArgument("density callable must return one value per point")
    return vals


def ma_forward_density(A: Region, density_p, ep, n_mc: int = 100_000, seed=None) -> MAEstimate:
    """Estimate ``mu_phi(A)`` by subdifferential volume and by the density formula.

    ``density_p`` maps ``(m, d)`` points to density values; pass ``None`` to
    skip the formula route.
    """
    d = _dim(ep)
    if A.dim != d:
        raise InvalidArgument("region and potential dimensions differ")
    n_mc = int(n_mc)
    if n_mc < 2:
        raise InvalidArgument("n_mc must be at least 2")
    F, Q, box, empirical = _maps(ep)
    g_sub = _seeds.stream(seed, "ma.forward.subdiff")
    g_for = _seeds.stream(seed, "ma.forward.formula")
    flags = []

    u = Ball(np.zeros(d), 1.0).sample(n_mc, g_sub)
    v_sub, se_sub = _rate(A.contains(Q(u)), ball_volume(d))

    v_for = se_for = None
    if density_p is not None:
        vol = A.volume
        if vol == 0:
            v_for, se_for = 0.0, 0.0
        else:
            x = A.sample(n_mc, g_for)
            if empirical and not np.all(box.contains(x)):
                flags.append("region-beyond-data-range")
            fx = F(x)
            h = sphere_area(d) * _density(density_p, x) * np.linalg.norm(fx, axis=1) ** (d - 1)
            v_for, se_for = _mean_se(h, vol)
    return MAEstimate(A.to_dict(), "mu_phi", v_sub, v_for, n_mc, se_sub, se_for, flags)


def ma_backward_density(
    B: Region,
    density_p,
    ep,
    n_mc: int = 100_000,
    seed=None,
    *,
    allow_singular: bool = False,
    importance: bool = False,
) -> MAEstimate:
    """Estimate ``mu_psi(B)`` for a region ``B`` inside the unit ball.

    By default the formula route samples ``B`` uniformly and needs ``B`` at a
    positive distance from the origin. With ``importance=True`` (or
    ``allow_singular=True`` for regions touching the origin) it samples the
    reference law instead, whose density ``1/(a_d |y|^(d-1))`` absorbs the
    singular factor exactly: ``mu_psi(B) = E[1_B(Y) / p(Q(Y))]``.
    """
    d = _dim(ep)
    if B.dim != d:
        raise InvalidArgument("region and potential dimensions differ")
    n_mc = int(n_mc)
    if n_mc < 2:
        raise InvalidArgument("n_mc must be at least 2")
    touches = B.origin_distance() <= 0.0
    if touches and not allow_singular:
        raise InvalidArgument("region touches the origin; pass allow_singular=True to use the radial substitution")
    radial = importance or touches
    F, Q, box, _ = _maps(ep)
    g_sub = _seeds.stream(seed, "ma.backward.subdiff")
    g_for = _seeds.stream(seed, "ma.backward.formula")
    flags = ["importance-sampling-reference-law"] if radial else []

    if isinstance(ep, AnalyticPotential):
        # {x : F(x) in B} = Q(B) for closed-form maps; sample its padded bounding box
        img = Q(B.sample(min(n_mc, 20_000), g_sub))
        lo, hi = img.min(0), img.max(0)
        pad = 0.05 * (hi - lo) + 1e-12
        lo = np.maximum(lo - pad, box.lo)
        hi = np.minimum(hi + pad, box.hi)
        box = Box(lo, hi)
    x = box.sample(n_mc, g_sub)
    v_sub, se_sub = _rate(B.contains(F(x)), box.volume)

    v_for = se_for = None
    if density_p is not None:
        if radial:
            y = sample_spherical_uniform(n_mc, d, g_for)
            inside = B.contains(y)
            w = np.zeros(n_mc)
            if inside.any():
                p = _density(density_p, Q(y[inside]))
                if np.any(p <= 0):
                    raise NumericError("density vanishes at a transported point")
                w[inside] = 1.0 / p
            v_for, se_for = _mean_se(w, 1.0)
        else:
            y = B.sample(n_mc, g_for)
            r = np.linalg.norm(y, axis=1)
            if np.any(r >= 1.0):
                raise OutOfDomain("region must lie inside the open unit ball")
            p = _density(density_p, Q(y))
            if np.any(p <= 0):
                raise NumericError("density vanishes at a transported point")
            h = 1.0 / (sphere_area(d) * p * r ** (d - 1))
            v_for, se_for = _mean_se(h, B.volume)
    return MAEstimate(B.to_dict(), "mu_psi", v_sub, v_for, n_mc, se_sub, se_for, flags)


def bound_constants(d: int, lam_R: float, Lam_R: float) -> tuple[float, float]:
    """Lower and upper constants for ``alpha l(A) <= mu_psi(A) <= A_M l(A)^(1/d)``.

    With ``lam_R <= p <= Lam_R`` on the transported region and ``|y| < 1``,
    ``mu_psi(A) >= l(A) / (a_d Lam_R)``; the upper bound uses that
    ``int_A |y|^(1-d) dy`` is largest for a centred ball of the same volume,
    giving ``l(A)^(1/d) / (lam_R c_d^(1/d))``.
    """
    return 1.0 / (sphere_area(d) * Lam_R), 1.0 / (lam_R * ball_volume(d) ** (1.0 / d))


def check_bounds_lemma(
    M: Region,
    ep,
    density_p=None,
    trials: int = 20,
    *,
    density_bounds=None,
    n_mc: int = 20_000,
    seed=None,
    k: float = 3.0,
) -> dict:
    """Fit the two-sided volume bounds of ``mu_psi`` over random balls inside ``M``.

    ``density_bounds(R)`` returns ``(lam_R, Lam_R)`` for the source density on
    the ball of radius ``R``; ``R`` is the empirical enclosing radius of ``Q(M)``.
    Without a density only the subdifferential estimates and empirical constants
    are reported.
    """
    d = _dim(ep)
    if M.origin_distance() <= 0:
        raise InvalidArgument("region must stay at a positive distance from the origin")
    rng = _seeds.stream(seed, "ma.bounds")
    _, Q, _, _ = _maps(ep)
    probe = M.sample(max(n_mc, 1000), rng)
    if np.any(np.linalg.norm(probe, axis=1) >= 1.0):
        raise OutOfDomain("region must lie inside the open unit ball")
    R_hat = float(np.linalg.norm(Q(probe), axis=1).max())

    regions = [M]
    for _ in range(int(trials)):
        c = M.sample(1, rng)[0]
        room = float(M.inner_distance(c[None])[0])
        if room <= 0:
            continue
        regions.append(Ball(c, room * rng.uniform(0.1, 1.0)))

    rows = []
    for t, A in enumerate(regions):
        est = ma_backward_density(A, density_p, ep, n_mc, seed=rng)
        use_formula = est.value_formula is not None
        mu = est.value_formula if use_formula else est.value_subdiff
        se = est.se_formula if use_formula else est.se_subdiff
        vol = A.volume
        rows.append({"trial": t, "region": A.to_dict(), "volume": vol, "mu": mu, "se": se,
                     "ratio_lower": mu / vol, "ratio_upper": mu / vol ** (1.0 / d)})
    alpha_hat = min(r["ratio_lower"] for r in rows)
    A_hat = max(r["ratio_upper"] for r in rows)
    holds = all(alpha_hat * r["volume"] <= r["mu"] <= A_hat * r["volume"] ** (1.0 / d) for r in rows)
    report = {
        "region": M.to_dict(),
        "trials": rows,
        "alpha_hat": alpha_hat,
        "A_hat": A_hat,
        "enclosing_radius": R_hat,
        "empirical_bounds_hold": bool(holds),
        "route": "formula" if density_p is not None else "subdiff",
    }
    if density_bounds is not None and density_p is not None:
        lam, Lam = density_bounds(R_hat)
        a_th, A_th = bound_constants(d, lam, Lam)
        ok = all(
            a_th * r["volume"] <= r["mu"] + k * r["se"] + 1e-12
            and r["mu"] - k * r["se"] - 1e-12 <= A_th * r["volume"] ** (1.0 / d)
            for r in rows
        )
        report.update({"lambda_R": lam, "Lambda_R": Lam, "alpha_theory": a_th, "A_theory": A_th,
                       "theory_bounds_hold": bool(ok)})
    return report


def boundary_avoidance_check(ep, interior_points) -> dict:
    """Largest ``|F(x)|`` over interior points against the outermost grid radius."""
    ep = _ext(ep)
    pts = np.asarray(interior_points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None] if ep.dim == 1 else pts[None, :]
    fx, _ = F_pm(ep, pts)
    norms = np.linalg.norm(fx, axis=1)
    atom_max = float(np.linalg.norm(ep.bases, axis=1).max())
    max_norm = float(norms.max()) if len(norms) else 0.0
    return {
        "max_norm": max_norm,
        "bound": atom_max,
        "nominal_bound": ep.max_radius,
        "n_points": int(len(pts)),
        "pass": bool(max_norm <= atom_max and max_norm < 1.0),
    }


def transport_equation_check(plan: TransportPlan, data: Dataset, grid: SphericalGrid, ep, region: Region) -> dict:
    """Compare ``P_n(A)`` with the reference mass of ``F(A ∩ sample)`` by counting atoms.

    When ``A`` contains only some of the points sent to origin copies, the image
    mass counts all copies at the origin, so equality is not expected; this is
    flagged.
    """
    ep = _ext(ep)
    x = data.points
    inside = region.contains(x)
    n = data.n
    mass_p = int(inside.sum())
    if mass_p:
        img, _ = F_pm(ep, x[inside])
        image = {tuple(r) for r in np.asarray(img).tolist()}
        mass_u = int(sum(tuple(a) in image for a in grid.atoms.tolist()))
    else:
        mass_u = 0
    origin_pts = grid.origin_mask[plan.assignment] if plan.is_exact else np.zeros(n, bool)
    k = int((inside & origin_pts).sum())
    partial = 0 < k < int(origin_pts.sum())
    return {
        "region": region.to_dict(),
        "sample_mass": mass_p / n,
        "reference_mass": mass_u / n,
        "count_sample": mass_p,
        "count_reference": mass_u,
        "origin_partial": bool(partial),
        "pass": None if partial else bool(mass_p == mass_u),
    }
