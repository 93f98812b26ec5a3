"""Quantile contours, ranks and signs, and the geometric property checks.

Contours are images ``Q(r s)`` of spheres under the empirical quantile map.
The checks cover nesting of quantile regions, Hausdorff recovery of a compact
convex support, the outward-ray property of region boundaries, the limit of
``F`` along rays, the bijection audit, and rank/sign independence.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import spatial, stats

from . import _seeds
from .errors import InvalidArgument, OutOfDomain, Unsupported
from .ot import Dataset, TransportPlan, solve_assignment
from .potential import DiscretePotential, F_pm, Q_pm, _ext, build_potentials, check_inverse
from .reference import SphericalGrid, build_grid, sphere_directions
from .regions import Ball


def _directions(n_dirs: int, d: int) -> np.ndarray:
    if d == 1:
        return np.array([[-1.0], [1.0]])
    return sphere_directions(int(n_dirs), d, seed=0)


@dataclass(frozen=True, eq=False)
class QuantileContour:
    """``Q(r s)`` over a direction set; in d=2 the points are ordered by angle."""

    level: float
    directions: np.ndarray
    points: np.ndarray
    multiplicity: np.ndarray
    closed: bool
    interpolated: bool

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def to_dict(self) -> dict:
        return {
            "level": self.level,
            "closed": self.closed,
            "interpolated": self.interpolated,
            "directions": self.directions.tolist(),
            "points": self.points.tolist(),
            "multiplicity": self.multiplicity.astype(bool).tolist(),
        }


def _grid_radii(ep) -> np.ndarray | None:
    if isinstance(ep, DiscretePotential):
        return ep.grid.radii
    return None


def contour(ep, r: float, n_dirs: int = 256) -> QuantileContour:
    """Quantile contour of level ``r``: ``Q`` evaluated at ``r s`` for ``n_dirs`` directions."""
    if not 0 < r < 1:
        raise OutOfDomain(f"contour level must lie in (0, 1), got {r}")
    radii = _grid_radii(ep)
    e = _ext(ep)
    dirs = _directions(n_dirs, e.dim)
    pts, multi = Q_pm(e, r * dirs)
    if radii is not None:
        interpolated = not bool(np.any(np.isclose(radii, r, rtol=0, atol=1e-12)))
    else:
        interpolated = not bool(np.any(np.isclose(np.linalg.norm(e.bases, axis=1), r, rtol=0, atol=1e-12)))
    return QuantileContour(float(r), dirs, pts, np.asarray(multi), e.dim == 2, interpolated)


def contours_to_csv(contours) -> str:
    """Headerless rows ``level, dir_index, x1..xd``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for c in contours:
        for k, p in enumerate(c.points):
            w.writerow([repr(float(c.level)), k, *(repr(float(v)) for v in p)])
    return buf.getvalue()


def contours_to_json(contours) -> str:
    return json.dumps([c.to_dict() for c in contours], sort_keys=True)


@dataclass(frozen=True, eq=False)
class RankSignTable:
    """Per-sample rank ``|F(x_i)|``, sign ``F(x_i)/|F(x_i)|`` and matched atom.

    ``shell`` and ``direction`` index the grid factors; origin-matched points
    have ``shell = direction = -1``, rank 0 and a zero sign.
    """

    ranks: np.ndarray
    signs: np.ndarray
    grid_index: np.ndarray
    shell: np.ndarray
    direction: np.ndarray
    origin: np.ndarray
    n_shells: int
    n_directions: int

    def to_dict(self) -> dict:
        return {
            "ranks": self.ranks.tolist(),
            "signs": self.signs.tolist(),
            "grid_index": self.grid_index.tolist(),
            "origin": self.origin.tolist(),
        }


def ranks_signs(ep, data: Dataset, grid: SphericalGrid | None = None, plan: TransportPlan | None = None) -> RankSignTable:
    """Ranks and signs of the sample.

    The matched atom of each point is read from ``F`` (the unique maximizing
    atom at generic points). If ``plan`` is given its assignment is used instead,
    which also separates points sent to different origin copies.
    """
    if grid is None:
        if not isinstance(ep, DiscretePotential):
            raise InvalidArgument("a grid is needed (pass it or use a DiscretePotential)")
        grid = ep.grid
    e = _ext(ep)
    if plan is not None:
        if not plan.is_exact:
            raise InvalidArgument("ranks and signs need an exact plan")
        idx = np.asarray(plan.assignment, dtype=np.int64)
    else:
        _, table, _ = e._phi.evaluate(data.points)
        idx = table[:, 0].astype(np.int64)
    shell = grid.radius_index[idx]
    direction = grid.direction_index[idx]
    origin = grid.origin_mask[idx]
    ranks = np.where(origin, 0.0, grid.radii[np.where(origin, 0, shell)])
    signs = np.where(origin[:, None], 0.0, grid.directions[np.where(origin, 0, direction)])
    return RankSignTable(ranks, signs, idx, np.where(origin, -1, shell), np.where(origin, -1, direction),
                         origin, grid.n_radii, grid.n_directions)


def rank_sign_independence_test(table: RankSignTable, n_shell_bins: int | None = None, n_sector_bins: int | None = None) -> dict:
    """Chi-square statistic of the shell x sector contingency table.

    Shells and sectors are contiguous groups of grid radii and grid directions
    (in d=2 the directions are equiangular, so groups are angular sectors).
    Origin-matched points are excluded. ``exactly_uniform`` refers to the
    ungrouped shell x direction table.
    """
    keep = ~table.origin
    shell = table.shell[keep]
    direc = table.direction[keep]
    nR, nS = table.n_shells, table.n_directions
    full = np.zeros((nR, nS), dtype=np.int64)
    np.add.at(full, (shell, direc), 1)
    exactly_uniform = bool(full.size and np.all(full == full.flat[0]))
    a = min(nR, n_shell_bins or 5)
    b = min(nS, n_sector_bins or 8)
    grouped = np.zeros((a, b), dtype=np.int64)
    np.add.at(grouped, (shell * a // nR, direc * b // nS), 1)
    rows = grouped.sum(1) > 0
    cols = grouped.sum(0) > 0
    g = grouped[rows][:, cols]
    total = g.sum()
    if total == 0 or g.shape[0] < 2 or g.shape[1] < 2:
        stat, dof, p = 0.0, 0, 1.0
    else:
        expected = np.outer(g.sum(1), g.sum(0)) / total
        stat = float(((g - expected) ** 2 / expected).sum())
        dof = (g.shape[0] - 1) * (g.shape[1] - 1)
        p = float(stats.chi2.sf(stat, dof))
    return {
        "statistic": stat,
        "dof": dof,
        "p_value": p,
        "exactly_uniform": exactly_uniform,
        "table": grouped.tolist(),
        "excluded_origin": int(table.origin.sum()),
    }


def hausdorff_distance(A, B) -> float:
    """Symmetric Hausdorff distance between two finite point sets."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.size == 0 or B.size == 0:
        raise InvalidArgument("Hausdorff distance needs two nonempty sets")
    if A.ndim == 1:
        A = A[:, None]
    if B.ndim == 1:
        B = B[:, None]
    da, _ = spatial.cKDTree(B).query(A)
    db, _ = spatial.cKDTree(A).query(B)
    return float(max(da.max(), db.max()))


def region_points(ep, r: float, n_samples: int = 20_000, seed=None) -> np.ndarray:
    """Points of ``Q(r B_d)``: images of uniform samples of ``r B_d`` plus matched
    points of atoms inside ``r B_d``."""
    e = _ext(ep)
    rng = _seeds.stream(seed, "quantiles.region")
    z = Ball(np.zeros(e.dim), r).sample(n_samples, rng)
    pts, _ = Q_pm(e, z)
    inner = e.slopes[np.linalg.norm(e.bases, axis=1) <= r]
    return np.unique(np.vstack([pts, inner]), axis=0)


def nesting_check(ep, levels, n_dirs: int = 256, n_samples: int = 20_000, seed=None) -> dict:
    """For consecutive levels ``r < r'``, contour(r) must lie in the convex hull of
    region(r') together with contour(r')."""
    e = _ext(ep)
    levels = sorted(float(v) for v in levels)
    rows = []
    for r, r2 in zip(levels[:-1], levels[1:]):
        inner = contour(e, r, n_dirs).points
        outer = np.vstack([region_points(e, r2, n_samples, seed), contour(e, r2, n_dirs).points])
        if e.dim == 1:
            lo, hi = outer.min(), outer.max()
            inside = (inner[:, 0] >= lo) & (inner[:, 0] <= hi)
        else:
            try:
                inside = spatial.Delaunay(outer).find_simplex(inner, tol=1e-12) >= 0
            except spatial.QhullError:
                inside = np.zeros(len(inner), bool)
        rows.append({"r": r, "r_outer": r2, "outside": int((~inside).sum())})
    return {"levels": levels, "pairs": rows, "pass": all(p["outside"] == 0 for p in rows)}


def support_recovery_test(generator, n_list, r: float = 0.99, *, seed=0, n_dirs: int = 720,
                          n_region: int = 20_000, n_boundary: int = 4000) -> dict:
    """Hausdorff distances between quantile regions of level ``r`` and the support.

    For each ``n``: ``hausdorff_region`` compares ``Q(r B_d)`` samples with a
    dense sample of the support, ``hausdorff_contour`` compares the level-``r``
    contour with a sample of the support boundary.
    """
    if not getattr(generator, "compact", False):
        raise Unsupported("support recovery needs a compact support")
    g = _seeds.stream(seed, "quantiles.support")
    support = generator.support_sample(20 * n_boundary, g)
    boundary = generator.boundary_sample(n_boundary, g)
    rows = []
    for n in n_list:
        data = generator.sample(int(n), _seeds.stream(seed, f"quantiles.support.data.{n}"))
        grid = build_grid(int(n), generator.dim)
        plan = solve_assignment(data, grid)
        dp, _ = build_potentials(plan, data, grid)
        cont = contour(dp, r, n_dirs).points
        reg = np.vstack([region_points(dp, r, n_region, seed), cont])
        rows.append({
            "n": int(n),
            "hausdorff_region": hausdorff_distance(reg, support),
            "hausdorff_contour": hausdorff_distance(cont, boundary),
        })
    hc = [row["hausdorff_contour"] for row in rows]
    hr = [row["hausdorff_region"] for row in rows]
    return {
        "r": r,
        "rows": rows,
        "contour_strictly_decreasing": bool(all(a > b for a, b in zip(hc[:-1], hc[1:]))),
        "region_strictly_decreasing": bool(all(a > b for a, b in zip(hr[:-1], hr[1:]))),
        "final": hc[-1] if hc else math.nan,
        "sampling": {"support": len(support), "boundary": n_boundary, "contour_dirs": n_dirs, "region": n_region},
    }


def ray_escape_test(ep, r: float, n_boundary: int = 200, *, tau: float | None = None, margin: float | None = None,
                    n_region: int = 20_000, seed=None, report_only: bool = False) -> dict:
    """Shoot the ray ``{y + t u : t > 0}`` from each boundary point ``y = Q(r u)``
    and look for region points close to it beyond ``y``.

    A region point ``z`` hits the ray when its distance to the ray is below
    ``tau`` and it lies more than ``margin`` beyond ``y`` (``t = <z - y, u>``).
    With ``h`` the median nearest-neighbour spacing of the region points, the
    defaults are ``tau = h/4`` and ``margin = 3h``: the empirical region is a
    point cloud whose boundary layer is about one spacing thick, so points within
    a few spacings of ``y`` along the ray are not evidence of re-entry.
    """
    if not 0 < r < 1:
        raise OutOfDomain(f"level must lie in (0, 1), got {r}")
    e = _ext(ep)
    dirs = _directions(n_boundary, e.dim)
    ys, _ = Q_pm(e, r * dirs)
    pts = region_points(e, r, n_region, seed)
    h = 0.0
    if len(pts) > 1:
        nn, _ = spatial.cKDTree(pts).query(pts, k=2)
        h = float(np.median(nn[:, 1]))
    tau = 0.25 * h if tau is None else float(tau)
    margin = 3.0 * h if margin is None else float(margin)
    failures = []
    for k, (y, u) in enumerate(zip(ys, dirs)):
        diff = pts - y
        t = diff @ u
        perp = np.linalg.norm(diff - t[:, None] * u, axis=1)
        hit = (t > margin) & (perp < tau)
        if hit.any():
            failures.append({"index": k, "direction": u.tolist(), "hits": int(hit.sum()), "max_advance": float(t[hit].max())})
    frac = 1.0 - len(failures) / len(dirs)
    return {
        "r": r,
        "tau": tau,
        "margin": margin,
        "spacing": h,
        "n_boundary": int(len(dirs)),
        "n_region": int(len(pts)),
        "pass_fraction": frac,
        "failures": failures,
        "report_only": bool(report_only),
        "pass": None if report_only else bool(frac == 1.0),
    }


def _grid_spacings(ep, grid):
    if grid is None and isinstance(ep, DiscretePotential):
        grid = ep.grid
    if grid is None:
        raise InvalidArgument("a grid is needed for spacing-based tolerances")
    return grid.shell_spacing, grid.angular_spacing, grid


def asymptotic_invariance_test(ep, directions, t_list, grid: SphericalGrid | None = None) -> dict:
    """Errors ``|F(t u) - u|`` along rays for increasing ``t``.

    Per direction: ``monotone`` means no increase larger than one grid spacing
    (the larger of shell and angular spacing); the final error is compared with
    ``angular spacing + 1/(n_R + 1)``.
    """
    e = _ext(ep)
    dirs = np.asarray(directions, dtype=float)
    if dirs.ndim == 1:
        dirs = dirs[:, None] if e.dim == 1 else dirs[None]
    dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
    ts = np.asarray(t_list, dtype=float)
    if np.any(np.diff(ts) <= 0):
        raise InvalidArgument("t_list must be strictly increasing")
    shell, ang, grid = _grid_spacings(ep, grid)
    spacing = max(shell, ang)
    bound = ang + 1.0 / (grid.n_radii + 1)
    max_radius = float(np.linalg.norm(e.bases, axis=1).max())
    rows = []
    for u in dirs:
        fx, _ = F_pm(e, ts[:, None] * u)
        err = np.linalg.norm(fx - u, axis=1)
        norms = np.linalg.norm(fx, axis=1)
        monotone = bool(np.all(np.diff(err) <= spacing))
        rows.append({
            "direction": u.tolist(),
            "errors": err.tolist(),
            "monotone": monotone,
            "final": float(err[-1]),
            "final_ok": bool(err[-1] <= bound),
            "norm_ok": bool(np.all(norms <= max_radius)),
        })
    return {
        "t": ts.tolist(),
        "spacing": spacing,
        "final_bound": bound,
        "rows": rows,
        "pass": all(r["monotone"] and r["final_ok"] and r["norm_ok"] for r in rows),
    }


def _neighbour_pairs(grid: SphericalGrid):
    """Pairs of direction indices that are neighbours on the sphere."""
    nS = grid.n_directions
    if grid.dim == 1:
        return np.array([[0, 1]])
    if grid.dim == 2:
        k = np.arange(nS)
        return np.column_stack([k, (k + 1) % nS]) if nS > 1 else np.empty((0, 2), int)
    kk = min(grid.dim, nS - 1)
    if kk < 1:
        return np.empty((0, 2), int)
    _, nb = spatial.cKDTree(grid.directions).query(grid.directions, k=kk + 1)
    pairs = {(min(a, b), max(a, b)) for a in range(nS) for b in nb[a, 1:]}
    return np.array(sorted(pairs))


def homeomorphism_audit(ep, data: Dataset, grid: SphericalGrid, plan: TransportPlan) -> dict:
    """Injectivity, round trip, continuity modulus per shell, and multiplicity census."""
    if not plan.is_exact:
        raise InvalidArgument("the audit needs an exact plan")
    e = _ext(ep)
    sigma = np.asarray(plan.assignment)
    injective = bool(len(np.unique(sigma)) == len(sigma))
    origin_pts = grid.origin_mask[sigma]
    res = check_inverse(e, data.points)
    res = np.atleast_1d(res)
    generic = res[~origin_pts]
    inv = plan.inverse_assignment()
    matched = data.points[inv]
    pairs = _neighbour_pairs(grid)
    nS = grid.n_directions
    modulus = []
    for i in range(grid.n_radii):
        a = i * nS + pairs[:, 0]
        b = i * nS + pairs[:, 1]
        jumps = np.linalg.norm(matched[a] - matched[b], axis=1) if len(pairs) else np.zeros(1)
        modulus.append({"shell": i, "radius": float(grid.radii[i]), "max": float(jumps.max()), "mean": float(jumps.mean())})
    _, mF = F_pm(e, data.points)
    mF = np.atleast_1d(mF)
    away = ~grid.origin_mask
    _, mQ = Q_pm(e, grid.atoms[away])
    return {
        "injective": injective,
        "roundtrip_max": float(generic.max()) if generic.size else 0.0,
        "roundtrip_zero": bool(np.all(generic == 0)),
        "origin_matched_points": int(origin_pts.sum()),
        "continuity_modulus": modulus,
        "multiplicity_F_samples": int(mF[~origin_pts].sum()),
        "multiplicity_Q_atoms": int(np.atleast_1d(mQ).sum()),
        "pass": bool(injective and np.all(generic == 0)),
    }
