"""Quadratic-cost optimal transport between a sample and a spherical grid.

Costs are plain squared Euclidean distances ``|x - u|^2`` (not halved). Dual
vectors ``f`` (sample side) and ``g`` (grid side) satisfy
``f_i + g_j <= |x_i - u_j|^2``; the convex potential on the grid is recovered as
``psi_j = (|u_j|^2 - g_j) / 2``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Literal

import numba
import numpy as np
from scipy.special import logsumexp

from . import _lap
from .errors import ConvergenceFailure, InvalidArgument, NumericError, UnsupportedPlanKind
from .reference import SphericalGrid

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Dataset:
    """``n`` points in R^d with an optional convex-support descriptor.

    ``support_hint`` is either ``None``, the string ``"unbounded"`` or a dict
    ``{"A": [[...]], "b": [...]}`` describing ``{x : A x <= b}``.
    """

    points: np.ndarray
    support_hint: object = None

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise InvalidArgument("points must be a non-empty (n, d) array")
        if not np.all(np.isfinite(pts)):
            raise InvalidArgument("points must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def in_support(self, x) -> np.ndarray:
        """Membership in the hinted support (all True when no polytope hint)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if not isinstance(self.support_hint, dict):
            return np.ones(len(x), dtype=bool)
        A = np.asarray(self.support_hint["A"], dtype=float)
        b = np.asarray(self.support_hint["b"], dtype=float)
        return np.all(x @ A.T <= b + 1e-12, axis=1)


@dataclass(frozen=True, eq=False)
class TransportPlan:
    kind: Literal["exact-permutation", "dense-coupling"]
    f: np.ndarray
    g: np.ndarray
    cost: float
    assignment: np.ndarray | None = None
    coupling: np.ndarray | None = None
    iterations: int = 0
    marginal_error: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.f)

    @property
    def is_exact(self) -> bool:
        return self.kind == "exact-permutation"

    def inverse_assignment(self) -> np.ndarray:
        """Atom index -> matched sample index (exact plans)."""
        if not self.is_exact:
            raise UnsupportedPlanKind("inverse assignment needs an exact plan")
        inv = np.empty_like(self.assignment)
        inv[self.assignment] = np.arange(len(self.assignment))
        return inv

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.is_exact:
            out["sigma"] = self.assignment.tolist()
        else:
            out["coupling"] = np.round(self.coupling, 12).ravel().tolist()
            out["shape"] = list(self.coupling.shape)
        out["duals"] = {"f": self.f.tolist(), "g": self.g.tolist()}
        out["cost"] = self.cost
        out["cost_convention"] = "squared_euclidean_unhalved"
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, obj: dict) -> "TransportPlan":
        f = np.asarray(obj["duals"]["f"], dtype=float)
        g = np.asarray(obj["duals"]["g"], dtype=float)
        if obj["kind"] == "exact-permutation":
            return cls("exact-permutation", f, g, float(obj["cost"]), assignment=np.asarray(obj["sigma"], dtype=np.int64))
        shape = tuple(obj["shape"])
        coupling = np.asarray(obj["coupling"], dtype=float).reshape(shape)
        return cls("dense-coupling", f, g, float(obj["cost"]), coupling=coupling)


def _as_arrays(data: Dataset, grid: SphericalGrid):
    if data.n != grid.n:
        raise InvalidArgument(f"sample size {data.n} differs from grid size {grid.n}")
    if data.dim != grid.dim:
        raise InvalidArgument(f"dimension mismatch: data {data.dim}, grid {grid.dim}")
    x = np.ascontiguousarray(data.points, dtype=float)
    u = np.ascontiguousarray(grid.atoms, dtype=float)
    return x, u


def sq_cost(x, u) -> np.ndarray:
    """Dense matrix of ``|x_i - u_j|^2``."""
    c = (x * x).sum(1)[:, None] + (u * u).sum(1)[None, :] - 2.0 * x @ u.T
    return np.maximum(c, 0.0)


def _radial_prices(x, u):
    """Warm-start grid prices from a radial quantile potential centred at the sample mean."""
    n = len(x)
    centre = x.mean(axis=0)
    rad = np.sort(np.linalg.norm(x - centre, axis=1))
    levels = (np.arange(n) + 0.5) / n
    s = np.linspace(0.0, 1.0, 2049)
    q = np.interp(s, levels, rad)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (q[1:] + q[:-1]) * np.diff(s))])
    psi = u @ centre + np.interp(np.linalg.norm(u, axis=1), s, cum)
    return (u * u).sum(1) - 2.0 * psi


def _csr(adj: np.ndarray):
    adj = np.sort(adj, axis=1)
    keep = adj >= 0
    keep[:, 1:] &= adj[:, 1:] != adj[:, :-1]
    counts = keep.sum(1)
    indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    return indptr, np.ascontiguousarray(adj[keep], dtype=np.int64)


def _exact_assignment(x, u, k=8, max_rounds=200):
    """Optimal permutation and duals; exact on the complete bipartite graph."""
    n = len(x)
    scale = 1.0 + float(np.max((x * x).sum(1))) + float(np.max((u * u).sum(1)))
    tol = 1e-12 * scale
    g = _radial_prices(x, u)
    f = np.zeros(n)
    col4row = -np.ones(n, dtype=np.int64)
    row4col = -np.ones(n, dtype=np.int64)
    rows = _lap.k_smallest_reduced(x, u, g, k)
    best = rows[:, 0]
    f0 = ((x - u[best]) ** 2).sum(1) - g[best]
    cols = _lap.k_smallest_reduced(u, x, f0, k)
    # transpose column candidates into per-row lists
    col_ids = np.repeat(np.arange(n), cols.shape[1])
    row_ids = cols.ravel()
    order = np.argsort(row_ids, kind="stable")
    row_ids, col_ids = row_ids[order], col_ids[order]
    width = int(np.bincount(row_ids, minlength=n).max())
    by_row = -np.ones((n, width), dtype=np.int64)
    starts = np.searchsorted(row_ids, np.arange(n))
    pos = np.arange(len(row_ids)) - starts[row_ids]
    by_row[row_ids, pos] = col_ids
    # the identity edge guarantees a perfect matching exists
    adj = np.concatenate([rows, by_row, np.arange(n)[:, None]], axis=1)
    for rnd in range(1, max_rounds + 1):
        indptr, indices = _csr(adj)
        _lap.repair_duals(x, u, indptr, indices, f, g, col4row, row4col)
        if not _lap.augment_sparse(x, u, indptr, indices, f, g, col4row, row4col):
            raise NumericError("candidate graph has no perfect matching")
        viol, worst = _lap.worst_violations(x, u, f, g, k, tol)
        log.debug("assignment round %d: min reduced cost %.3e", rnd, worst)
        if viol[:, 0].max() < 0:
            return col4row, f, g, rnd, tol
        adj = np.concatenate([adj, viol], axis=1)
    raise NumericError(f"assignment did not certify optimality within {max_rounds} rounds")


def _lexicographic(x, u, f, g, sigma, tol):
    """Lexicographically smallest optimal permutation.

    Optimal permutations are exactly the perfect matchings of the tight-edge
    graph of any optimal dual pair; rows are fixed greedily in index order,
    rotating alternating cycles through not-yet-fixed rows.
    """
    n = len(sigma)
    indptr, indices = _lap.tight_graph(x, u, f, g, tol)
    if len(indices) == n:
        return sigma
    sigma = sigma.copy()
    owner = np.empty(n, dtype=np.int64)
    owner[sigma] = np.arange(n)
    for i in range(n):
        target = sigma[i]
        nbrs = indices[indptr[i]:indptr[i + 1]]
        for j in np.sort(nbrs[nbrs < target]):
            k0 = owner[j]
            if k0 < i:
                continue
            # search an alternating path from row k0 to column `target` over rows > i
            parent = {k0: None}
            via = {}
            frontier = [k0]
            found = None
            while frontier and found is None:
                nxt = []
                for r in frontier:
                    for c in indices[indptr[r]:indptr[r + 1]]:
                        if c == target:
                            found = r
                            break
                        o = owner[c]
                        if o > i and o not in parent and c != sigma[r]:
                            parent[o] = r
                            via[o] = c
                            nxt.append(o)
                    if found is not None:
                        break
                frontier = nxt
            if found is None:
                continue
            # rotate: found takes target, each row on the path takes its child's column
            r, col = found, target
            while r is not None:
                prev_col = sigma[r]
                sigma[r] = col
                owner[col] = r
                col = prev_col
                r = parent[r]
            sigma[i] = j
            owner[j] = i
            break
    return sigma


def normalize_psi(psi, y, u, origin_mask=None):
    """Shift ``psi`` so that its minimal extension vanishes at the origin.

    With an origin atom this is exactly ``psi(origin) = 0``.
    """
    if origin_mask is not None and origin_mask.any():
        return psi - psi[np.flatnonzero(origin_mask)[0]]
    return psi - np.max(psi - (y * u).sum(1))


def _base_groups(u):
    """Group atoms sharing a base point (origin copies); returns ``gid`` and representatives."""
    _, first, gid = np.unique(u, axis=0, return_index=True, return_inverse=True)
    return gid.reshape(-1).astype(np.int64), first.astype(np.int64)


def _center_root(y, u, origin_mask):
    """Root atom for centering: an origin copy if any (all copies give the same
    result), else the innermost atom whose matched point is nearest the sample mean."""
    if origin_mask is not None and origin_mask.any():
        return int(np.flatnonzero(origin_mask)[0])
    r = np.sqrt((u * u).sum(1))
    inner = np.flatnonzero(r <= r.min() * (1 + 1e-12))
    dist = ((y[inner] - y.mean(0)) ** 2).sum(1)
    return int(inner[np.argmin(dist)])


def center_duals(x, u, sigma, g0, origin_mask=None, K=8, sweeps=2):
    """Replace optimal duals by a point in the relative interior of the dual face.

    The grid potential must satisfy ``psi_j >= psi_b + <y_b, u_j - u_b>`` with
    ``y_b`` the point matched to atom ``b``. Starting from the midpoint of the
    smallest and largest solutions pinned at a root atom, the largest cycle mean
    of the near-tight constraint graph gives a uniform slack that can be
    restored on every non-forced constraint; a minimal lift achieves half of it,
    and two simultaneous midpoint sweeps spread the remaining slack. Every step
    depends on the geometry only, not on atom order, so rotating the data with
    an angle-aligned grid rotates the result. With every
    non-forced constraint slack, the matched atom is the only maximizer at each
    generic sample point. ``f_i + g_sigma(i) = C_i,sigma(i)`` holds throughout.
    """
    n = len(sigma)
    inv = np.empty(n, dtype=np.int64)
    inv[sigma] = np.arange(n)
    y = np.ascontiguousarray(x[inv])
    psi0 = 0.5 * ((u * u).sum(1) - g0)
    psi = _lap.centered_psi(y, u, psi0, _center_root(y, u, origin_mask))
    gid, reps = _base_groups(u)
    if len(reps) > 1:
        k = min(K, n - 1)
        src, slack, rest = _lap.smallest_incoming_slacks(y, u, psi, gid, reps, k)
        lam, _, _ = _lap.howard_sparse(src, -slack, 0.0, 10 * len(reps) + 100)
        if lam < 0.0:
            lift, ok = _lap.minimal_lift(src, slack, -0.5 * lam, len(reps) + 1)
            if ok and lift.max() < rest:
                psi = psi + lift[gid]
        psi = _lap.jacobi_center(y, u, psi, sweeps)
    psi = normalize_psi(psi, y, u, origin_mask)
    g = (u * u).sum(1) - 2.0 * psi
    phi = (x * u[sigma]).sum(1) - psi[sigma]
    f = (x * x).sum(1) - 2.0 * phi
    return f, g


def solve_assignment(data: Dataset, grid: SphericalGrid, *, candidates: int = 8) -> TransportPlan:
    """Exact optimal matching of the sample onto the grid atoms (squared Euclidean cost).

    Ties between optimal permutations are broken lexicographically. Returned
    duals are complementary-slack and centred (see :func:`center_duals`).
    """
    x, u = _as_arrays(data, grid)
    n = len(x)
    if n == 1:
        c = float(((x[0] - u[0]) ** 2).sum())
        return TransportPlan("exact-permutation", np.array([c]), np.array([0.0]), c, assignment=np.array([0]))
    col4row, f, g, rounds, tol = _exact_assignment(x, u, k=candidates)
    sigma = _lexicographic(x, u, f, g, col4row, 100.0 * tol)
    f, g = center_duals(x, u, sigma, g, grid.origin_mask)
    cost = float(((x - u[sigma]) ** 2).sum(1).mean())
    return TransportPlan("exact-permutation", f, g, cost, assignment=sigma, iterations=rounds)


def solve_sinkhorn(data: Dataset, grid: SphericalGrid, epsilon: float, tol: float = 1e-9, max_iter: int = 10000,
                   *, eps_scaling: bool = True) -> TransportPlan:
    """Entropic OT in the log domain with uniform weights ``1/n``.

    The coupling is ``exp((f_i + g_j - C_ij)/eps)``; ``f``/``g`` are in cost units.
    Stops when the L1 row-marginal error (columns are exact after each g-update)
    is at most ``tol``. With ``eps_scaling`` the regularization is annealed
    geometrically from the cost scale down to ``epsilon``, warm-starting the
    duals; this changes only the speed, not the fixed point. ``max_iter`` bounds
    the total number of iterations over all stages.
    """
    if not epsilon > 0:
        raise InvalidArgument("epsilon must be positive")
    x, u = _as_arrays(data, grid)
    n = len(x)
    C = sq_cost(x, u)
    log_w = -np.log(n)
    schedule = [epsilon]
    if eps_scaling:
        e = float(C.max())
        stages = []
        while e > 2.0 * epsilon:
            stages.append(e)
            e *= 0.5
        schedule = stages + [epsilon]
    f = np.zeros(n)
    g = np.zeros(n)
    err = np.inf
    it = 0
    for k, eps in enumerate(schedule):
        last = k == len(schedule) - 1
        target = tol if last else max(tol, 1e-3)
        while it < max_iter:
            it += 1
            f = eps * (log_w - logsumexp((g[None, :] - C) / eps, axis=1))
            g = eps * (log_w - logsumexp((f[:, None] - C) / eps, axis=0))
            rows = np.exp(logsumexp((f[:, None] + g[None, :] - C) / eps, axis=1))
            err = float(np.abs(rows - 1.0 / n).sum())
            if err <= target:
                break
        else:
            raise ConvergenceFailure(f"Sinkhorn did not reach tol={tol} in {max_iter} iterations", err, max_iter)
    origin = np.flatnonzero(grid.origin_mask)
    if origin.size:
        shift = g[origin[0]]
        g = g - shift
        f = f + shift
    P = np.exp((f[:, None] + g[None, :] - C) / epsilon)
    cost = float((P * C).sum())
    return TransportPlan("dense-coupling", f, g, cost, coupling=P, iterations=it, marginal_error=err, meta={"epsilon": epsilon})


def round_coupling(plan: TransportPlan) -> np.ndarray:
    """Permutation obtained by an exact assignment on the negated coupling."""
    from scipy.optimize import linear_sum_assignment

    if plan.coupling is None:
        raise UnsupportedPlanKind("rounding requires a dense coupling")
    _, cols = linear_sum_assignment(-plan.coupling)
    return cols


@numba.njit(cache=True)
def _cycle_scan(S, k, tol):
    n = S.shape[0]
    count = 0
    worst = 0.0
    wa, wb, wc = -1, -1, -1
    for a in range(n):
        for b in range(a + 1, n):
            v = S[a, b] + S[b, a]
            if v < -tol:
                count += 1
            if v < worst:
                worst, wa, wb, wc = v, a, b, -1
    if k >= 3:
        for a in range(n):
            for b in range(a + 1, n):
                for c in range(a + 1, n):
                    if c == b:
                        continue
                    v = S[a, b] + S[b, c] + S[c, a]
                    if v < -tol:
                        count += 1
                    if v < worst:
                        worst, wa, wb, wc = v, a, b, c
    return count, -worst, wa, wb, wc


def verify_cyclical_monotonicity(plan: TransportPlan, data: Dataset, grid: SphericalGrid, k: int = 3, tol: float = 1e-9) -> dict:
    """Exhaustive check of all reassignment cycles of length <= k.

    A cycle ``i_1 -> ... -> i_m -> i_1`` violates monotonicity when
    ``sum_t <x_{i_t}, u_{s(i_t)} - u_{s(i_{t+1})}> < -tol``, i.e. rotating the
    matched atoms along it would lower the total cost.
    """
    if not plan.is_exact:
        raise UnsupportedPlanKind("cyclical monotonicity audit requires an exact permutation plan")
    if k not in (2, 3):
        raise InvalidArgument("cycle length must be 2 or 3")
    x, u = _as_arrays(data, grid)
    um = u[plan.assignment]
    inner = x @ um.T  # inner[a, b] = <x_a, u_s(b)>
    S = np.diag(inner)[:, None] - inner
    count, margin, a, b, c = _cycle_scan(np.ascontiguousarray(S), k, tol)
    worst = [int(i) for i in (a, b, c) if i >= 0]
    return {"violations": int(count), "worst_margin": float(max(margin, 0.0)), "worst_cycle": worst, "k": k, "tol": tol}


def duality_gap(plan: TransportPlan, data: Dataset, grid: SphericalGrid) -> float:
    """Primal cost minus dual objective, both averaged over ``n``."""
    return float(plan.cost - (plan.f.mean() + plan.g.mean()))


def dual_feasibility(plan: TransportPlan, data: Dataset, grid: SphericalGrid) -> float:
    """Smallest reduced cost ``C_ij - f_i - g_j`` over all pairs."""
    x, u = _as_arrays(data, grid)
    _, worst = _lap.worst_violations(x, u, plan.f, plan.g, 1, np.inf)
    return float(worst)
