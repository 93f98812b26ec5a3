"""Exact evaluation of max-affine functions ``q -> max_j <S_j, q> - c_j`` with tie reporting.

Above a size threshold the slopes are grouped into direction buckets and whole
buckets are skipped when an upper bound proves they cannot reach the running
maximum; the result is identical to the full scan.
"""

import numpy as np
from numba import njit

from .reference import sphere_directions

MAX_TIES = 16


@njit(cache=True)
def _record(S, j, best_idx, nties):
    # keep distinct slope locations only
    for t in range(min(nties, best_idx.shape[0])):
        same = True
        for k in range(S.shape[1]):
            if S[best_idx[t], k] != S[j, k]:
                same = False
                break
        if same:
            return nties
    if nties < best_idx.shape[0]:
        best_idx[nties] = j
    return nties + 1


@njit(cache=True)
def _scan(S, c, q, members, lo, hi, vals):
    d = S.shape[1]
    best = -np.inf
    for t in range(lo, hi):
        j = members[t]
        s = 0.0
        for k in range(d):
            s += S[j, k] * q[k]
        v = s - c[j]
        vals[t] = v
        if v > best:
            best = v
    return best


@njit(cache=True)
def eval_dense(S, c, Q, atol):
    m = Q.shape[0]
    n = S.shape[0]
    values = np.empty(m)
    idx = -np.ones((m, MAX_TIES), dtype=np.int64)
    ndistinct = np.zeros(m, dtype=np.int64)
    members = np.arange(n)
    vals = np.empty(n)
    for i in range(m):
        best = _scan(S, c, Q[i], members, 0, n, vals)
        values[i] = best
        cnt = 0
        for j in range(n):
            if vals[j] >= best - atol:
                cnt = _record(S, j, idx[i], cnt)
        ndistinct[i] = cnt
    return values, idx, ndistinct


@njit(cache=True)
def eval_bucketed(S, c, Q, atol, ptr, members, centres, amin, amax, rho, cmin):
    m = Q.shape[0]
    nb = centres.shape[0]
    d = S.shape[1]
    values = np.empty(m)
    idx = -np.ones((m, MAX_TIES), dtype=np.int64)
    ndistinct = np.zeros(m, dtype=np.int64)
    vals = np.empty(members.shape[0])
    ub = np.empty(nb)
    for i in range(m):
        q = Q[i]
        qn = 0.0
        for k in range(d):
            qn += q[k] * q[k]
        qn = np.sqrt(qn)
        for b in range(nb):
            cq = 0.0
            for k in range(d):
                cq += centres[b, k] * q[k]
            ub[b] = max(amin[b] * cq, amax[b] * cq) + rho[b] * qn - cmin[b]
            # guard against rounding in the bound itself
            ub[b] += 1e-12 * (abs(ub[b]) + 1.0)
        order = np.argsort(-ub)
        best = -np.inf
        last = 0
        for t in range(nb):
            b = order[t]
            if ub[b] < best - atol:
                break
            v = _scan(S, c, q, members, ptr[b], ptr[b + 1], vals)
            if v > best:
                best = v
            last = t + 1
        values[i] = best
        cnt = 0
        for t in range(last):
            b = order[t]
            for e in range(ptr[b], ptr[b + 1]):
                if vals[e] >= best - atol:
                    cnt = _record(S, members[e], idx[i], cnt)
        ndistinct[i] = cnt
    return values, idx, ndistinct


class MaxAffine:
    """``q -> max_j <slopes_j, q> - offsets_j``; buckets are built lazily above ``prune_above``."""

    prune_above = 10_000

    def __init__(self, slopes, offsets, atol=1e-10):
        self.S = np.ascontiguousarray(slopes, dtype=float)
        self.c = np.ascontiguousarray(offsets, dtype=float)
        self.atol = atol
        self._buckets = None

    @property
    def n(self):
        return len(self.c)

    def _build_buckets(self):
        n, d = self.S.shape
        norms = np.linalg.norm(self.S, axis=1)
        if d == 1:
            labels = (self.S[:, 0] >= 0).astype(np.int64)
            centres = np.array([[-1.0], [1.0]])
        else:
            nb = max(2, int(np.sqrt(n)))
            centres = sphere_directions(nb, d, seed=0)
            dirs = np.where(norms[:, None] > 0, self.S / np.where(norms > 0, norms, 1.0)[:, None], centres[0])
            labels = np.argmax(dirs @ centres.T, axis=1)
        order = np.argsort(labels, kind="stable")
        counts = np.bincount(labels, minlength=len(centres))
        keep = counts > 0
        centres = centres[keep]
        counts = counts[keep]
        ptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        members = order.astype(np.int64)
        nb = len(centres)
        amin = np.empty(nb)
        amax = np.empty(nb)
        rho = np.empty(nb)
        cmin = np.empty(nb)
        for b in range(nb):
            sl = members[ptr[b]:ptr[b + 1]]
            alpha = self.S[sl] @ centres[b]
            perp = self.S[sl] - alpha[:, None] * centres[b]
            amin[b] = alpha.min()
            amax[b] = alpha.max()
            rho[b] = np.linalg.norm(perp, axis=1).max() if d > 1 else 0.0
            cmin[b] = self.c[sl].min()
        self._buckets = (ptr, members, np.ascontiguousarray(centres), amin, amax, rho, cmin)

    def evaluate(self, Q, prune=None):
        """Return ``(values, achiever_index_table, n_distinct_achievers)`` for queries ``Q`` (m, d)."""
        Q = np.ascontiguousarray(np.atleast_2d(Q), dtype=float)
        if prune is None:
            prune = self.n > self.prune_above
        if not prune:
            return eval_dense(self.S, self.c, Q, self.atol)
        if self._buckets is None:
            self._build_buckets()
        return eval_bucketed(self.S, self.c, Q, self.atol, *self._buckets)

    def averaged_argmax(self, Q, prune=None):
        """Average of the distinct maximizing slopes and a multiplicity flag per query."""
        values, idx, cnt = self.evaluate(Q, prune)
        first = self.S[idx[:, 0]]
        out = first.copy()
        multi = cnt > 1
        for i in np.flatnonzero(multi):
            sel = idx[i][idx[i] >= 0]
            out[i] = self.S[sel].mean(axis=0)
        return out, multi, values
