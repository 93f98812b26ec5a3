"""Numba kernels for the square assignment problem with squared Euclidean cost.

Costs are never materialized; ``|x_i - u_j|^2`` is recomputed from coordinates.
The solver works on a sparse candidate graph (CSR) and is made exact on the full
bipartite graph by repeatedly adding dual-violating edges until none remain.
"""

import numpy as np
from numba import njit


@njit(cache=True, inline="always")
def _sqdist(x, u, i, j):
    s = 0.0
    for k in range(x.shape[1]):
        t = x[i, k] - u[j, k]
        s += t * t
    return s


@njit(cache=True)
def _heap_push(hk, hv, size, key, val):
    pos = size
    hk[pos] = key
    hv[pos] = val
    while pos > 0:
        parent = (pos - 1) >> 1
        if hk[parent] <= hk[pos]:
            break
        hk[parent], hk[pos] = hk[pos], hk[parent]
        hv[parent], hv[pos] = hv[pos], hv[parent]
        pos = parent
    return size + 1


@njit(cache=True)
def _heap_pop(hk, hv, size):
    key = hk[0]
    val = hv[0]
    size -= 1
    hk[0] = hk[size]
    hv[0] = hv[size]
    pos = 0
    while True:
        left = 2 * pos + 1
        if left >= size:
            break
        child = left
        if left + 1 < size and hk[left + 1] < hk[left]:
            child = left + 1
        if hk[pos] <= hk[child]:
            break
        hk[pos], hk[child] = hk[child], hk[pos]
        hv[pos], hv[child] = hv[child], hv[pos]
        pos = child
    return key, val, size


@njit(cache=True)
def augment_sparse(x, u, indptr, indices, f, g, col4row, row4col):
    """Match every free row by shortest augmenting paths on the CSR graph.

    ``f``/``g`` must be feasible on the graph and tight on the current partial
    matching; they are updated in place. Returns False if some row cannot be
    matched (the graph has no perfect matching).
    """
    n = x.shape[0]
    spc = np.full(n, np.inf)
    path = -np.ones(n, dtype=np.int64)
    in_sc = np.zeros(n, dtype=np.bool_)
    sr_list = np.empty(n, dtype=np.int64)
    sc_list = np.empty(n, dtype=np.int64)
    touched = np.empty(n, dtype=np.int64)
    cap = indices.shape[0] + n + 1
    hk = np.empty(cap)
    hv = np.empty(cap, dtype=np.int64)
    for cur in range(n):
        if col4row[cur] != -1:
            continue
        nsr = 0
        nsc = 0
        ntouch = 0
        hsize = 0
        minval = 0.0
        i = cur
        sink = -1
        while sink == -1:
            sr_list[nsr] = i
            nsr += 1
            fi = f[i]
            for e in range(indptr[i], indptr[i + 1]):
                j = indices[e]
                if in_sc[j]:
                    continue
                r = minval + _sqdist(x, u, i, j) - fi - g[j]
                if r < spc[j]:
                    if spc[j] == np.inf:
                        touched[ntouch] = j
                        ntouch += 1
                    spc[j] = r
                    path[j] = i
                    hsize = _heap_push(hk, hv, hsize, r, j)
            j = -1
            while hsize > 0:
                key, cand, hsize = _heap_pop(hk, hv, hsize)
                if not in_sc[cand] and key == spc[cand]:
                    j = cand
                    break
            if j == -1:
                for t in range(ntouch):
                    spc[touched[t]] = np.inf
                    path[touched[t]] = -1
                for t in range(nsc):
                    in_sc[sc_list[t]] = False
                return False
            minval = spc[j]
            in_sc[j] = True
            sc_list[nsc] = j
            nsc += 1
            if row4col[j] == -1:
                sink = j
            else:
                i = row4col[j]
        f[cur] += minval
        for t in range(nsr):
            i = sr_list[t]
            if i != cur:
                f[i] += minval - spc[col4row[i]]
        for t in range(nsc):
            j = sc_list[t]
            g[j] -= minval - spc[j]
        j = sink
        while True:
            i = path[j]
            row4col[j] = i
            tmp = col4row[i]
            col4row[i] = j
            j = tmp
            if i == cur:
                break
        for t in range(ntouch):
            spc[touched[t]] = np.inf
            path[touched[t]] = -1
        for t in range(nsc):
            in_sc[sc_list[t]] = False
    return True


@njit(cache=True)
def _topk_insert(keys, vals, cnt, k, key, val):
    """Insert into ascending buffers of capacity ``k``; returns the new count."""
    if cnt == k and key >= keys[k - 1]:
        return cnt
    pos = cnt if cnt < k else k - 1
    while pos > 0 and keys[pos - 1] > key:
        keys[pos] = keys[pos - 1]
        vals[pos] = vals[pos - 1]
        pos -= 1
    keys[pos] = key
    vals[pos] = val
    return cnt + 1 if cnt < k else k


@njit(cache=True)
def k_smallest_reduced(x, u, g, k):
    """Per row, the ``k`` columns with smallest ``|x_i - u_j|^2 - g_j``."""
    n = x.shape[0]
    m = u.shape[0]
    k = min(k, m)
    out = np.empty((n, k), dtype=np.int64)
    keys = np.empty(k)
    vals = np.empty(k, dtype=np.int64)
    for i in range(n):
        cnt = 0
        for j in range(m):
            cnt = _topk_insert(keys, vals, cnt, k, _sqdist(x, u, i, j) - g[j], j)
        out[i, :] = vals
    return out


@njit(cache=True)
def worst_violations(x, u, f, g, k, tol):
    """Per row, up to ``k`` columns with ``C_ij - f_i - g_j < -tol`` (most violated first).

    Returns the (n, k) index array padded with -1 and the global minimum reduced cost.
    """
    n = x.shape[0]
    out = -np.ones((n, k), dtype=np.int64)
    keys = np.empty(k)
    vals = np.empty(k, dtype=np.int64)
    worst = np.inf
    for i in range(n):
        cnt = 0
        for j in range(n):
            r = _sqdist(x, u, i, j) - f[i] - g[j]
            if r < worst:
                worst = r
            if r < -tol:
                cnt = _topk_insert(keys, vals, cnt, k, r, j)
        for t in range(cnt):
            out[i, t] = vals[t]
    return out, worst


@njit(cache=True)
def repair_duals(x, u, indptr, indices, f, g, col4row, row4col):
    """Make ``f`` feasible on the graph; unmatch rows whose edge is no longer tight."""
    n = x.shape[0]
    for i in range(n):
        best = np.inf
        for e in range(indptr[i], indptr[i + 1]):
            j = indices[e]
            r = _sqdist(x, u, i, j) - g[j]
            if r < best:
                best = r
        f[i] = best
        j = col4row[i]
        if j != -1 and _sqdist(x, u, i, j) - g[j] > best:
            col4row[i] = -1
            row4col[j] = -1


@njit(cache=True)
def tight_graph(x, u, f, g, tol):
    """CSR adjacency of edges with reduced cost ``<= tol``."""
    n = x.shape[0]
    counts = np.zeros(n + 1, dtype=np.int64)
    for i in range(n):
        for j in range(n):
            if _sqdist(x, u, i, j) - f[i] - g[j] <= tol:
                counts[i + 1] += 1
    indptr = np.cumsum(counts)
    indices = np.empty(indptr[n], dtype=np.int64)
    for i in range(n):
        p = indptr[i]
        for j in range(n):
            if _sqdist(x, u, i, j) - f[i] - g[j] <= tol:
                indices[p] = j
                p += 1
    return indptr, indices


@njit(cache=True)
def _dijkstra_dense(y, u, pot, root, reverse):
    """Shortest paths from (or, if ``reverse``, to) ``root`` on the complete atom graph.

    Edge ``b -> j`` has cost ``-<y_b, u_j - u_b>``; ``pot`` is a feasible potential
    (``pot_j >= pot_b + <y_b, u_j - u_b>``) used for Johnson reweighting.
    Returns true distances.
    """
    n = u.shape[0]
    d = u.shape[1]
    dist = np.full(n, np.inf)
    done = np.zeros(n, dtype=np.bool_)
    dist[root] = 0.0
    for _ in range(n):
        b = -1
        best = np.inf
        for j in range(n):
            if not done[j] and dist[j] < best:
                best = dist[j]
                b = j
        if b == -1:
            break
        done[b] = True
        for j in range(n):
            if done[j]:
                continue
            s = 0.0
            if reverse:
                # edge j -> b
                for k in range(d):
                    s += y[j, k] * (u[b, k] - u[j, k])
                w = -s - pot[j] + pot[b]
            else:
                for k in range(d):
                    s += y[b, k] * (u[j, k] - u[b, k])
                w = -s - pot[b] + pot[j]
            if w < 0.0:
                w = 0.0
            cand = best + w
            if cand < dist[j]:
                dist[j] = cand
    # undo the reweighting: reduced length = true length + pot_end - pot_start
    # where reduced cost of b->j is c_bj - pot_b + pot_j
    out = np.empty(n)
    for j in range(n):
        if reverse:
            out[j] = dist[j] - pot[root] + pot[j]
        else:
            out[j] = dist[j] - pot[j] + pot[root]
    return out


@njit(cache=True)
def centered_psi(y, u, psi0, root):
    """Midpoint of the smallest and largest potentials agreeing with ``psi0`` at ``root``.

    The feasible set is ``psi_j >= psi_b + <y_b, u_j - u_b>`` for all ``b, j``.
    """
    lo = -_dijkstra_dense(y, u, psi0, root, False)
    hi = _dijkstra_dense(y, u, psi0, root, True)
    return 0.5 * (lo + hi) + psi0[root]


@njit(cache=True)
def first_tight_pair(y, u, psi, thr):
    """Number of off-diagonal pairs with ``psi_j - psi_b - <y_b, u_j - u_b> <= thr`` and the first one.

    Pairs whose bases coincide are skipped (their constraints are forced both ways).
    """
    n = u.shape[0]
    d = u.shape[1]
    count = 0
    fb, fj = -1, -1
    for b in range(n):
        for j in range(n):
            if j == b:
                continue
            s = 0.0
            same = True
            for k in range(d):
                diff = u[j, k] - u[b, k]
                if diff != 0.0:
                    same = False
                s += y[b, k] * diff
            if same:
                continue
            if psi[j] - psi[b] - s <= thr:
                if count == 0:
                    fb, fj = b, j
                count += 1
    return count, fb, fj


@njit(cache=True)
def jacobi_center(y, u, psi, sweeps):
    """Move every ``psi_j`` simultaneously to the middle of its feasible interval.

    With ``m_in``/``m_out`` the smallest incoming/outgoing slacks of a node, the
    step is ``(m_out - m_in)/2``; the new slack of an edge ``b -> j`` is at least
    ``(m_out_j + m_in_b)/2``, so feasibility and the smallest slack are kept.
    The update does not depend on the order of the atoms.
    """
    n = u.shape[0]
    d = u.shape[1]
    lo = np.empty(n)
    hi = np.empty(n)
    for _ in range(sweeps):
        for j in range(n):
            a = -np.inf
            c = np.inf
            for b in range(n):
                if b == j:
                    continue
                s_in = 0.0
                s_out = 0.0
                for k in range(d):
                    s_in += y[b, k] * (u[j, k] - u[b, k])
                    s_out += y[j, k] * (u[b, k] - u[j, k])
                v = psi[b] + s_in
                if v > a:
                    a = v
                v = psi[b] - s_out
                if v < c:
                    c = v
            lo[j] = a
            hi[j] = c
        for j in range(n):
            if hi[j] > lo[j]:
                psi[j] = 0.5 * (lo[j] + hi[j])
    return psi


@njit(cache=True)
def smallest_incoming_slacks(y, u, psi, gid, reps, K):
    """For each group ``J`` (representative atom ``reps[J]``), the ``K`` smallest
    constraint slacks ``psi_j - psi_b - <y_b, u_j - u_b>`` over atoms ``b`` in
    other groups. Returns source groups, slacks, and the smallest slack left out.
    """
    m = reps.shape[0]
    n = u.shape[0]
    d = u.shape[1]
    src = np.full((m, K), -1, dtype=np.int64)
    val = np.full((m, K), np.inf)
    rest = np.inf
    for J in range(m):
        j = reps[J]
        cut = np.inf
        for b in range(n):
            if gid[b] == J:
                continue
            s = 0.0
            for k in range(d):
                s += y[b, k] * (u[j, k] - u[b, k])
            sl = psi[j] - psi[b] - s
            if sl < val[J, K - 1]:
                if val[J, K - 1] < cut:
                    cut = val[J, K - 1]
                t = K - 1
                while t > 0 and val[J, t - 1] > sl:
                    val[J, t] = val[J, t - 1]
                    src[J, t] = src[J, t - 1]
                    t -= 1
                val[J, t] = sl
                src[J, t] = gid[b]
            elif sl < cut:
                cut = sl
        if cut < rest:
            rest = cut
    return src, val, rest


@njit(cache=True)
def howard_sparse(src, w, eps, max_iter):
    """Largest cycle mean by policy iteration on a graph given by incoming edge
    lists: ``src[J, t] -> J`` with weight ``w[J, t]`` (``src = -1`` pads).

    Returns ``(lam, x, iterations)`` with ``x_J >= x_B + w(B, J) - lam`` on
    every listed edge.
    """
    m, K = src.shape
    x = np.zeros(m)
    eta = np.zeros(m)
    pol = np.zeros(m, dtype=np.int64)  # slot index into the incoming list
    for j in range(m):
        best = -np.inf
        for t in range(K):
            if src[j, t] >= 0 and w[j, t] > best:
                best = w[j, t]
                pol[j] = t
    mark = np.empty(m, dtype=np.int64)
    path = np.empty(m, dtype=np.int64)
    it = 0
    while it < max_iter:
        it += 1
        mark[:] = -1
        for start in range(m):
            if mark[start] != -1:
                continue
            L = 0
            k = start
            while mark[k] == -1:
                mark[k] = start
                path[L] = k
                L += 1
                k = src[k, pol[k]]
            if mark[k] == start:
                pos = 0
                while path[pos] != k:
                    pos += 1
                tot = 0.0
                for i in range(pos, L):
                    tot += w[path[i], pol[path[i]]]
                mu = tot / (L - pos)
                for i in range(L - 1, pos, -1):
                    c = path[i]
                    eta[c] = mu
                    x[c] = w[c, pol[c]] - mu + x[src[c, pol[c]]]
                eta[k] = mu
                tail = pos
            else:
                tail = L
            for i in range(tail - 1, -1, -1):
                c = path[i]
                p = src[c, pol[c]]
                eta[c] = eta[p]
                x[c] = w[c, pol[c]] - eta[p] + x[p]
        changed = False
        for j in range(m):
            best_eta = eta[j]
            arg = -1
            best_v = -np.inf
            for t in range(K):
                b = src[j, t]
                if b < 0:
                    continue
                if eta[b] > best_eta + eps:
                    best_eta = eta[b]
                    arg = t
                    best_v = w[j, t] + x[b]
                elif arg >= 0 and eta[b] >= best_eta - eps and w[j, t] + x[b] > best_v:
                    best_v = w[j, t] + x[b]
                    arg = t
            if arg >= 0:
                pol[j] = arg
                changed = True
        if not changed:
            for j in range(m):
                best_v = x[j] + eps
                arg = -1
                for t in range(K):
                    b = src[j, t]
                    if b < 0:
                        continue
                    v = w[j, t] - eta[b] + x[b]
                    if v > best_v:
                        best_v = v
                        arg = t
                if arg >= 0:
                    pol[j] = arg
                    changed = True
        if not changed:
            break
    lam = -np.inf
    for j in range(m):
        if eta[j] > lam:
            lam = eta[j]
    return lam, x, it


@njit(cache=True)
def minimal_lift(src, slack, delta, max_pass):
    """Smallest ``D >= 0`` with ``slack + D_J - D_B >= delta`` on every listed edge.

    Longest-path label correction; terminates when ``delta`` is below the
    smallest cycle mean of the slacks. Returns ``(D, converged)``.
    """
    m, K = src.shape
    D = np.zeros(m)
    for _ in range(max_pass):
        changed = False
        for j in range(m):
            for t in range(K):
                b = src[j, t]
                if b < 0:
                    continue
                need = D[b] + delta - slack[j, t]
                if need > D[j]:
                    D[j] = need
                    changed = True
        if not changed:
            return D, True
    return D, False
