"""Compiled inner loops for the diffusion engine.

Graphs arrive as CSR arrays of *influencer* lists: ``indices[indptr[v]:indptr[v+1]]``
are the nodes whose adoptions ``v`` observes. For undirected graphs that is
the neighbor list; the directed regular harness passes in-neighbor lists.
Behavior sets are bitmasks over ``k <= 20`` behaviors.
"""

import numba
import numpy as np
from numba import njit, prange

# prefer OpenMP: the bundled TBB is often too old and numba warns when it probes it
numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

COST_EPS = 1e-9
VALUE_EPS = 1e-12


@njit(cache=True)
def best_subset(cand, budget, pay, mcost, lex, k):
    """Lexicographically smallest payoff-maximizing affordable subset of ``cand``."""
    if cand == 0:
        return 0
    best = -1.0
    for idx in range(lex.shape[0]):
        m = lex[idx]
        if m & ~cand:
            continue
        if mcost[m] > budget + COST_EPS:
            continue
        val = 0.0
        for i in range(k):
            if m >> i & 1:
                val += pay[i]
        if val > best:
            best = val
    for idx in range(lex.shape[0]):
        m = lex[idx]
        if m & ~cand:
            continue
        if mcost[m] > budget + COST_EPS:
            continue
        val = 0.0
        for i in range(k):
            if m >> i & 1:
                val += pay[i]
        if val >= best - VALUE_EPS:
            return m
    return 0


@njit(cache=True)
def _mask_cost(m, costs, k):
    s = 0.0
    for i in range(k):
        if m >> i & 1:
            s += costs[i]
    return s


@njit(cache=True)
def diffuse_one(indptr, indices, costs, utils, w, resource, thresholds, init_mask,
                reevaluate, max_epochs, mcost, lex, live, first_change):
    """One synchronous run.

    ``init_mask[v]`` holds the seeded behaviors of ``v``. When ``live`` has
    any column (shape ``(n, k)``, entry ``-1`` for no edge) the live-edge
    process replaces the threshold test. ``first_change`` (shape ``(n, k)``)
    receives the epoch at which ``v`` first held behavior ``i`` (0 for seeds,
    -1 never).

    Returns ``(final_mask, last_change_epoch, converged)``.
    """
    n = resource.shape[0]
    k = costs.shape[0]
    use_live = live.shape[1] > 0
    mask = init_mask.copy()
    counts = np.zeros((n, k), dtype=np.int64)
    for v in range(n):
        for i in range(k):
            first_change[v, i] = 0 if (mask[v] >> i & 1) else -1
    # counts[v, i]: influencers of v currently holding i
    for v in range(n):
        for p in range(indptr[v], indptr[v + 1]):
            u = indices[p]
            m = mask[u]
            if m == 0:
                continue
            for i in range(k):
                if m >> i & 1:
                    counts[v, i] += 1

    # out-lists (who observes u) for incremental count updates
    outdeg = np.zeros(n + 1, dtype=np.int64)
    for v in range(n):
        for p in range(indptr[v], indptr[v + 1]):
            outdeg[indices[p] + 1] += 1
    outptr = np.cumsum(outdeg)
    outidx = np.empty(indices.shape[0], dtype=np.int64)
    fill = outptr[:-1].copy()
    for v in range(n):
        for p in range(indptr[v], indptr[v + 1]):
            u = indices[p]
            outidx[fill[u]] = v
            fill[u] += 1

    pay = np.empty(k)
    new_mask = mask.copy()
    flag = np.zeros(n, dtype=np.bool_)
    frontier = np.empty(n, dtype=np.int64)
    changed = np.empty(n, dtype=np.int64)
    nf = 0
    if reevaluate:
        for v in range(n):
            frontier[nf] = v
            nf += 1
    else:
        for u in range(n):
            if mask[u] == 0:
                continue
            for p in range(outptr[u], outptr[u + 1]):
                v = outidx[p]
                if not flag[v]:
                    flag[v] = True
                    frontier[nf] = v
                    nf += 1
        for j in range(nf):
            flag[frontier[j]] = False

    last = 0
    converged = False
    epoch = 0
    while epoch < max_epochs:
        epoch += 1
        nc = 0
        for j in range(nf):
            v = frontier[j]
            deg = indptr[v + 1] - indptr[v]
            if deg == 0 and not reevaluate:
                continue
            held = mask[v]
            if reevaluate:
                budget = resource[v]
            else:
                budget = resource[v] - _mask_cost(held, costs, k)
            cand = 0
            for i in range(k):
                if costs[i] > budget + COST_EPS:
                    continue
                if held >> i & 1:
                    if reevaluate:
                        cand |= 1 << i
                    continue
                c = counts[v, i]
                if c == 0:
                    continue
                if use_live:
                    src = live[v, i]
                    if src < 0 or not (mask[src] >> i & 1):
                        continue
                else:
                    if c / deg < thresholds[v, i]:
                        continue
                cand |= 1 << i
            if cand == 0 and not reevaluate:
                continue
            for i in range(k):
                l = counts[v, i] / deg if deg > 0 else 0.0
                pay[i] = w * utils[i] + (1.0 - w) * l
            pick = best_subset(cand, budget, pay, mcost, lex, k)
            nm = pick if reevaluate else (held | pick)
            if nm != held:
                new_mask[v] = nm
                changed[nc] = v
                nc += 1
        if nc == 0:
            converged = True
            break
        last = epoch
        # apply changes synchronously and build the next frontier
        nf = 0
        for j in range(nc):
            u = changed[j]
            old = mask[u]
            nm = new_mask[u]
            for i in range(k):
                was = old >> i & 1
                now = nm >> i & 1
                if was == now:
                    continue
                if now and first_change[u, i] < 0:
                    first_change[u, i] = epoch
                d = 1 if now else -1
                for p in range(outptr[u], outptr[u + 1]):
                    counts[outidx[p], i] += d
            mask[u] = nm
        for j in range(nc):
            u = changed[j]
            if reevaluate and not flag[u]:
                flag[u] = True
                frontier[nf] = u
                nf += 1
            for p in range(outptr[u], outptr[u + 1]):
                v = outidx[p]
                if not flag[v]:
                    flag[v] = True
                    frontier[nf] = v
                    nf += 1
        for j in range(nf):
            flag[frontier[j]] = False
    return mask, last, converged


@njit(cache=True, parallel=True)
def diffuse_batch(indptr, indices, costs, utils, w, resource, thresholds, init_mask,
                  reevaluate, max_epochs, mcost, lex):
    """Independent runs, one per leading slice of ``thresholds`` (``(R, n, k)``).

    Returns per-run participation, adoption, total spend, last change epoch
    and convergence flag.
    """
    R = thresholds.shape[0]
    n = resource.shape[0]
    k = costs.shape[0]
    part = np.zeros(R, dtype=np.int64)
    adopt = np.zeros(R, dtype=np.int64)
    spend = np.zeros(R)
    epochs = np.zeros(R, dtype=np.int64)
    conv = np.zeros(R, dtype=np.bool_)
    no_live = np.empty((0, 0), dtype=np.int64)
    for r in prange(R):
        fc = np.empty((n, k), dtype=np.int64)
        mask, last, ok = diffuse_one(indptr, indices, costs, utils, w, resource,
                                     thresholds[r], init_mask, reevaluate, max_epochs,
                                     mcost, lex, no_live, fc)
        p = 0
        a = 0
        s = 0.0
        for v in range(n):
            m = mask[v]
            if m != 0:
                p += 1
                for i in range(k):
                    if m >> i & 1:
                        a += 1
                        s += costs[i]
        part[r] = p
        adopt[r] = a
        spend[r] = s
        epochs[r] = last
        conv[r] = ok
    return part, adopt, spend, epochs, conv


@njit(cache=True)
def live_edge_batch(indptr, indices, costs, utils, w, resource, kap, init_mask,
                    max_epochs, mcost, lex, draws):
    """Live-edge runs; ``draws`` (``(R, n, k)`` uniforms) choose each node's edges.

    Node ``v`` draws one in-edge for each behavior ``i < kap[v]``; with
    weights ``1/|N(v)|`` summing to one the draw is a uniform neighbor.
    Returns per-run participation.
    """
    R = draws.shape[0]
    n = resource.shape[0]
    k = costs.shape[0]
    part = np.zeros(R, dtype=np.int64)
    thr = np.zeros((n, k))
    live = np.empty((n, k), dtype=np.int64)
    fc = np.empty((n, k), dtype=np.int64)
    for r in range(R):
        for v in range(n):
            deg = indptr[v + 1] - indptr[v]
            for i in range(k):
                if i < kap[v] and deg > 0:
                    j = int(draws[r, v, i] * deg)
                    if j >= deg:
                        j = deg - 1
                    live[v, i] = indices[indptr[v] + j]
                else:
                    live[v, i] = -1
        mask, last, ok = diffuse_one(indptr, indices, costs, utils, w, resource, thr,
                                     init_mask, False, max_epochs, mcost, lex, live, fc)
        p = 0
        for v in range(n):
            if mask[v] != 0:
                p += 1
        part[r] = p
    return part
