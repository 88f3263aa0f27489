"""Slow, loop-based re-implementations used as oracles for the compiled engine."""

import itertools

import numpy as np


def knapsack_bruteforce(items: dict, budget: float, eps: float = 1e-9):
    """All subsets; returns (best value, lexicographically smallest optimal tuple)."""
    keys = sorted(items)
    best_val, best = -1.0, ()
    for r in range(len(keys) + 1):
        for combo in itertools.combinations(keys, r):
            if sum(items[i][1] for i in combo) > budget + eps:
                continue
            val = sum(items[i][0] for i in combo)
            if val > best_val + 1e-12 or (abs(val - best_val) <= 1e-12 and combo < best):
                best_val, best = val, combo
    return best_val, best


def diffuse_reference(adj, costs, utils, w, resource, thresholds, seed_sets, reevaluate, max_epochs):
    """Synchronous diffusion written directly from the model's rules.

    ``adj`` is a list of neighbor lists; ``seed_sets`` a list of node sets
    per behavior. Returns (final list of per-node sets, epochs, converged).
    """
    n, k = len(adj), len(costs)
    held = [set() for _ in range(n)]
    for i, s in enumerate(seed_sets):
        for v in s:
            held[v].add(i)
    for epoch in range(1, max_epochs + 1):
        nxt = []
        for v in range(n):
            d = len(adj[v])
            sig = [sum(1 for u in adj[v] if i in held[u]) / d if d else 0.0 for i in range(k)]
            spent = sum(costs[i] for i in held[v])
            budget = resource[v] if reevaluate else resource[v] - spent
            cand = {}
            for i in range(k):
                if costs[i] > budget + 1e-9:
                    continue
                if i in held[v]:
                    if reevaluate:
                        cand[i] = (w * utils[i] + (1 - w) * sig[i], costs[i])
                    continue
                if sig[i] > 0 and sig[i] >= thresholds[v][i]:
                    cand[i] = (w * utils[i] + (1 - w) * sig[i], costs[i])
            if not cand and not reevaluate:
                nxt.append(set(held[v]))
                continue
            _, pick = knapsack_bruteforce(cand, budget)
            nxt.append(set(pick) if reevaluate else held[v] | set(pick))
        if nxt == held:
            return held, epoch - 1, True
        held = nxt
    return held, max_epochs, False


def adjacency(g):
    return [list(g.neighbors(v)) for v in range(g.node_count)]


def participation(held) -> int:
    return sum(1 for s in held if s)


def utilization(held, costs, resource) -> float:
    return sum(costs[i] for s in held for i in s) / float(np.sum(resource))
