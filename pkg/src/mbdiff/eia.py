"""Exact one-epoch adoption probabilities and expected immediate adoption."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from . import _kernels
from .behavior import (
    MATCHED,
    BehaviorSet,
    ModelParams,
    lex_mask_order,
    mask_costs,
    select_adoption_set,
)

DEFAULT_SUBSET_CAP = 20


class EnumerationCapError(RuntimeError):
    pass


@dataclass(frozen=True)
class NodeContext:
    """What a node sees at the start of an epoch.

    ``signals[i]`` is the fraction of neighbors holding behavior ``i``;
    ``held`` are behaviors the node already has (always considered).
    """

    budget: float
    held: frozenset[int]
    signals: tuple[float, ...]


@dataclass(frozen=True)
class Branch:
    probability: float
    considered: frozenset[int]
    selected: frozenset[int]


@dataclass(frozen=True)
class OneStepDistribution:
    probs: tuple[float, ...]
    branches: tuple[Branch, ...]

    def __getitem__(self, i):
        return self.probs[i]


def _decide(behaviors: BehaviorSet, params: ModelParams, ctx: NodeContext, considered) -> frozenset[int]:
    items = {i: (params.w * behaviors.utilities[i] + (1 - params.w) * ctx.signals[i], behaviors.costs[i])
             for i in considered}
    return select_adoption_set(items, ctx.budget) if items else frozenset()


def _accumulate(k, branches) -> OneStepDistribution:
    probs = [0.0] * k
    for br in branches:
        for i in br.selected:
            probs[i] += br.probability
    return OneStepDistribution(tuple(probs), tuple(branches))


def one_step_probs_matched(behaviors: BehaviorSet, params: ModelParams, ctx: NodeContext) -> OneStepDistribution:
    """All behaviors share one threshold: walk the distinct signal levels downward.

    A threshold in ``(L_{j+1}, L_j]`` triggers every behavior whose signal is
    at least ``L_j``; the top interval above the strongest signal triggers
    nothing new.
    """
    levels = sorted({s for i, s in enumerate(ctx.signals) if s > 0 and i not in ctx.held}, reverse=True)
    branches = []
    upper = 1.0
    for j, lvl in enumerate(levels):
        lower = levels[j + 1] if j + 1 < len(levels) else 0.0
        if j == 0 and upper > lvl:
            branches.append(Branch(upper - lvl, ctx.held, _decide(behaviors, params, ctx, ctx.held)))
        trig = {i for i, s in enumerate(ctx.signals) if s >= lvl and i not in ctx.held}
        cons = frozenset(ctx.held | trig)
        branches.append(Branch(lvl - lower, cons, _decide(behaviors, params, ctx, cons)))
    if not levels:
        branches.append(Branch(1.0, ctx.held, _decide(behaviors, params, ctx, ctx.held)))
    return _accumulate(behaviors.k, branches)


def one_step_probs_different(behaviors: BehaviorSet, params: ModelParams, ctx: NodeContext,
                             cap: int = DEFAULT_SUBSET_CAP) -> OneStepDistribution:
    """Independent thresholds: enumerate every subset of signaled behaviors."""
    active = [i for i, s in enumerate(ctx.signals) if s > 0 and i not in ctx.held]
    if len(active) > cap:
        raise EnumerationCapError(
            f"{len(active)} signaled behaviors exceed the enumeration cap of {cap}; "
            "estimate by Monte Carlo instead")
    branches = []
    for m in range(1 << len(active)):
        p = 1.0
        trig = set()
        for b, i in enumerate(active):
            if m >> b & 1:
                p *= ctx.signals[i]
                trig.add(i)
            else:
                p *= 1.0 - ctx.signals[i]
        cons = frozenset(ctx.held | trig)
        branches.append(Branch(p, cons, _decide(behaviors, params, ctx, cons)))
    return _accumulate(behaviors.k, branches)


def one_step_probs(behaviors, params, ctx, cap: int = DEFAULT_SUBSET_CAP) -> OneStepDistribution:
    if params.threshold_mode == MATCHED:
        return one_step_probs_matched(behaviors, params, ctx)
    return one_step_probs_different(behaviors, params, ctx, cap)


# -- compiled fast path used by compute_IA and the EIA heuristic ---------------

@njit(cache=True)
def _one_step_fast(sig, budget, w, costs, utils, mcost, lex, matched, out):
    """Non-held node: probability of holding each behavior after one epoch."""
    k = costs.shape[0]
    for i in range(k):
        out[i] = 0.0
    pay = np.empty(k)
    for i in range(k):
        pay[i] = w * utils[i] + (1.0 - w) * sig[i]
    act = 0
    for i in range(k):
        if sig[i] > 0.0:
            act |= 1 << i
    if act == 0:
        return
    if matched:
        # thresholds shared: triggered set is {i : sig[i] >= theta}
        prev = 0.0
        done = 0
        while True:
            lvl = 2.0
            for i in range(k):
                if (act >> i & 1) and not (done >> i & 1) and sig[i] < lvl:
                    lvl = sig[i]
            if lvl > 1.5:
                break
            cand = 0
            for i in range(k):
                if (act >> i & 1) and sig[i] >= lvl:
                    cand |= 1 << i
            pick = _kernels.best_subset(cand, budget, pay, mcost, lex, k)
            mass = lvl - prev
            for i in range(k):
                if pick >> i & 1:
                    out[i] += mass
            for i in range(k):
                if (act >> i & 1) and sig[i] <= lvl:
                    done |= 1 << i
            prev = lvl
        return
    idx = np.empty(k, dtype=np.int64)
    na = 0
    for i in range(k):
        if act >> i & 1:
            idx[na] = i
            na += 1
    for m in range(1 << na):
        p = 1.0
        cand = 0
        for b in range(na):
            i = idx[b]
            if m >> b & 1:
                p *= sig[i]
                cand |= 1 << i
            else:
                p *= 1.0 - sig[i]
        if p == 0.0 or cand == 0:
            continue
        pick = _kernels.best_subset(cand, budget, pay, mcost, lex, k)
        for i in range(k):
            if pick >> i & 1:
                out[i] += p


@njit(cache=True)
def _ia_all(indptr, indices, resource, seed_mask, w, costs, utils, mcost, lex, matched):
    n = resource.shape[0]
    k = costs.shape[0]
    total = np.zeros(k)
    per_node = np.zeros((n, k))
    sig = np.empty(k)
    out = np.empty(k)
    for v in range(n):
        if seed_mask[v] != 0:
            continue
        deg = indptr[v + 1] - indptr[v]
        if deg == 0:
            continue
        for i in range(k):
            sig[i] = 0.0
        any_sig = False
        for p in range(indptr[v], indptr[v + 1]):
            m = seed_mask[indices[p]]
            if m == 0:
                continue
            any_sig = True
            for i in range(k):
                if m >> i & 1:
                    sig[i] += 1.0
        if not any_sig:
            continue
        for i in range(k):
            sig[i] /= deg
        _one_step_fast(sig, resource[v], w, costs, utils, mcost, lex, matched, out)
        for i in range(k):
            per_node[v, i] = out[i]
            total[i] += out[i]
    return total, per_node


def _check_cap(k, params, cap):
    if params.threshold_mode != MATCHED and k > cap:
        raise EnumerationCapError(f"k={k} exceeds the enumeration cap of {cap}")


def compute_ia_details(g, behaviors: BehaviorSet, resource, seeds, params: ModelParams,
                       cap: int = DEFAULT_SUBSET_CAP):
    _check_cap(behaviors.k, params, cap)
    resource = np.asarray(resource, dtype=np.float64)
    return _ia_all(np.asarray(g.indptr), np.asarray(g.indices), resource, seeds.masks(len(resource)),
                   params.w, behaviors.cost_array, behaviors.utility_array,
                   mask_costs(behaviors.costs), lex_mask_order(behaviors.k),
                   params.threshold_mode == MATCHED)


def compute_IA(g, behaviors: BehaviorSet, states, seeds, params: ModelParams,
               cap: int = DEFAULT_SUBSET_CAP) -> np.ndarray:
    """Expected number of non-seed nodes holding each behavior after one epoch.

    Only nodes with at least one seeded neighbor can contribute. ``states``
    may be a NodeStates or a resource vector.
    """
    resource = getattr(states, "resource", states)
    total, _ = compute_ia_details(g, behaviors, resource, seeds, params, cap)
    return total


@njit(cache=True)
def ia_gains(indptr, indices, resource, seed_mask, base_node, i, pool, w, costs, utils,
             mcost, lex, matched):
    """Total IA after seeding each ``pool`` node with behavior ``i``, minus the current total.

    ``base_node[v]`` is ``v``'s current summed one-step probability.
    Only the candidate and its neighbors change, so each gain is local.
    """
    k = costs.shape[0]
    gains = np.zeros(pool.shape[0])
    sig = np.empty(k)
    out = np.empty(k)
    bit = 1 << i
    for t in range(pool.shape[0]):
        v = pool[t]
        g = -base_node[v]
        for p in range(indptr[v], indptr[v + 1]):
            u = indices[p]
            if seed_mask[u] != 0:
                continue
            deg = indptr[u + 1] - indptr[u]
            for j in range(k):
                sig[j] = 0.0
            for q in range(indptr[u], indptr[u + 1]):
                x = indices[q]
                m = seed_mask[x]
                if x == v:
                    m = m | bit
                for j in range(k):
                    if m >> j & 1:
                        sig[j] += 1.0
            for j in range(k):
                sig[j] /= deg
            _one_step_fast(sig, resource[u], w, costs, utils, mcost, lex, matched, out)
            s = 0.0
            for j in range(k):
                s += out[j]
            g += s - base_node[u]
        gains[t] = g
    return gains
