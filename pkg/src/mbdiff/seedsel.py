"""Seed selection: random, degree-based, CIW-based, EIA and greedy (KKT) heuristics.

Every selector takes the node states (only resources are read), a
per-behavior seed budget and returns a :class:`SeedAssignment`. Selectors
never mutate the states; resource top-ups are recorded in the assignment.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from . import eia
from .behavior import (
    COST_EPS,
    MATCHED,
    STICKY,
    BehaviorSet,
    ModelParams,
    draw_thresholds,
    lex_mask_order,
    mask_costs,
    select_adoption_set,
)
from .diffuse import SeedAssignment, simulate_runs, stream

log = logging.getLogger(__name__)

SINGLE, MULTIPLE = "s", "m"
TOPUP, NO_TOPUP = "t", "nt"


class SeedSelectionError(ValueError):
    pass


class PartialAssignmentWarning(UserWarning):
    pass


@dataclass(frozen=True)
class VariantFlags:
    multiplicity: str = SINGLE
    topup: str = TOPUP

    def __post_init__(self):
        if self.multiplicity not in (SINGLE, MULTIPLE):
            raise SeedSelectionError(f"multiplicity must be 's' or 'm', got {self.multiplicity!r}")
        if self.topup not in (TOPUP, NO_TOPUP):
            raise SeedSelectionError(f"topup must be 't' or 'nt', got {self.topup!r}")

    @property
    def label(self) -> str:
        return f"{self.multiplicity.upper()}-{self.topup.upper()}"


S_T = VariantFlags(SINGLE, TOPUP)


@dataclass(frozen=True)
class SeedBudget:
    counts: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        if any(c < 0 for c in self.counts):
            raise SeedSelectionError("seed counts must be non-negative")

    @property
    def total(self) -> int:
        return sum(self.counts)

    @property
    def k(self) -> int:
        return len(self.counts)


def _budget(budget) -> SeedBudget:
    return budget if isinstance(budget, SeedBudget) else SeedBudget(tuple(budget))


def _rng(rng) -> np.random.Generator:
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


class _Builder:
    """Accumulates seeds, applying the top-up / affordability rules of a variant."""

    def __init__(self, behaviors: BehaviorSet, resource, budget: SeedBudget, flags: VariantFlags):
        if budget.k != behaviors.k:
            raise SeedSelectionError(f"budget has {budget.k} entries for {behaviors.k} behaviors")
        self.costs = behaviors.costs
        self.flags = flags
        self.orig = np.asarray(resource, dtype=np.float64)
        self.res = self.orig.copy()
        self.need = list(budget.counts)
        self.sets = [[] for _ in range(behaviors.k)]
        self.load = np.zeros(len(self.res))
        self.held = [set() for _ in range(len(self.res))]

    def affordable(self, v: int, i: int) -> bool:
        return self.load[v] + self.costs[i] <= self.orig[v] + COST_EPS

    def can_take(self, v: int, i: int) -> bool:
        if self.need[i] <= 0 or i in self.held[v]:
            return False
        if self.flags.multiplicity == SINGLE and self.held[v]:
            return False
        return self.flags.topup == TOPUP or self.affordable(v, i)

    def add(self, v: int, i: int) -> None:
        self.sets[i].append(v)
        self.held[v].add(i)
        self.need[i] -= 1
        self.load[v] += self.costs[i]
        # top-up rule: if r(v) <= required cost then r(v) := required cost
        if self.res[v] <= self.load[v]:
            self.res[v] = self.load[v]

    @property
    def done(self) -> bool:
        return all(c <= 0 for c in self.need)

    def result(self, name: str) -> SeedAssignment:
        topups = {v: float(self.res[v]) for v in np.flatnonzero(self.res != self.orig)}
        partial = not self.done
        if partial:
            msg = (f"{name}: pool exhausted with {sum(self.need)} seeds unassigned "
                   f"(remaining per behavior {tuple(self.need)})")
            warnings.warn(msg, PartialAssignmentWarning, stacklevel=3)
        return SeedAssignment.from_lists(self.sets, topups=topups, partial=partial)


def _resource(states):
    return np.asarray(getattr(states, "resource", states), dtype=np.float64)


# -- random and degree based ----------------------------------------------------

def random_seeds(g, states, budget, behaviors: BehaviorSet, flags: VariantFlags = S_T, rng=None):
    """Uniform nodes, each given a behavior drawn uniformly from those still needed.

    NT skips a drawn node whose drawn behavior it cannot afford. The M
    variant draws (node, behavior) pairs so a node can seed several behaviors.
    """
    rng = _rng(rng)
    budget = _budget(budget)
    b = _Builder(behaviors, _resource(states), budget, flags)
    n = len(b.res)
    if budget.total > n * (behaviors.k if flags.multiplicity == MULTIPLE else 1):
        raise SeedSelectionError(f"budget {budget.total} exceeds the node pool")
    if flags.multiplicity == SINGLE:
        for v in rng.permutation(n):
            if b.done:
                break
            needed = [i for i in range(behaviors.k) if b.need[i] > 0]
            j = int(rng.choice(needed))
            if b.can_take(int(v), j):
                b.add(int(v), j)
    else:
        pairs = [(v, i) for v in range(n) for i in range(behaviors.k)]
        for p in rng.permutation(len(pairs)):
            if b.done:
                break
            v, i = pairs[p]
            if b.can_take(v, i):
                b.add(v, i)
    return b.result("random")


def _by_degree(g) -> list[int]:
    deg = np.asarray(g.degree)
    return sorted(range(len(deg)), key=lambda v: (-deg[v], v))


def naive_degree(g, states, budget, behaviors: BehaviorSet, flags: VariantFlags = S_T, rng=None):
    """Highest degree first; each node gets one behavior drawn uniformly from those still needed.

    NT: a node that cannot afford its drawn behavior is skipped. T: the
    node's resource is raised to the behavior's cost when needed.
    """
    rng = _rng(rng)
    b = _Builder(behaviors, _resource(states), _budget(budget),
                 VariantFlags(SINGLE, flags.topup))
    for v in _by_degree(g):
        if b.done:
            break
        needed = [i for i in range(behaviors.k) if b.need[i] > 0]
        j = int(rng.choice(needed))
        if b.can_take(v, j):
            b.add(v, j)
    return b.result("naive-degree")


def naive_degree_knapsack(g, states, budget, behaviors: BehaviorSet, flags: VariantFlags = None, rng=None):
    """Highest degree first; each node takes the utility-maximizing affordable
    subset of the behaviors that still need seeds. No top-up."""
    b = _Builder(behaviors, _resource(states), _budget(budget), VariantFlags(MULTIPLE, NO_TOPUP))
    for v in _by_degree(g):
        if b.done:
            break
        items = {i: (behaviors.utilities[i], behaviors.costs[i])
                 for i in range(behaviors.k) if b.need[i] > 0}
        for i in sorted(select_adoption_set(items, float(b.orig[v]))):
            b.add(v, i)
    return b.result("naive-degree-knapsack")


def resource_degree(g, states, behaviors: BehaviorSet) -> np.ndarray:
    """``d[v, i]``: neighbors of ``v`` whose resource covers behavior ``i``."""
    res = _resource(states)
    n = len(res)
    d = np.zeros((n, behaviors.k), dtype=np.int64)
    for v in range(n):
        nb = g.neighbors(v)
        for i, c in enumerate(behaviors.costs):
            d[v, i] = int(np.count_nonzero(res[nb] >= c))
    return d


def ciw(g, states, behaviors: BehaviorSet, i: int, exclude=()) -> np.ndarray:
    """Constrained influence weight ``1 + sum 1/|N(u)|`` over neighbors ``u`` not
    in ``exclude`` that can afford behavior ``i``."""
    res = _resource(states)
    deg = np.asarray(g.degree)
    contrib = np.where(res >= behaviors.costs[i], 1.0 / np.maximum(deg, 1), 0.0)
    if len(exclude):
        contrib[list(exclude)] = 0.0
    scores = np.ones(len(res))
    for v in range(len(res)):
        nb = g.neighbors(v)
        if len(nb):
            scores[v] += contrib[nb].sum()
    return scores


def _rank_rounds(behaviors, b: _Builder, pick_lists, rng, name):
    """Shared loop of the ranked heuristics.

    Each round every behavior proposes its top candidates from the pool; a
    node proposed by several behaviors is given one of them uniformly at
    random (S) or all it can take (M). Proposed nodes leave the pool and
    unfilled slots are proposed again next round.
    """
    pool = np.ones(len(b.res), dtype=bool)
    while not b.done:
        lists = pick_lists(pool)
        proposed = sorted({v for lst in lists for v in lst})
        if not proposed:
            break
        pool[proposed] = False
        for v in proposed:
            behs = [i for i in range(behaviors.k) if v in lists[i]]
            if b.flags.multiplicity == SINGLE:
                j = int(rng.choice(behs)) if len(behs) > 1 else behs[0]
                if b.can_take(v, j):
                    b.add(v, j)
            else:
                for j in rng.permutation(behs):
                    if b.can_take(v, int(j)):
                        b.add(v, int(j))
    return b.result(name)


def _top(scores, pool, count, eligible):
    cand = np.flatnonzero(pool & eligible)
    order = sorted(cand.tolist(), key=lambda v: (-scores[v], v))
    return order[:count]


def _eligibility(b: _Builder, behaviors):
    if b.flags.topup == TOPUP:
        return [np.ones(len(b.res), dtype=bool)] * behaviors.k
    return [b.orig >= c - COST_EPS for c in behaviors.costs]


def degree_resource_ranked(g, states, budget, behaviors: BehaviorSet, flags: VariantFlags = S_T, rng=None):
    rng = _rng(rng)
    b = _Builder(behaviors, _resource(states), _budget(budget), flags)
    d = resource_degree(g, states, behaviors)
    elig = _eligibility(b, behaviors)

    def pick(pool):
        return [set(_top(d[:, i], pool, b.need[i], elig[i])) if b.need[i] > 0 else set()
                for i in range(behaviors.k)]

    return _rank_rounds(behaviors, b, pick, rng, "degree-resource")


def ciw_ranked(g, states, budget, behaviors: BehaviorSet, flags: VariantFlags = S_T, rng=None):
    rng = _rng(rng)
    b = _Builder(behaviors, _resource(states), _budget(budget), flags)
    e = np.column_stack([ciw(g, states, behaviors, i) for i in range(behaviors.k)])
    elig = _eligibility(b, behaviors)

    def pick(pool):
        return [set(_top(e[:, i], pool, b.need[i], elig[i])) if b.need[i] > 0 else set()
                for i in range(behaviors.k)]

    return _rank_rounds(behaviors, b, pick, rng, "ciw-rank")


def core_hill_climbing(g, resource, behaviors: BehaviorSet, i: int, count: int,
                       seeded_i, pool, eligible=None) -> list[int]:
    """Pick ``count`` nodes for behavior ``i`` by marginal influence weight.

    Scores start as CIW with the current seeds of ``i`` excluded; after each
    pick ``u`` its neighbors lose the ``1/|N(u)|`` that ``u`` contributed.
    """
    res = np.asarray(resource, dtype=np.float64)
    deg = np.asarray(g.degree)
    seeded_i = set(seeded_i)
    e = ciw(g, res, behaviors, i, exclude=sorted(seeded_i))
    avail = np.asarray(pool, dtype=bool).copy()
    if eligible is not None:
        avail &= eligible
    avail[list(seeded_i)] = False
    chosen = []
    for _ in range(count):
        cand = np.flatnonzero(avail)
        if len(cand) == 0:
            break
        best = cand[np.argmax(e[cand])]  # argmax returns the first, i.e. smallest id, on ties
        u = int(best)
        chosen.append(u)
        avail[u] = False
        if res[u] >= behaviors.costs[i] and deg[u] > 0:
            e[g.neighbors(u)] -= 1.0 / deg[u]
    return chosen


def ciw_max_margin(g, states, budget, behaviors: BehaviorSet, flags: VariantFlags = S_T, rng=None):
    rng = _rng(rng)
    b = _Builder(behaviors, _resource(states), _budget(budget), flags)
    elig = _eligibility(b, behaviors)

    def pick(pool):
        return [set(core_hill_climbing(g, b.orig, behaviors, i, b.need[i], b.sets[i], pool, elig[i]))
                if b.need[i] > 0 else set() for i in range(behaviors.k)]

    return _rank_rounds(behaviors, b, pick, rng, "ciw-margin")


# -- incremental greedy selectors -------------------------------------------------

def _greedy_rounds(behaviors, b: _Builder, score_fn, name):
    """One seed per round: best (node, behavior) pair by ``score_fn``.

    ``score_fn(i, pool)`` returns a score per pool node for behavior ``i``.
    Ties go to the smaller behavior index, then the smaller node id.
    """
    n = len(b.res)
    while not b.done:
        best = None
        for i in range(behaviors.k):
            if b.need[i] <= 0:
                continue
            pool = np.array([v for v in range(n) if b.can_take(v, i)], dtype=np.int64)
            if len(pool) == 0:
                continue
            s = np.asarray(score_fn(i, pool))
            t = int(np.argmax(s))
            if best is None or s[t] > best[0]:
                best = (float(s[t]), int(pool[t]), i)
        if best is None:
            break
        _, v, i = best
        log.debug("%s: seed %d -> behavior %d (score %.6f)", name, v, i, best[0])
        b.add(v, i)
    return b.result(name)


def find_next_seed_ia(g, behaviors, resource, seeds: SeedAssignment, i: int, need_i: int, pool,
                      params: ModelParams):
    """Best pool node to add as a seed of behavior ``i`` by expected immediate adoption.

    Returns ``("nobody", 0.0)`` when behavior ``i`` needs no more seeds.
    """
    if need_i == 0 or len(pool) == 0:
        return "nobody", 0.0
    pool = np.asarray(pool, dtype=np.int64)
    base_total, per_node = eia.compute_ia_details(g, behaviors, resource, seeds, params)
    gains = _ia_gains(g, behaviors, resource, seeds, per_node, i, pool, params)
    t = int(np.argmax(gains))
    return int(pool[t]), float(base_total.sum() + gains[t])


def _ia_gains(g, behaviors, resource, seeds, per_node, i, pool, params):
    return eia.ia_gains(np.asarray(g.indptr), np.asarray(g.indices), np.asarray(resource, dtype=np.float64),
                        seeds.masks(len(resource)), per_node.sum(axis=1), i, pool, params.w,
                        behaviors.cost_array, behaviors.utility_array, mask_costs(behaviors.costs),
                        lex_mask_order(behaviors.k), params.threshold_mode == MATCHED)


def eia_incremental(g, states, budget, behaviors: BehaviorSet, flags: VariantFlags = S_T,
                    params: ModelParams = None, rng=None):
    """Greedy on expected immediate adoption (summed over behaviors)."""
    params = params or ModelParams()
    b = _Builder(behaviors, _resource(states), _budget(budget), flags)
    cache = {}

    def score(i, pool):
        seeds = SeedAssignment.from_lists(b.sets)
        key = tuple(len(s) for s in b.sets)
        if key not in cache:
            cache.clear()
            cache[key] = eia.compute_ia_details(g, behaviors, b.res, seeds, params)
        total, per_node = cache[key]
        return total.sum() + _ia_gains(g, behaviors, b.res, seeds, per_node, i, pool, params)

    return _greedy_rounds(behaviors, b, score, "eia")


def kkt_greedy(g, states, budget, behaviors: BehaviorSet, flags: VariantFlags = S_T,
               params: ModelParams = None, runs: int = 1000, rng=None):
    """Greedy on Monte Carlo participation estimates.

    Every round all candidate (node, behavior) additions are scored on the
    same ``runs`` threshold draws, so differences between candidates are
    not swamped by sampling noise.
    """
    params = params or ModelParams()
    if runs < 1:
        raise SeedSelectionError("runs must be >= 1")
    if params.adoption_mode != STICKY:
        raise SeedSelectionError("the greedy selector assumes sticky adoption")
    rng = _rng(rng)
    base_seed = int(rng.integers(2**31))
    b = _Builder(behaviors, _resource(states), _budget(budget), flags)
    indptr, indices = np.asarray(g.indptr), np.asarray(g.indices)
    n = len(b.res)

    def score(i, pool):
        # common random numbers: one threshold sample per (round, behavior)
        round_no = sum(len(s) for s in b.sets)
        thr = draw_thresholds(stream(base_seed, round_no, i), n, behaviors.k,
                              params.threshold_mode, runs=runs)
        cur = SeedAssignment.from_lists(b.sets).masks(n)
        out = np.empty(len(pool))
        for t, v in enumerate(pool):
            mask = cur.copy()
            mask[v] |= 1 << i
            res = b.res.copy()
            need = b.load[v] + behaviors.costs[i]
            if res[v] <= need:
                res[v] = need
            out[t] = simulate_runs(indptr, indices, behaviors, params, res, mask, thr).participation.mean()
        return out

    return _greedy_rounds(behaviors, b, score, "kkt")


HEURISTICS = {
    "random": random_seeds,
    "degree-nt": lambda g, s, bud, beh, flags=S_T, rng=None, **kw:
        naive_degree(g, s, bud, beh, VariantFlags(SINGLE, NO_TOPUP), rng),
    "degree-t": lambda g, s, bud, beh, flags=S_T, rng=None, **kw:
        naive_degree(g, s, bud, beh, VariantFlags(SINGLE, TOPUP), rng),
    "degree-knapsack": naive_degree_knapsack,
    "degree-resource": degree_resource_ranked,
    "ciw-rank": ciw_ranked,
    "ciw-margin": ciw_max_margin,
    "eia": eia_incremental,
    "kkt": kkt_greedy,
}

# selectors whose output does not depend on thresholds and can be reused across runs
THRESHOLD_FREE = {"random", "degree-nt", "degree-t", "degree-knapsack", "degree-resource",
                  "ciw-rank", "ciw-margin", "eia"}


def select_seeds(name: str, g, states, budget, behaviors: BehaviorSet, flags: VariantFlags = S_T,
                 params: ModelParams = None, rng=None, runs: int = 1000) -> SeedAssignment:
    try:
        fn = HEURISTICS[name]
    except KeyError:
        raise SeedSelectionError(f"unknown heuristic {name!r}; choose from {sorted(HEURISTICS)}") from None
    if name == "eia":
        return fn(g, states, budget, behaviors, flags, params=params, rng=rng)
    if name == "kkt":
        return fn(g, states, budget, behaviors, flags, params=params, runs=runs, rng=rng)
    return fn(g, states, budget, behaviors, flags, rng=rng)
