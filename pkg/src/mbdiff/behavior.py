"""Behaviors, per-node state and the per-node adoption decision."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace

import numpy as np

# slack for comparing float cost sums against a budget (0.2 + 0.7 vs 0.9)
COST_EPS = 1e-9
# payoff sums closer than this are treated as tied
VALUE_EPS = 1e-12
MAX_KNAPSACK_ITEMS = 20

STICKY = "sticky"
REEVALUATE = "reevaluate"
DIFFERENT = "different"
MATCHED = "matched"


class BehaviorError(ValueError):
    pass


@dataclass(frozen=True)
class BehaviorSet:
    """``k`` behaviors stored in strictly ascending cost order."""

    costs: tuple[float, ...]
    utilities: tuple[float, ...]

    def __post_init__(self):
        costs = tuple(float(c) for c in self.costs)
        utils = tuple(float(u) for u in self.utilities)
        if len(costs) != len(utils):
            raise BehaviorError("costs and utilities must have the same length")
        if not costs:
            raise BehaviorError("at least one behavior is required")
        for c in costs:
            if not 0.0 < c <= 1.0:
                raise BehaviorError(f"cost {c} outside (0, 1]")
        for u in utils:
            if not 0.0 <= u <= 1.0:
                raise BehaviorError(f"utility {u} outside [0, 1]")
        if any(b <= a for a, b in zip(costs, costs[1:])):
            raise BehaviorError("costs must be strictly ascending (equal costs are rejected)")
        object.__setattr__(self, "costs", costs)
        object.__setattr__(self, "utilities", utils)

    @property
    def k(self) -> int:
        return len(self.costs)

    @property
    def cost_array(self) -> np.ndarray:
        return np.asarray(self.costs, dtype=np.float64)

    @property
    def utility_array(self) -> np.ndarray:
        return np.asarray(self.utilities, dtype=np.float64)

    @classmethod
    def cost_proportional(cls, costs):
        """Behaviors whose utility equals their cost."""
        return cls(tuple(costs), tuple(costs))


PAPER_BEHAVIORS = BehaviorSet.cost_proportional((0.2, 0.5, 0.7))


@dataclass(frozen=True)
class ModelParams:
    w: float = 0.5
    adoption_mode: str = STICKY
    threshold_mode: str = DIFFERENT
    max_epochs: int | None = None  # None means 10 * n

    def __post_init__(self):
        if not 0.0 <= self.w <= 1.0:
            raise BehaviorError(f"w={self.w} outside [0, 1]")
        if self.adoption_mode not in (STICKY, REEVALUATE):
            raise BehaviorError(f"unknown adoption mode {self.adoption_mode!r}")
        if self.threshold_mode not in (DIFFERENT, MATCHED):
            raise BehaviorError(f"unknown threshold mode {self.threshold_mode!r}")
        if self.max_epochs is not None and self.max_epochs < 1:
            raise BehaviorError("max_epochs must be >= 1")

    def epoch_cap(self, n: int) -> int:
        return self.max_epochs if self.max_epochs is not None else max(10 * n, 1)


@dataclass(frozen=True)
class NodeState:
    resource: float
    thresholds: tuple[float, ...]
    adopted: frozenset[int]
    spent: float


@dataclass
class NodeStates:
    """Struct-of-arrays state for all ``n`` nodes.

    ``thresholds`` has shape ``(n, k)``; ``adopted`` is a boolean ``(n, k)``
    mask. ``spent`` is derived from ``adopted`` and the behavior costs.
    """

    resource: np.ndarray
    thresholds: np.ndarray
    adopted: np.ndarray = field(default=None)

    def __post_init__(self):
        self.resource = np.asarray(self.resource, dtype=np.float64)
        self.thresholds = np.asarray(self.thresholds, dtype=np.float64)
        n = len(self.resource)
        if self.thresholds.ndim != 2 or self.thresholds.shape[0] != n:
            raise BehaviorError("thresholds must have shape (n, k)")
        if self.adopted is None:
            self.adopted = np.zeros(self.thresholds.shape, dtype=bool)
        else:
            self.adopted = np.asarray(self.adopted, dtype=bool)

    @property
    def n(self) -> int:
        return len(self.resource)

    @property
    def k(self) -> int:
        return self.thresholds.shape[1]

    def spent(self, behaviors: BehaviorSet) -> np.ndarray:
        return self.adopted @ behaviors.cost_array

    def copy(self) -> NodeStates:
        return NodeStates(self.resource.copy(), self.thresholds.copy(), self.adopted.copy())

    def with_thresholds(self, thresholds) -> NodeStates:
        return replace(self, thresholds=np.asarray(thresholds, dtype=np.float64),
                       adopted=self.adopted.copy(), resource=self.resource.copy())

    def node(self, v: int, behaviors: BehaviorSet) -> NodeState:
        adopted = frozenset(int(i) for i in np.flatnonzero(self.adopted[v]))
        return NodeState(float(self.resource[v]), tuple(self.thresholds[v].tolist()),
                         adopted, float(sum(behaviors.costs[i] for i in adopted)))


def draw_thresholds(rng: np.random.Generator, n: int, k: int, mode: str, runs: int | None = None):
    """U(0,1) thresholds; in matched mode one draw per node is shared by all behaviors."""
    lead = (n,) if runs is None else (runs, n)
    if mode == MATCHED:
        t = rng.random(lead + (1,))
        return np.repeat(t, k, axis=-1)
    return rng.random(lead + (k,))


def sample_states(g, behaviors: BehaviorSet, params: ModelParams, rng) -> NodeStates:
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    n = len(g) if not isinstance(g, int) else g
    resource = rng.random(n)
    thresholds = draw_thresholds(rng, n, behaviors.k, params.threshold_mode)
    return NodeStates(resource, thresholds)


def social_signal(g, states: NodeStates, i: int, v: int) -> float:
    nb = g.neighbors(v)
    if len(nb) == 0:
        return 0.0
    return float(np.count_nonzero(states.adopted[nb, i])) / len(nb)


def payoff(behaviors: BehaviorSet, params: ModelParams, i: int, l: float) -> float:
    return params.w * behaviors.utilities[i] + (1.0 - params.w) * l


def node_budget(behaviors: BehaviorSet, states: NodeStates, params: ModelParams, v: int) -> float:
    if params.adoption_mode == STICKY:
        return float(states.resource[v] - states.adopted[v] @ behaviors.cost_array)
    return float(states.resource[v])


def candidate_set(g, states: NodeStates, params: ModelParams, v: int,
                  behaviors: BehaviorSet) -> set[int]:
    """Behaviors ``v`` would consider this epoch.

    A behavior qualifies when some neighbor holds it, its signal meets the
    node's threshold and its cost fits the budget. Sticky mode skips held
    behaviors and budgets ``r - s``; reevaluate mode keeps held behaviors
    as candidates and budgets the full ``r``.
    """
    budget = node_budget(behaviors, states, params, v)
    out = set()
    for j in range(behaviors.k):
        if behaviors.costs[j] > budget + COST_EPS:
            continue
        held = bool(states.adopted[v, j])
        if held:
            if params.adoption_mode == REEVALUATE:
                out.add(j)
            continue
        l = social_signal(g, states, j, v)
        if l > 0.0 and l >= states.thresholds[v, j]:
            out.add(j)
    return out


def select_adoption_set(candidates: dict[int, tuple[float, float]], budget: float) -> frozenset[int]:
    """Exact 0/1 knapsack over ``{index: (payoff, cost)}``.

    Maximizes total payoff subject to total cost <= ``budget``. Among optimal
    subsets the lexicographically smallest sorted index tuple wins.
    """
    items = sorted(candidates)
    if len(items) > MAX_KNAPSACK_ITEMS:
        raise BehaviorError(f"knapsack over {len(items)} items exceeds the {MAX_KNAPSACK_ITEMS}-item cap")
    feasible = []
    for r in range(len(items) + 1):
        for combo in itertools.combinations(items, r):
            cost = sum(candidates[i][1] for i in combo)
            if cost <= budget + COST_EPS:
                feasible.append((sum(candidates[i][0] for i in combo), combo))
    best = max(val for val, _ in feasible)
    return frozenset(min(combo for val, combo in feasible if val >= best - VALUE_EPS))


def kappa(behaviors: BehaviorSet, r: float) -> int:
    """1-based index of the costliest behavior affordable with ``r``; 0 if none."""
    j = 0
    for idx, c in enumerate(behaviors.costs, start=1):
        if c <= r + COST_EPS:
            j = idx
    return j


def lex_mask_order(k: int) -> np.ndarray:
    """All ``2**k`` bitmasks sorted by their lexicographic index tuple."""
    masks = list(range(1 << k))
    masks.sort(key=lambda m: tuple(i for i in range(k) if m >> i & 1))
    return np.asarray(masks, dtype=np.int64)


def mask_costs(costs) -> np.ndarray:
    costs = np.asarray(costs, dtype=np.float64)
    k = len(costs)
    out = np.zeros(1 << k)
    for m in range(1 << k):
        out[m] = sum(costs[i] for i in range(k) if m >> i & 1)
    return out
