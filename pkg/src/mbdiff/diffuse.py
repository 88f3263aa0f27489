"""Synchronous multiple-behavior diffusion, the live-edge process and run metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .behavior import (
    COST_EPS,
    REEVALUATE,
    BehaviorSet,
    ModelParams,
    NodeStates,
    draw_thresholds,
    kappa,
    lex_mask_order,
    mask_costs,
)

# thresholds for at most this many runs are materialized at once
CHUNK_RUNS = 2048


class SeedError(ValueError):
    pass


@dataclass(frozen=True)
class SeedAssignment:
    """Per-behavior seed sets plus the resource top-ups applied to seeds.

    ``topups`` maps a node to the resource it must hold when seeded; it is
    empty for no-top-up selections. ``partial`` is set when a heuristic
    could not fill its budget.
    """

    sets: tuple[frozenset[int], ...]
    topups: dict = field(default_factory=dict)
    partial: bool = False

    @classmethod
    def empty(cls, k: int) -> SeedAssignment:
        return cls(tuple(frozenset() for _ in range(k)))

    @classmethod
    def from_lists(cls, lists, topups=None, partial=False) -> SeedAssignment:
        return cls(tuple(frozenset(int(v) for v in s) for s in lists), dict(topups or {}), partial)

    @property
    def k(self) -> int:
        return len(self.sets)

    @property
    def union(self) -> frozenset[int]:
        out: set[int] = set()
        for s in self.sets:
            out |= s
        return frozenset(out)

    def counts(self) -> tuple[int, ...]:
        return tuple(len(s) for s in self.sets)

    def is_disjoint(self) -> bool:
        return sum(len(s) for s in self.sets) == len(self.union)

    def pairs(self) -> list[tuple[int, int]]:
        """``(node, behavior)`` pairs sorted by node then behavior."""
        return sorted((v, i) for i, s in enumerate(self.sets) for v in s)

    def masks(self, n: int) -> np.ndarray:
        m = np.zeros(n, dtype=np.int64)
        for i, s in enumerate(self.sets):
            for v in s:
                m[v] |= 1 << i
        return m

    def with_seed(self, i: int, v: int, topup: float | None = None) -> SeedAssignment:
        sets = list(self.sets)
        sets[i] = sets[i] | {v}
        topups = dict(self.topups)
        if topup is not None:
            topups[v] = max(topups.get(v, 0.0), topup)
        return SeedAssignment(tuple(sets), topups, self.partial)


def apply_seeds(behaviors: BehaviorSet, states: NodeStates, seeds: SeedAssignment) -> NodeStates:
    """Copy of ``states`` with top-ups applied and seeds holding their behaviors."""
    out = states.copy()
    for v, r in seeds.topups.items():
        out.resource[v] = max(out.resource[v], r)
    for i, s in enumerate(seeds.sets):
        for v in s:
            out.adopted[v, i] = True
    spent = out.adopted @ behaviors.cost_array
    bad = np.flatnonzero(spent > out.resource + COST_EPS)
    if len(bad):
        v = int(bad[0])
        raise SeedError(f"seed {v} cannot afford its behaviors "
                        f"(cost {spent[v]:.6f} > resource {out.resource[v]:.6f})")
    return out


@dataclass
class RunOutcome:
    """Final state of one run.

    ``history[t]`` is the ``(n, k)`` adoption mask at the end of epoch
    ``t`` (``history[0]`` is the seeded state).
    """

    active_sets: tuple[frozenset[int], ...]
    history: list
    epochs: int
    converged: bool
    participation: int
    adoption: int
    utilization: float

    def as_record(self) -> dict:
        return {"participation": self.participation, "adoption": self.adoption,
                "utilization": self.utilization, "epochs": self.epochs,
                "converged": self.converged}


def metrics(behaviors: BehaviorSet, states: NodeStates, adopted=None) -> tuple[int, int, float]:
    """(participation, adoption, utilization) of an adoption mask."""
    adopted = states.adopted if adopted is None else np.asarray(adopted, dtype=bool)
    participation = int(np.count_nonzero(adopted.any(axis=1)))
    adoption = int(np.count_nonzero(adopted))
    total_r = float(states.resource.sum())
    util = float((adopted @ behaviors.cost_array).sum() / total_r) if total_r > 0 else 0.0
    return participation, adoption, util


def _csr(g):
    return np.asarray(g.indptr, dtype=np.int64), np.asarray(g.indices, dtype=np.int64)


class _Compiled:
    """Arrays the kernels need for one (behavior set, params) pair."""

    def __init__(self, behaviors: BehaviorSet, params: ModelParams, n: int):
        self.costs = behaviors.cost_array
        self.utils = behaviors.utility_array
        self.w = float(params.w)
        self.reevaluate = params.adoption_mode == REEVALUATE
        self.max_epochs = int(params.epoch_cap(n))
        self.mcost = mask_costs(self.costs)
        self.lex = lex_mask_order(behaviors.k)


def _mask_to_bool(mask: np.ndarray, k: int) -> np.ndarray:
    return ((mask[:, None] >> np.arange(k)) & 1).astype(bool)


def run_diffusion(g, behaviors: BehaviorSet, states: NodeStates, seeds: SeedAssignment,
                  params: ModelParams) -> RunOutcome:
    """Run one diffusion to a fixed point (or ``max_epochs``) and record every epoch."""
    seeded = apply_seeds(behaviors, states, seeds)
    comp = _Compiled(behaviors, params, seeded.n)
    indptr, indices = _csr(g)
    k = behaviors.k
    no_live = np.empty((0, 0), dtype=np.int64)
    fc = np.empty((seeded.n, k), dtype=np.int64)
    mask = seeded.adopted.astype(np.int64) @ (1 << np.arange(k, dtype=np.int64))
    history = [_mask_to_bool(mask, k)]
    converged = False
    epochs = 0
    for _ in range(comp.max_epochs):
        nxt, last, _ok = _kernels.diffuse_one(indptr, indices, comp.costs, comp.utils, comp.w,
                                              seeded.resource, seeded.thresholds, mask,
                                              comp.reevaluate, 1, comp.mcost, comp.lex,
                                              no_live, fc)
        if last == 0:
            converged = True
            break
        mask = nxt
        epochs += 1
        history.append(_mask_to_bool(mask, k))
    final = history[-1]
    part, adopt, util = metrics(behaviors, seeded, final)
    active = tuple(frozenset(int(v) for v in np.flatnonzero(final[:, i])) for i in range(k))
    return RunOutcome(active, history, epochs, converged, part, adopt, util)


@dataclass
class BatchResult:
    participation: np.ndarray
    adoption: np.ndarray
    utilization: np.ndarray
    epochs: np.ndarray
    converged: np.ndarray

    def __len__(self):
        return len(self.participation)


def simulate_runs(indptr, indices, behaviors: BehaviorSet, params: ModelParams, resource,
                  seed_mask, thresholds) -> BatchResult:
    """Run the compiled engine once per threshold slice (``(R, n, k)``)."""
    resource = np.ascontiguousarray(resource, dtype=np.float64)
    comp = _Compiled(behaviors, params, len(resource))
    part, adopt, spend, epochs, conv = _kernels.diffuse_batch(
        indptr, indices, comp.costs, comp.utils, comp.w, resource,
        np.ascontiguousarray(thresholds, dtype=np.float64),
        np.asarray(seed_mask, dtype=np.int64), comp.reevaluate, comp.max_epochs,
        comp.mcost, comp.lex)
    total_r = resource.sum()
    util = spend / total_r if total_r > 0 else np.zeros_like(spend)
    return BatchResult(part, adopt, util, epochs, conv)


def stream(seed, *tags) -> np.random.Generator:
    """Generator for a named sub-stream of a master seed."""
    return np.random.default_rng([int(seed)] + [int(t) for t in tags])


def threshold_chunks(seed, n: int, k: int, mode: str, runs: int, tag: int = 0):
    """Yield threshold arrays for ``runs`` runs in fixed-size chunks.

    Chunk ``c`` is drawn from its own stream ``(seed, tag, c)`` so the
    sequence does not depend on how chunks are consumed.
    """
    c = 0
    done = 0
    while done < runs:
        r = min(CHUNK_RUNS, runs - done)
        yield draw_thresholds(stream(seed, tag, c), n, k, mode, runs=r)
        done += r
        c += 1


def run_batch(g, behaviors: BehaviorSet, base_states: NodeStates, seeds: SeedAssignment,
              params: ModelParams, runs: int, seed) -> BatchResult:
    """``runs`` diffusions with thresholds redrawn per run and resources held fixed."""
    if runs < 1:
        raise ValueError("runs must be >= 1")
    seeded = apply_seeds(behaviors, base_states, seeds)
    indptr, indices = _csr(g)
    mask = seeds.masks(seeded.n)
    parts = []
    for thr in threshold_chunks(seed, seeded.n, behaviors.k, params.threshold_mode, runs):
        parts.append(simulate_runs(indptr, indices, behaviors, params, seeded.resource, mask, thr))
    return BatchResult(*(np.concatenate([getattr(p, f) for p in parts])
                         for f in ("participation", "adoption", "utilization", "epochs", "converged")))


def estimate_spread(g, behaviors: BehaviorSet, base_states: NodeStates, seeds: SeedAssignment,
                    params: ModelParams, runs: int, seed) -> tuple[float, float]:
    """Monte Carlo mean participation and its standard error."""
    res = run_batch(g, behaviors, base_states, seeds, params, runs, seed)
    x = res.participation.astype(np.float64)
    se = float(x.std(ddof=1) / math.sqrt(len(x))) if len(x) > 1 else 0.0
    return float(x.mean()), se


def live_edge_participation(g, behaviors: BehaviorSet, resource, seeds: SeedAssignment,
                            params: ModelParams, runs: int, seed) -> np.ndarray:
    """Per-run participation of the live-edge process (sticky semantics)."""
    resource = np.asarray(resource, dtype=np.float64).copy()
    for v, r in seeds.topups.items():
        resource[v] = max(resource[v], r)
    n = len(resource)
    dummy = NodeStates(resource, np.zeros((n, behaviors.k)))
    apply_seeds(behaviors, dummy, seeds)
    comp = _Compiled(behaviors, params, n)
    indptr, indices = _csr(g)
    kap = np.array([kappa(behaviors, r) for r in resource], dtype=np.int64)
    mask = seeds.masks(n)
    out = []
    done = 0
    c = 0
    while done < runs:
        r = min(CHUNK_RUNS, runs - done)
        draws = stream(seed, 7, c).random((r, n, behaviors.k))
        out.append(_kernels.live_edge_batch(indptr, indices, comp.costs, comp.utils, comp.w,
                                            resource, kap, mask, comp.max_epochs, comp.mcost,
                                            comp.lex, draws))
        done += r
        c += 1
    return np.concatenate(out)


def run_live_edge(g, behaviors: BehaviorSet, states: NodeStates, seeds: SeedAssignment,
                  params: ModelParams, rng) -> RunOutcome:
    """One live-edge run; ``rng`` draws each node's ``kappa(v)`` in-edges."""
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    seeded = apply_seeds(behaviors, states, seeds)
    n, k = seeded.n, behaviors.k
    comp = _Compiled(behaviors, params, n)
    indptr, indices = _csr(g)
    live = np.full((n, k), -1, dtype=np.int64)
    for v in range(n):
        nb = indices[indptr[v]:indptr[v + 1]]
        if len(nb) == 0:
            continue
        for i in range(kappa(behaviors, seeded.resource[v])):
            live[v, i] = nb[rng.integers(len(nb))]
    fc = np.empty((n, k), dtype=np.int64)
    mask = seeds.masks(n)
    final, last, ok = _kernels.diffuse_one(indptr, indices, comp.costs, comp.utils, comp.w,
                                           seeded.resource, np.zeros((n, k)), mask, False,
                                           comp.max_epochs, comp.mcost, comp.lex, live, fc)
    history = [(fc >= 0) & (fc <= t) for t in range(last + 1)]
    fb = _mask_to_bool(final, k)
    part, adopt, util = metrics(behaviors, seeded, fb)
    active = tuple(frozenset(int(v) for v in np.flatnonzero(fb[:, i])) for i in range(k))
    return RunOutcome(active, history, last, bool(ok), part, adopt, util)
