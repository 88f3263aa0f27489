"""Monte Carlo experiment drivers, behavior distribution strategies and utilization bounds."""

from __future__ import annotations

import itertools
import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np
from scipy import stats

from . import netgen, seedsel
from .behavior import (
    COST_EPS,
    PAPER_BEHAVIORS,
    BehaviorSet,
    ModelParams,
    NodeStates,
    draw_thresholds,
    select_adoption_set,
)
from .diffuse import (
    BatchResult,
    SeedAssignment,
    apply_seeds,
    simulate_runs,
    stream,
    threshold_chunks,
)

log = logging.getLogger(__name__)

STRATEGIES = ("low", "inverse", "uniform", "proportional", "high")
METRICS = ("participation", "adoption", "utilization")
THRESHOLD_AVERAGE, NETWORK_AVERAGE = "ta", "na"
ALL_SEEDED = "all"

# sub-stream tags under the master seed
_TOPOLOGY, _RESOURCE, _SELECT, _THRESH, _NA_TOPOLOGY, _NA_THRESH = range(1, 7)


class ExperimentError(ValueError):
    pass


# -- behavior budgets ---------------------------------------------------------------

def distribute_behaviors(strategy: str, total_b: int, costs) -> seedsel.SeedBudget:
    """Split ``total_b`` seeds over behaviors by largest remainder (ties to the lower index)."""
    if total_b < 0:
        raise ExperimentError("total_b must be >= 0")
    k = len(costs)
    if strategy == "low":
        return seedsel.SeedBudget((total_b,) + (0,) * (k - 1))
    if strategy == "high":
        return seedsel.SeedBudget((0,) * (k - 1) + (total_b,))
    if strategy == "uniform":
        weights = [Fraction(1)] * k
    elif strategy == "proportional":
        weights = [Fraction(str(c)) for c in costs]
    elif strategy == "inverse":
        weights = [1 / Fraction(str(c)) for c in costs]
    else:
        raise ExperimentError(f"unknown strategy {strategy!r}; choose from {STRATEGIES}")
    total_w = sum(weights)
    quotas = [total_b * w / total_w for w in weights]
    counts = [math.floor(q) for q in quotas]
    short = total_b - sum(counts)
    by_remainder = sorted(range(k), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in by_remainder[:short]:
        counts[i] += 1
    return seedsel.SeedBudget(tuple(counts))


def seed_count(alpha: float, n: int, k: int) -> int:
    """``round(alpha * n)`` moved to the nearest multiple of ``k`` (at least ``k`` when alpha > 0)."""
    if not 0.0 < alpha <= 1.0:
        raise ExperimentError(f"alpha={alpha} outside (0, 1]")
    b = round(alpha * n)
    b = max(k, k * round(b / k))
    while b > n:
        b -= k
    return b


# -- utilization bound --------------------------------------------------------------

def full_utilization_points(costs) -> tuple[float, ...]:
    """Distinct subset sums of ``costs`` in (0, 1], ascending."""
    sums = set()
    costs = [float(c) for c in costs]
    for r in range(1, len(costs) + 1):
        for combo in itertools.combinations(costs, r):
            s = math.fsum(combo)
            if s <= 1.0 + COST_EPS:
                sums.add(round(s, 12))
    return tuple(sorted(sums))


def max_utilization(points) -> float:
    """Best expected utilization for U(0,1) resources given the exact-spend levels ``points``.

    A node with resource ``r`` spends the largest point not above ``r``;
    integrating over ``r`` gives ``2 (sum mu_i mu_{i+1} + mu_n) - 2 sum mu_i^2``.
    """
    mu = [float(p) for p in points]
    if not mu:
        return 0.0
    if any(b <= a for a, b in zip(mu, mu[1:])) or mu[0] <= 0 or mu[-1] > 1:
        raise ExperimentError("points must be strictly ascending in (0, 1]")
    cross = math.fsum(a * b for a, b in zip(mu, mu[1:]))
    return 2.0 * (cross + mu[-1]) - 2.0 * math.fsum(m * m for m in mu)


# -- summaries ------------------------------------------------------------------------

@dataclass(frozen=True)
class Summary:
    metric: str
    mean: float
    stderr: float
    ci_low: float
    ci_high: float
    samples: np.ndarray = field(repr=False, compare=False)

    @classmethod
    def of(cls, metric: str, samples) -> Summary:
        x = np.asarray(samples, dtype=np.float64)
        if len(x) == 0:
            raise ExperimentError("cannot summarize zero runs")
        mean = float(x.mean())
        se = float(x.std(ddof=1) / math.sqrt(len(x))) if len(x) > 1 else 0.0
        half = float(stats.t.ppf(0.975, len(x) - 1)) * se if len(x) > 1 else 0.0
        return cls(metric, mean, se, mean - half, mean + half, x)

    def overlaps(self, other: Summary) -> bool:
        return self.ci_low <= other.ci_high and other.ci_low <= self.ci_high


def compare(a, b) -> tuple[float, float]:
    """Welch two-sample test: ``(mean(a) - mean(b), two-sided p-value)``."""
    xa = np.asarray(getattr(a, "samples", a), dtype=np.float64)
    xb = np.asarray(getattr(b, "samples", b), dtype=np.float64)
    if len(xa) < 2 or len(xb) < 2:
        raise ExperimentError("compare needs at least 2 runs on each side")
    diff = float(xa.mean() - xb.mean())
    if xa.var() == 0 and xb.var() == 0:
        return diff, 1.0 if diff == 0 else 0.0
    p = float(stats.ttest_ind(xa, xb, equal_var=False).pvalue)
    return diff, p


# -- configuration --------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment cell.

    ``heuristic`` is a selector name from :data:`seedsel.HEURISTICS` or
    ``"all"`` (every node seeded with its utility-maximizing affordable set).
    The seed count comes from ``b`` when given, else from ``alpha``.
    """

    generator: str | None = "pa"
    n: int = 500
    graph_path: str | None = None
    generator_params: dict = field(default_factory=dict)
    behaviors: BehaviorSet = PAPER_BEHAVIORS
    alpha: float = 0.1
    b: int | None = None
    heuristic: str = "ciw-rank"
    flags: seedsel.VariantFlags = seedsel.S_T
    strategy: str = "uniform"
    mode: str = THRESHOLD_AVERAGE
    runs: int = 1000
    seed: int = 0
    params: ModelParams = ModelParams()
    kkt_runs: int = 1000
    redraw_resources: bool = False

    def __post_init__(self):
        problems = []
        if self.graph_path is None and self.generator not in netgen.GENERATORS:
            problems.append(f"generator: unknown {self.generator!r}")
        if not 0.0 < self.alpha <= 1.0:
            problems.append(f"alpha: {self.alpha} outside (0, 1]")
        if self.b is not None and self.b < 0:
            problems.append("b: must be >= 0")
        if self.runs < 1:
            problems.append("runs: must be >= 1")
        if self.heuristic != ALL_SEEDED and self.heuristic not in seedsel.HEURISTICS:
            problems.append(f"heuristic: unknown {self.heuristic!r}")
        if self.strategy not in STRATEGIES:
            problems.append(f"strategy: unknown {self.strategy!r}")
        if self.mode not in (THRESHOLD_AVERAGE, NETWORK_AVERAGE):
            problems.append(f"mode: must be 'ta' or 'na', got {self.mode!r}")
        if self.kkt_runs < 1:
            problems.append("kkt_runs: must be >= 1")
        if problems:
            raise ExperimentError("invalid config: " + "; ".join(problems))

    def with_(self, **changes) -> ExperimentConfig:
        return replace(self, **changes)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    runs: BatchResult
    seeds: list  # SeedAssignment per run, or a single shared one
    summaries: dict[str, Summary]
    partial: bool = False

    @property
    def all_converged(self) -> bool:
        return bool(np.all(self.runs.converged))

    def __getitem__(self, metric: str) -> Summary:
        return self.summaries[metric]


def fixed_resources(seed: int, n: int) -> np.ndarray:
    """The resource vector an experiment with master ``seed`` holds fixed."""
    return stream(seed, _RESOURCE).random(n)


def all_seeded_assignment(behaviors: BehaviorSet, resource) -> SeedAssignment:
    """Seed every node with the utility-maximizing set of behaviors it can afford."""
    sets = [[] for _ in range(behaviors.k)]
    items = {i: (behaviors.utilities[i], behaviors.costs[i]) for i in range(behaviors.k)}
    for v, r in enumerate(np.asarray(resource, dtype=np.float64)):
        for i in select_adoption_set(items, float(r)):
            sets[i].append(v)
    return SeedAssignment.from_lists(sets)


def _topology(config: ExperimentConfig, rng) -> netgen.Graph:
    if config.graph_path is not None:
        return netgen.read_edge_list(config.graph_path)
    return netgen.generate(config.generator, config.n, rng, **config.generator_params)


def _budget(config: ExperimentConfig, n: int) -> seedsel.SeedBudget:
    k = config.behaviors.k
    total = config.b if config.b is not None else seed_count(config.alpha, n, k)
    return distribute_behaviors(config.strategy, total, config.behaviors.costs)


def select(config: ExperimentConfig, g, resource, rng) -> SeedAssignment:
    if config.heuristic == ALL_SEEDED:
        return all_seeded_assignment(config.behaviors, resource)
    return seedsel.select_seeds(config.heuristic, g, resource, _budget(config, len(resource)),
                                config.behaviors, config.flags, config.params, rng=rng,
                                runs=config.kkt_runs)


def _seeded_resource(behaviors, resource, seeds: SeedAssignment) -> tuple[np.ndarray, np.ndarray]:
    n = len(resource)
    st = apply_seeds(behaviors, NodeStates(resource, np.zeros((n, behaviors.k))), seeds)
    return st.resource, seeds.masks(n)


def _summarize(config, batch: BatchResult, seeds, partial) -> ExperimentResult:
    summaries = {m: Summary.of(m, getattr(batch, m)) for m in METRICS}
    return ExperimentResult(config, batch, seeds, summaries, partial)


def _concat(parts: list[BatchResult]) -> BatchResult:
    return BatchResult(*(np.concatenate([getattr(p, f) for p in parts])
                         for f in ("participation", "adoption", "utilization", "epochs", "converged")))


def _select_quietly(config, g, resource, rng) -> tuple[SeedAssignment, bool]:
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", seedsel.PartialAssignmentWarning)
        seeds = select(config, g, resource, rng)
    for w in caught:
        log.warning("%s", w.message)
    return seeds, seeds.partial


def run_threshold_average(config: ExperimentConfig) -> ExperimentResult:
    """Fixed topology and resources; thresholds redrawn every run.

    Seeds are selected once, except for the random selector which draws a
    fresh seed set per run.
    """
    g = _topology(config, stream(config.seed, _TOPOLOGY))
    n = g.node_count
    k = config.behaviors.k
    base_res = fixed_resources(config.seed, n)
    indptr, indices = np.asarray(g.indptr), np.asarray(g.indices)
    per_run = config.heuristic == "random" or config.redraw_resources
    if not per_run:
        seeds, partial = _select_quietly(config, g, base_res, stream(config.seed, _SELECT))
        res, mask = _seeded_resource(config.behaviors, base_res, seeds)
        parts = [simulate_runs(indptr, indices, config.behaviors, config.params, res, mask, thr)
                 for thr in threshold_chunks(config.seed, n, k, config.params.threshold_mode,
                                             config.runs, tag=_THRESH)]
        return _summarize(config, _concat(parts), [seeds], partial)
    parts, all_seeds, partial = [], [], False
    for r in range(config.runs):
        resource = stream(config.seed, _RESOURCE, r).random(n) if config.redraw_resources else base_res
        seeds, p = _select_quietly(config, g, resource, stream(config.seed, _SELECT, r))
        partial |= p
        res, mask = _seeded_resource(config.behaviors, resource, seeds)
        thr = draw_thresholds(stream(config.seed, _THRESH, r), n, k, config.params.threshold_mode, runs=1)
        parts.append(simulate_runs(indptr, indices, config.behaviors, config.params, res, mask, thr))
        all_seeds.append(seeds)
    return _summarize(config, _concat(parts), all_seeds, partial)


def run_network_average(config: ExperimentConfig) -> ExperimentResult:
    """Fixed resources and thresholds by node index; topology regenerated and seeds reselected every run."""
    if config.graph_path is not None:
        raise ExperimentError("network average undefined for fixed real-world topology")
    n, k = config.n, config.behaviors.k
    base_res = fixed_resources(config.seed, n)
    thr = draw_thresholds(stream(config.seed, _NA_THRESH), n, k, config.params.threshold_mode, runs=1)
    parts, all_seeds, partial = [], [], False
    for r in range(config.runs):
        g = _topology(config, stream(config.seed, _NA_TOPOLOGY, r))
        resource = stream(config.seed, _RESOURCE, r).random(n) if config.redraw_resources else base_res
        seeds, p = _select_quietly(config, g, resource, stream(config.seed, _SELECT, r))
        partial |= p
        res, mask = _seeded_resource(config.behaviors, resource, seeds)
        parts.append(simulate_runs(np.asarray(g.indptr), np.asarray(g.indices), config.behaviors,
                                   config.params, res, mask, thr))
        all_seeds.append(seeds)
    return _summarize(config, _concat(parts), all_seeds, partial)


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    if config.mode == NETWORK_AVERAGE:
        return run_network_average(config)
    return run_threshold_average(config)


# -- constant in-degree harness ------------------------------------------------------

def random_in_neighbors(n: int, rho: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """CSR influencer lists: every node observes ``rho`` distinct others chosen uniformly."""
    if not 1 <= rho < n:
        raise ExperimentError(f"in-degree {rho} must be in [1, {n - 1}]")
    indptr = np.arange(0, (n + 1) * rho, rho, dtype=np.int64)
    indices = np.empty(n * rho, dtype=np.int64)
    for v in range(n):
        pick = rng.choice(n - 1, size=rho, replace=False)
        pick[pick >= v] += 1
        indices[v * rho:(v + 1) * rho] = np.sort(pick)
    return indptr, indices


def regular_average_pair(n: int, rho: int, behaviors: BehaviorSet, resource, seeds: SeedAssignment,
                         params: ModelParams, outer: int, inner: int, seed: int) -> tuple[Summary, Summary]:
    """Participation under the two averaging designs on random constant in-degree digraphs.

    TA: ``outer`` networks, each run with ``inner`` threshold draws. NA:
    ``outer`` threshold draws, each run on ``inner`` networks. Returns the
    per-outer-draw means summarized for each design.
    """
    res, mask = _seeded_resource(behaviors, np.asarray(resource, dtype=np.float64), seeds)
    k = behaviors.k
    ta, na = [], []
    for o in range(outer):
        indptr, indices = random_in_neighbors(n, rho, stream(seed, 1, o))
        thr = draw_thresholds(stream(seed, 2, o), n, k, params.threshold_mode, runs=inner)
        ta.append(simulate_runs(indptr, indices, behaviors, params, res, mask, thr).participation.mean())
        fixed = draw_thresholds(stream(seed, 3, o), n, k, params.threshold_mode, runs=1)
        net_rng = stream(seed, 4, o)
        vals = []
        for _ in range(inner):
            indptr, indices = random_in_neighbors(n, rho, net_rng)
            vals.append(simulate_runs(indptr, indices, behaviors, params, res, mask, fixed).participation[0])
        na.append(np.mean(vals))
    return Summary.of("participation", ta), Summary.of("participation", na)


def replicate_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1)[0])


def run_replicated(config: ExperimentConfig, outer: int) -> tuple[dict[str, Summary], list[ExperimentResult]]:
    """Repeat an experiment under ``outer`` independent master seeds.

    Each replicate fixes its own topology (TA) or thresholds (NA) and its
    own resources, so the summary over replicate means carries the
    variation a single fixed draw hides.
    """
    if outer < 2:
        raise ExperimentError("need at least 2 replicates")
    results = [run_experiment(config.with_(seed=replicate_seed(config.seed, o))) for o in range(outer)]
    summaries = {m: Summary.of(m, [r[m].mean for r in results]) for m in METRICS}
    return summaries, results
