import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mbdiff import experiments as ex
from mbdiff.behavior import PAPER_BEHAVIORS, BehaviorSet, ModelParams
from mbdiff.diffuse import SeedAssignment
from mbdiff.experiments import ExperimentConfig, ExperimentError

SMALL = ExperimentConfig(generator="pa", n=60, runs=40, seed=5, heuristic="ciw-rank")


# -- budgets --------------------------------------------------------------------------------

@pytest.mark.parametrize("strategy,b,expected", [
    ("uniform", 51, (17, 17, 17)),
    ("high", 51, (0, 0, 51)),
    ("low", 51, (51, 0, 0)),
    ("proportional", 14, (2, 5, 7)),
    ("proportional", 51, (7, 18, 26)),
    ("inverse", 51, (30, 12, 9)),
    ("uniform", 0, (0, 0, 0)),
])
def test_distribute_examples(strategy, b, expected):
    assert ex.distribute_behaviors(strategy, b, PAPER_BEHAVIORS.costs).counts == expected


@given(st.sampled_from(ex.STRATEGIES), st.integers(0, 500))
def test_distribute_totals_and_quota_rule(strategy, b):
    counts = ex.distribute_behaviors(strategy, b, PAPER_BEHAVIORS.costs).counts
    assert sum(counts) == b
    if strategy in ("uniform", "proportional", "inverse"):
        costs = [Fraction(str(c)) for c in PAPER_BEHAVIORS.costs]
        w = {"uniform": [Fraction(1)] * 3, "proportional": costs, "inverse": [1 / c for c in costs]}[strategy]
        for c, wi in zip(counts, w):
            # each count is its exact quota rounded down or up
            quota = b * wi / sum(w)
            assert math.floor(quota) <= c <= math.ceil(quota)


def test_unknown_strategy():
    with pytest.raises(ExperimentError):
        ex.distribute_behaviors("skewed", 9, PAPER_BEHAVIORS.costs)


@pytest.mark.parametrize("alpha,n,expected", [(0.1, 500, 51), (0.1, 100, 9), (0.01, 100, 3), (1.0, 10, 9)])
def test_seed_count(alpha, n, expected):
    assert ex.seed_count(alpha, n, 3) == expected


# -- utilization bound -----------------------------------------------------------------------

def test_full_utilization_points():
    assert ex.full_utilization_points((0.2, 0.5, 0.7)) == (0.2, 0.5, 0.7, 0.9)
    assert ex.full_utilization_points((0.5,)) == (0.5,)
    assert ex.full_utilization_points((0.25, 0.5)) == (0.25, 0.5, 0.75)


def test_max_utilization_examples():
    assert abs(ex.max_utilization((0.2, 0.5, 0.7, 0.9)) - 0.78) <= 1e-12
    assert abs(ex.max_utilization((0.25, 0.5, 0.75)) - 0.75) <= 1e-12
    assert abs(ex.max_utilization([i / 8 for i in range(1, 8)]) - 0.875) <= 1e-12
    assert ex.max_utilization(()) == 0.0


@pytest.mark.parametrize("n", range(1, 11))
def test_uniform_points_identity(n):
    assert abs(ex.max_utilization([i / (n + 1) for i in range(1, n + 1)]) - n / (n + 1)) <= 1e-12


def test_bound_rejects_unsorted_points():
    with pytest.raises(ExperimentError):
        ex.max_utilization((0.5, 0.2))


@given(st.lists(st.floats(0.01, 1.0), min_size=1, max_size=6))
def test_bound_matches_numeric_integral(points):
    pts = sorted(set(round(p, 6) for p in points))
    # spend the largest point not above r, integrated over r ~ U(0,1)
    r = (np.arange(200_000) + 0.5) / 200_000
    idx = np.searchsorted(pts, r, side="right") - 1
    spend = np.where(idx >= 0, np.asarray(pts)[np.maximum(idx, 0)], 0.0)
    expected = spend.mean() / 0.5
    assert abs(ex.max_utilization(pts) - expected) < 1e-4


@given(st.lists(st.floats(0.05, 1.0), min_size=1, max_size=4))
def test_halved_smallest_cost_never_hurts(costs):
    costs = sorted(set(round(c, 4) for c in costs))
    base = ex.max_utilization(ex.full_utilization_points(costs))
    extended = ex.max_utilization(ex.full_utilization_points([costs[0] / 2] + costs))
    assert extended >= base - 1e-12


# -- statistics ------------------------------------------------------------------------------

def test_compare_identical_and_shifted():
    x = np.array([0.2, 0.4, 0.6])
    assert ex.compare(x, x) == (0.0, 1.0)
    rng = np.random.default_rng(0)
    diff, p = ex.compare(rng.normal(0, 1, 1000), rng.normal(1, 1, 1000))
    assert diff < 0 and p < 0.01
    assert ex.compare(np.ones(3), np.zeros(3)) == (1.0, 0.0)
    with pytest.raises(ExperimentError):
        ex.compare([1.0], [1.0, 2.0])


def test_summary_interval():
    s = ex.Summary.of("x", [1.0, 2.0, 3.0])
    assert s.mean == 2.0
    assert s.stderr == pytest.approx(1 / math.sqrt(3))
    assert s.ci_high - s.mean == pytest.approx(4.302652729911275 / math.sqrt(3))
    one = ex.Summary.of("x", [4.0])
    assert (one.mean, one.stderr, one.ci_low, one.ci_high) == (4.0, 0.0, 4.0, 4.0)
    assert s.overlaps(ex.Summary.of("x", [3.5, 4.0])) and not one.overlaps(ex.Summary.of("x", [1.0, 1.0]))


# -- configuration -----------------------------------------------------------------------------

def test_config_errors_name_the_field():
    with pytest.raises(ExperimentError, match="alpha"):
        ExperimentConfig(alpha=0.0)
    with pytest.raises(ExperimentError, match="heuristic"):
        ExperimentConfig(heuristic="pagerank")
    with pytest.raises(ExperimentError, match="mode"):
        ExperimentConfig(mode="xx")
    with pytest.raises(ExperimentError, match="generator"):
        ExperimentConfig(generator="er")


def test_network_average_needs_a_generator(tmp_path):
    p = tmp_path / "g.txt"
    p.write_text("0 1\n1 2\n")
    with pytest.raises(ExperimentError, match="undefined"):
        ex.run_experiment(ExperimentConfig(graph_path=str(p), mode="na", runs=2))


def test_threshold_average_on_edge_list(tmp_path):
    p = tmp_path / "g.txt"
    p.write_text("0 1\n1 2\n2 3\n")
    r = ex.run_experiment(ExperimentConfig(graph_path=str(p), heuristic="degree-t", b=3, runs=5))
    assert r["participation"].mean >= 3


# -- drivers ---------------------------------------------------------------------------------

def test_all_seeded_assignment_uses_knapsack():
    res = np.array([0.1, 0.3, 0.6, 1.0, 1.4])
    s = ex.all_seeded_assignment(PAPER_BEHAVIORS, res)
    assert s.sets == (frozenset({1, 3, 4}), frozenset({2, 4}), frozenset({3, 4}))


def test_single_run_summary():
    r = ex.run_experiment(SMALL.with_(runs=1))
    assert r["participation"].mean == r.runs.participation[0]
    assert r["participation"].stderr == 0.0
    r = ex.run_experiment(SMALL.with_(runs=1, mode="na"))
    assert r["utilization"].mean == r.runs.utilization[0]


@pytest.mark.parametrize("mode", ["ta", "na"])
def test_edgeless_graph_counts_only_seeds(mode):
    cfg = ExperimentConfig(generator="sc", n=30, generator_params={"avg_degree": 0}, heuristic="degree-t",
                           b=6, runs=20, mode=mode)
    r = ex.run_experiment(cfg)
    assert np.all(r.runs.participation == 6)
    assert r["participation"].stderr == 0.0


@pytest.mark.parametrize("mode", ["ta", "na"])
def test_results_are_deterministic(mode):
    a = ex.run_experiment(SMALL.with_(mode=mode))
    b = ex.run_experiment(SMALL.with_(mode=mode))
    for m in ex.METRICS:
        assert np.array_equal(a[m].samples, b[m].samples)
    c = ex.run_experiment(SMALL.with_(mode=mode, seed=6))
    assert not np.array_equal(a["participation"].samples, c["participation"].samples)


def test_random_heuristic_reselects_per_run():
    r = ex.run_experiment(SMALL.with_(heuristic="random", runs=5))
    assert len(r.seeds) == 5 and len({s.union for s in r.seeds}) > 1
    r = ex.run_experiment(SMALL.with_(runs=5))
    assert len(r.seeds) == 1


def test_redrawn_resources_change_seeds():
    r = ex.run_experiment(SMALL.with_(runs=4, redraw_resources=True))
    assert len(r.seeds) == 4


def test_utilization_within_bound():
    r = ex.run_experiment(SMALL.with_(heuristic="all", runs=100, params=ModelParams(adoption_mode="reevaluate")))
    bound = ex.max_utilization(ex.full_utilization_points(PAPER_BEHAVIORS.costs))
    u = r["utilization"]
    assert u.mean <= bound + 3 * u.stderr


def test_partial_flag_reaches_result():
    poor = BehaviorSet((0.99,), (0.5,))
    cfg = SMALL.with_(behaviors=poor, heuristic="ciw-rank", b=40,
                      flags=ex.seedsel.VariantFlags("s", "nt"), runs=3)
    assert ex.run_experiment(cfg).partial


def test_replicates_use_distinct_seeds():
    summaries, results = ex.run_replicated(SMALL.with_(runs=10), 3)
    assert len({r.config.seed for r in results}) == 3
    assert summaries["participation"].mean == pytest.approx(np.mean([r["participation"].mean for r in results]))
    with pytest.raises(ExperimentError):
        ex.run_replicated(SMALL, 1)


# -- constant in-degree harness ----------------------------------------------------------------

def test_random_in_neighbors_shape():
    indptr, indices = ex.random_in_neighbors(20, 3, np.random.default_rng(0))
    assert np.all(np.diff(indptr) == 3)
    for v in range(20):
        nb = indices[indptr[v]:indptr[v + 1]]
        assert v not in nb and len(set(nb.tolist())) == 3
    with pytest.raises(ExperimentError):
        ex.random_in_neighbors(3, 3, np.random.default_rng(0))


def test_threshold_and_network_averages_agree_on_constant_in_degree():
    n = 80
    res = ex.fixed_resources(1, n)
    seeds = ex.all_seeded_assignment(PAPER_BEHAVIORS, np.where(np.arange(n) < 8, res, 0.0))
    seeds = SeedAssignment.from_lists([s for s in seeds.sets])
    ta, na = ex.regular_average_pair(n, 3, PAPER_BEHAVIORS, res, seeds, ModelParams(), 30, 30, seed=3)
    assert ta.overlaps(na)
    assert ta.mean > 8
