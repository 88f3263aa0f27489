import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from mbdiff import cli, netgen


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def pa_file(tmp_path):
    p = tmp_path / "pa.txt"
    assert cli.main(["generate", "pa", "--n", "500", "--seed", "7", "--out", str(p)]) == 0
    return p


# -- generate -------------------------------------------------------------------------------

def test_generate_is_byte_identical(tmp_path, pa_file):
    again = tmp_path / "again.txt"
    cli.main(["generate", "pa", "--n", "500", "--seed", "7", "--out", str(again)])
    assert pa_file.read_bytes() == again.read_bytes()
    other = tmp_path / "other.txt"
    cli.main(["generate", "pa", "--n", "500", "--seed", "8", "--out", str(other)])
    assert pa_file.read_bytes() != other.read_bytes()


def test_generate_ring(capsys):
    code, out, _ = run(capsys, "generate", "sw", "--n", "10", "--p", "0")
    assert code == 0
    assert len(out.splitlines()) == 10


def test_generate_sc_mean_degree(tmp_path):
    p = tmp_path / "sc.txt"
    cli.main(["generate", "sc", "--n", "500", "--avg-degree", "10", "--out", str(p)])
    g = netgen.read_edge_list(p)
    assert 2 * g.edge_count_undirected / g.node_count >= 10


def test_unknown_generator_is_usage_error(capsys):
    code, _, err = run(capsys, "generate", "er", "--n", "10")
    assert code == cli.EXIT_USAGE
    assert "invalid choice" in err


# -- seeds ---------------------------------------------------------------------------------

def test_seeds_for_ten_percent(capsys, pa_file):
    code, out, _ = run(capsys, "seeds", "--graph", str(pa_file), "--alpha", "0.1", "--seed", "1")
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "# budget 17,17,17"
    body = [ln.split() for ln in lines[1:]]
    assert len(body) == 51
    nodes = [int(v) for v, _ in body]
    assert len(set(nodes)) == 51


def test_seeds_zero_budget_is_header_only(capsys, pa_file):
    code, out, _ = run(capsys, "seeds", "--graph", str(pa_file), "--b", "0")
    assert code == 0 and out == "# budget 0,0,0\n"


def test_seeds_without_graph_is_usage_error(capsys):
    code, _, err = run(capsys, "seeds", "--b", "3")
    assert code == cli.EXIT_USAGE and "graph" in err


def test_seeds_missing_file_is_usage_error(capsys, tmp_path):
    code, _, _ = run(capsys, "seeds", "--graph", str(tmp_path / "nope.txt"), "--b", "3")
    assert code == cli.EXIT_USAGE


def test_partial_assignment_exit_status(capsys, tmp_path):
    g = tmp_path / "g.txt"
    g.write_text("0 1\n1 2\n")
    code, out, err = run(capsys, "seeds", "--graph", str(g), "--b", "3", "--topup", "nt",
                         "--costs", "0.999", "--heuristic", "ciw-rank", "--k", "1")
    assert code == cli.EXIT_PARTIAL
    assert out.startswith("# budget 3")
    assert "warning" in err


def test_seeds_keep_original_node_labels(capsys, tmp_path):
    g = tmp_path / "g.txt"
    g.write_text("10 20\n20 30\n20 40\n")
    code, out, _ = run(capsys, "seeds", "--graph", str(g), "--b", "1", "--k", "1", "--costs", "0.5",
                       "--heuristic", "degree-t")
    assert code == 0 and out.splitlines()[1] == "20 0"


# -- config files ------------------------------------------------------------------------------

def test_flags_override_config(capsys, tmp_path, pa_file):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"graph": str(pa_file), "b": 6, "heuristic": "degree-t"}))
    _, out, _ = run(capsys, "seeds", "--config", str(cfg))
    assert out.splitlines()[0] == "# budget 2,2,2"
    _, out, _ = run(capsys, "seeds", "--config", str(cfg), "--b", "9")
    assert out.splitlines()[0] == "# budget 3,3,3"


@pytest.mark.parametrize("body,field", [
    ({"runs": "many"}, "runs"),
    ({"colour": 1}, "colour"),
    ({"costs": 0.5}, "costs"),
])
def test_bad_config_names_the_field(capsys, tmp_path, body, field):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(body))
    code, _, err = run(capsys, "experiment", "--config", str(cfg))
    assert code == cli.EXIT_USAGE and field in err


def test_invalid_experiment_values_are_reported(capsys):
    code, _, err = run(capsys, "experiment", "--n", "50", "--alpha", "2", "--heuristic", "nope", "--runs", "1")
    assert code == cli.EXIT_USAGE
    assert "alpha" in err and "heuristic" in err


def test_config_not_json(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text("{not json")
    code, _, _ = run(capsys, "bound", "--config", str(cfg))
    assert code == cli.EXIT_USAGE


# -- experiment -------------------------------------------------------------------------------

def _experiment(capsys, *extra):
    return run(capsys, "experiment", "--generator", "pa", "--n", "80", "--seed", "5", *extra)


def test_experiment_csv_is_deterministic(capsys):
    code, a, _ = _experiment(capsys, "--runs", "1")
    _, b, _ = _experiment(capsys, "--runs", "1")
    assert code == 0 and a == b


def test_experiment_csv_layout(capsys):
    _, out, _ = _experiment(capsys, "--runs", "4", "--heuristic", "degree-t")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert tuple(rows[0]) == cli.CSV_COLUMNS
    runs = [r for r in rows if r["run"] != "summary"]
    summary = {r["metric"]: r for r in rows if r["run"] == "summary"}
    assert [r["run"] for r in runs] == ["0", "1", "2", "3"]
    assert set(summary) == {"participation", "adoption", "utilization"}
    mean = np.mean([float(r["participation"]) for r in runs])
    assert float(summary["participation"]["mean"]) == pytest.approx(mean, abs=1e-6)
    assert runs[0]["variant"] == "S-T" and runs[0]["topology"] == "pa-80"
    assert len({r["seed_digest"] for r in runs}) == 1


def test_experiment_on_edge_list(capsys, tmp_path, pa_file):
    code, out, _ = run(capsys, "experiment", "--graph", str(pa_file), "--runs", "2", "--heuristic", "all",
                       "--adoption-mode", "reevaluate")
    assert code == 0
    assert "pa.txt" in out


def test_experiment_network_average_rejects_edge_list(capsys, pa_file):
    code, _, err = run(capsys, "experiment", "--graph", str(pa_file), "--mode", "na", "--runs", "2")
    assert code == cli.EXIT_USAGE and "network average" in err


def test_epoch_cap_sets_exit_status(capsys):
    code, out, err = _experiment(capsys, "--runs", "3", "--heuristic", "all", "--adoption-mode", "reevaluate",
                                 "--max-epochs", "1")
    assert code == cli.EXIT_NONCONVERGED
    assert "epoch cap" in err and out


# -- bound and eia --------------------------------------------------------------------------------

def test_bound_values(capsys):
    assert run(capsys, "bound", "--costs", "0.2,0.5,0.7")[1] == "0.78\n"
    assert run(capsys, "bound", "--costs", "0.25,0.5")[1] == "0.75\n"
    out = run(capsys, "bound", "--costs", "0.2,0.5,0.7", "--points")[1]
    assert out.splitlines()[0] == "points 0.2,0.5,0.7,0.9"


def test_bad_costs_are_usage_errors(capsys):
    assert run(capsys, "bound", "--costs", "0.5,0.2")[0] == cli.EXIT_USAGE
    assert run(capsys, "bound", "--costs", "a,b")[0] == cli.EXIT_USAGE


def test_eia_of_seed_file(capsys, tmp_path):
    g = tmp_path / "star.txt"
    g.write_text("".join(f"0 {v}\n" for v in range(1, 6)))
    seeds = tmp_path / "seeds.txt"
    seeds.write_text("# budget 1\n0 0\n")
    code, out, _ = run(capsys, "eia", "--graph", str(g), "--seeds", str(seeds), "--k", "1", "--costs", "0.0001")
    assert code == 0
    assert out.splitlines() == ["behavior,cost,expected_immediate_adoption", "0,0.000100,5.000000",
                                "total,,5.000000"]


def test_eia_rejects_bad_seed_lines(capsys, tmp_path):
    g = tmp_path / "g.txt"
    g.write_text("0 1\n")
    seeds = tmp_path / "seeds.txt"
    seeds.write_text("0 7\n")
    code, _, err = run(capsys, "eia", "--graph", str(g), "--seeds", str(seeds))
    assert code == cli.EXIT_USAGE and "seeds.txt:1" in err


def test_seeds_roundtrip_into_eia(capsys, tmp_path, pa_file):
    seeds = tmp_path / "s.txt"
    assert cli.main(["seeds", "--graph", str(pa_file), "--b", "9", "--out", str(seeds)]) == 0
    code, out, _ = run(capsys, "eia", "--graph", str(pa_file), "--seeds", str(seeds))
    assert code == 0 and float(out.splitlines()[-1].split(",")[-1]) > 0


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "mbdiff.cli", "bound", "--costs", "0.2,0.5,0.7"],
                          capture_output=True, text=True, check=True)
    assert proc.stdout == "0.78\n"
