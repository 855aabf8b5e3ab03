import re
from pathlib import Path

import pandas as pd
import pytest

import runner
from analysis.summarize_results import main as summarize_main
from analysis.summarize_results import summarize_results
from cmdf import properties
from cmdf.network import read_edge_list

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"
SCIENTIFIC = re.compile(r"^-?\d\.\d{11}e[+-]\d{2}$")
CHAIN_DEPTHS = ["--L", "4", "--L", "5", "--L", "6", "--L", "7", "--L", "8"]


@pytest.fixture
def no_scenario_properties(monkeypatch):
    monkeypatch.setattr(properties, "SCENARIO_PROPERTIES", {})


def test_analyze_complete_graph(tmp_path):
    assert runner.main(["analyze", "--builtin", "complete", "--out", str(tmp_path), "--L", "1", "--L", "2"]) == 0
    gaps = pd.read_csv(tmp_path / "gaps.csv")
    assert len(gaps) == 10
    assert list(gaps.columns[:5]) == ["L", "node", "gap_param", "gap_consistency", "gap_total"]
    assert gaps[["gap_param", "gap_consistency", "gap_total"]].to_numpy().max() <= 1e-8
    assert (gaps["mse_theory"] - gaps["mse_central"]).abs().max() <= 1e-6
    scan = pd.read_csv(tmp_path / "minimal_fusion.csv")
    assert scan["L_min"].tolist() == [1] * 5
    assert (tmp_path / "rates.csv").exists()


def test_analyze_is_byte_identical(tmp_path):
    first, second = tmp_path / "a", tmp_path / "b"
    for out in (first, second):
        assert runner.main(["analyze", "--builtin", "chain", "--out", str(out)] + CHAIN_DEPTHS) == 0
    for name in ("gaps.csv", "rates.csv", "minimal_fusion.csv"):
        assert (first / name).read_bytes() == (second / name).read_bytes()

    gaps = pd.read_csv(first / "gaps.csv", dtype=str)
    assert all(SCIENTIFIC.match(v) for v in gaps["gap_total"])
    scan = pd.read_csv(first / "minimal_fusion.csv")
    assert scan["L_min"].tolist() == [4, 3, 2, 3, 4]
    rates = pd.read_csv(first / "rates.csv")
    assert set(rates["quantity"]) == {"gap_param", "gap_consistency", "gap_total"}
    fitted = rates.dropna(subset=["q"])
    assert (fitted["relative_residual"] >= 0.0).all()
    assert (rates["node"] == "all").sum() == 3


def test_simulate_is_byte_identical(tmp_path):
    outputs = []
    for out in (tmp_path / "a", tmp_path / "b"):
        args = ["simulate", "--builtin", "chain", "--out", str(out), "--L", "4",
                "--trials", "2", "--steps", "10", "--seed", "3"]
        assert runner.main(args) == 0
        outputs.append((out / "mse.csv").read_bytes())
    assert outputs[0] == outputs[1]

    mse = pd.read_csv(tmp_path / "a" / "mse.csv")
    assert list(mse.columns) == [
        "L", "node", "mse_empirical", "mse_theory_prior", "mse_theory_posterior",
        "mse_central_prior", "mse_central_posterior", "stderr", "trials",
    ]
    assert len(mse) == 5
    assert (mse["trials"] == 2).all()
    assert mse["mse_central_posterior"].nunique() == 1
    assert (mse["mse_central_posterior"] < mse["mse_central_prior"]).all()
    assert (mse["mse_theory_posterior"] >= mse["mse_central_posterior"] - 1e-9).all()


def test_graph_command(tmp_path):
    assert runner.main(["graph", "--builtin", "chain", "--out", str(tmp_path)]) == 0
    g = read_edge_list(tmp_path / "graph.edges")
    assert g.node_count == 5
    assert g.edges == frozenset({(0, 1), (1, 2), (2, 3), (3, 4)})


def test_graph_keeps_positions(tmp_path):
    assert runner.main(["graph", "--builtin", "paper", "--graph-seed", "1", "--out", str(tmp_path / "1")]) == 0
    g = read_edge_list(tmp_path / "1" / "graph.edges")
    assert g.node_count == 20
    assert g.positions.shape == (20, 2)


def test_scenario_file(tmp_path):
    args = ["analyze", "--scenario", str(SCENARIO_DIR / "ring.yaml"), "--out", str(tmp_path), "--L", "3", "--L", "4"]
    assert runner.main(args) == 0
    assert len(pd.read_csv(tmp_path / "gaps.csv")) == 12


def test_unobservable_depth_exits_with_error(tmp_path):
    assert runner.main(["analyze", "--builtin", "chain", "--out", str(tmp_path), "--L", "1"]) == runner.EXIT_ERROR
    assert not (tmp_path / "gaps.csv").exists()


def test_unknown_builtin(tmp_path):
    assert runner.main(["graph", "--builtin", "nope", "--out", str(tmp_path)]) == runner.EXIT_ERROR


def test_verify_passes(capsys, no_scenario_properties):
    assert runner.main(["verify", "--systems", "3"]) == runner.EXIT_OK
    out = capsys.readouterr().out
    assert "PROPERTY VERIFICATION" in out
    assert f"Passed: {len(properties.RANDOM_PROPERTIES)}/{len(properties.RANDOM_PROPERTIES)}" in out


def test_verify_reports_injected_fault(capsys, monkeypatch, no_scenario_properties):
    monkeypatch.setenv("CMDF_VERIFY_FAULT", "closed_loop_bounds")
    assert runner.main(["verify", "--systems", "3", "--seed", "5"]) == runner.EXIT_PROPERTY_FAILED
    out = capsys.readouterr().out
    assert "[FAIL] closed_loop_bounds" in out
    assert "master_seed=5, index=0" in out


def test_summarize_results(tmp_path):
    assert runner.main(["analyze", "--builtin", "chain", "--out", str(tmp_path)] + CHAIN_DEPTHS) == 0
    assert runner.main(["simulate", "--builtin", "chain", "--out", str(tmp_path), "--L", "4", "--L", "6",
                        "--trials", "3", "--steps", "10"]) == 0
    results = summarize_results(tmp_path)
    assert results["gaps"]["L"].tolist() == [4, 5, 6, 7, 8]
    assert (results["gaps"]["nodes"] == 5).all()
    assert results["mse"]["L"].tolist() == [4, 6]
    assert "nodes_outside_3se" in results["mse"].columns
    assert (results["mse"]["mse_empirical_mean"] > 0.0).all()
    assert results["mse"]["mse_central_posterior"].nunique() == 1
    assert (tmp_path / "summary_gaps.csv").exists()
    assert (tmp_path / "summary_mse.csv").exists()


def test_summarize_empty_directory(tmp_path):
    assert summarize_main([str(tmp_path)]) == 1


@pytest.mark.slow
def test_verify_default_run(capsys):
    assert runner.main(["verify"]) == runner.EXIT_OK
