from pathlib import Path

import numpy as np
import pytest

from cmdf.errors import ScenarioError
from cmdf.network import random_geometric
from cmdf.simulate import paper_scenario
from utils.scenario_registry import (
    BUILTIN_SCENARIOS,
    get_all_scenarios,
    get_builtin_scenario,
    load_scenario,
)

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"


def _write(tmp_path, text, name="s.yaml"):
    path = tmp_path / name
    path.write_text(text)
    return path


MINIMAL = """
system:
  A: [[1.0]]
  Q: [[1.0]]
sensors:
  - {C: [[1.0]], R: 1.0}
  - {naive: true}
graph: {kind: path, N: 2}
"""


def test_builtin_names():
    assert get_all_scenarios() == ["paper", "complete", "chain"]
    assert list(BUILTIN_SCENARIOS) == get_all_scenarios()


def test_unknown_builtin_lists_names():
    with pytest.raises(ScenarioError, match="Available: paper, complete, chain"):
        get_builtin_scenario("ring")


def test_paper_builtin_matches_scenario():
    scenario = get_builtin_scenario("paper")
    system, sensors, params = paper_scenario()
    built = scenario.build_system()
    np.testing.assert_array_equal(built.A, system.A)
    np.testing.assert_array_equal(built.Q, system.Q)
    assert [s.is_naive for s in scenario.build_sensors(4)] == [s.is_naive for s in sensors]
    g = scenario.build_graph()
    assert g.node_count == params.N


def test_shipped_paper_file_matches_builtin():
    from_file = load_scenario(SCENARIO_DIR / "paper.yaml")
    builtin = get_builtin_scenario("paper")
    np.testing.assert_array_equal(from_file.build_system().Q, builtin.build_system().Q)
    assert from_file.build_graph().edges == builtin.build_graph().edges


def test_shipped_ring_reads_edge_list():
    scenario = load_scenario(SCENARIO_DIR / "ring.yaml")
    g = scenario.build_graph()
    assert g.node_count == 6
    assert len(g.edges) == 6
    assert len(scenario.build_sensors(4)) == 6
    assert scenario.tolerances == {"dare_max_iter": 100000}


def test_minimal_file_defaults(tmp_path):
    scenario = load_scenario(_write(tmp_path, MINIMAL))
    assert scenario.name == "s"
    assert scenario.weights == "metropolis"
    cfg = scenario.trials.build(trials=3)
    assert (cfg.steps, cfg.trials, cfg.seed) == (200, 3, 0)


def test_graph_seed_override():
    scenario = get_builtin_scenario("paper")
    assert scenario.build_graph(5).edges == random_geometric(20, 300.0, 130.0, 5).edges
    assert scenario.build_graph().edges == random_geometric(20, 300.0, 130.0, 1).edges


def test_unknown_key(tmp_path):
    with pytest.raises(ScenarioError, match="Invalid scenario"):
        load_scenario(_write(tmp_path, MINIMAL + "colour: blue\n"))


def test_sensor_needs_observation(tmp_path):
    text = MINIMAL.replace("{C: [[1.0]], R: 1.0}", "{R: 1.0}")
    with pytest.raises(ScenarioError, match="needs C and R"):
        load_scenario(_write(tmp_path, text))


def test_unknown_tolerance(tmp_path):
    with pytest.raises(ScenarioError, match="Unknown tolerances: dare_speed"):
        load_scenario(_write(tmp_path, MINIMAL + "tolerances: {dare_speed: 1.0}\n"))


def test_model_invariants_checked_on_load(tmp_path):
    text = MINIMAL.replace("Q: [[1.0]]", "Q: [[-1.0]]")
    with pytest.raises(ScenarioError, match="Q"):
        load_scenario(_write(tmp_path, text))


def test_sensor_count_must_match_graph(tmp_path):
    text = MINIMAL.replace("N: 2", "N: 3")
    with pytest.raises(ScenarioError, match="expected 3 sensors"):
        load_scenario(_write(tmp_path, text))


def test_missing_file(tmp_path):
    with pytest.raises(ScenarioError, match="does not exist"):
        load_scenario(tmp_path / "nope.yaml")


def test_not_a_mapping(tmp_path):
    with pytest.raises(ScenarioError, match="mapping"):
        load_scenario(_write(tmp_path, "- 1\n- 2\n"))
