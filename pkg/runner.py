#!/usr/bin/env python3
"""
Experiment runner for consensus-on-measurement distributed filtering.

Commands:
    analyze   steady-state gaps, rate fits and the minimal-fusion scan -> gaps.csv, rates.csv, minimal_fusion.csv
    simulate  Monte Carlo MSE against the closed-form theory -> mse.csv
    verify    property suites over randomized systems and the scenario graph
    graph     edge list, diameter, slem and minimal fusion depths of the scenario graph
"""

import argparse
import logging
import os
import sys
from pathlib import Path

import pandas as pd
from rich.logging import RichHandler

from cmdf import properties
from cmdf.analysis import (
    centralized_closed_loop,
    fit_gap_rates,
    gap_report,
    minimal_fusion_scan,
    node_steady_state,
)
from cmdf.config import reset_tolerances, set_tolerances
from cmdf.errors import CMDFError, UnobservableError
from cmdf.model import check_sensors, collective_observability
from cmdf.network import graph_metrics, slem, write_edge_list
from cmdf.simulate import monte_carlo_mse, paper_scenario
from utils.scenario_registry import get_builtin_scenario, load_scenario

logger = logging.getLogger("cmdf.runner")

FLOAT_FORMAT = "%.11e"
ANALYZE_MAX_L = 60
SIMULATE_OFFSETS = (0, 5, 10)

EXIT_OK = 0
EXIT_PROPERTY_FAILED = 1
EXIT_ERROR = 2


class ExperimentRunner:
    def __init__(self, scenario, output_dir=None, graph_seed=None):
        self.scenario = scenario
        self.output_dir = Path(output_dir or scenario.output_dir or Path("results") / scenario.name)
        self.output_dir.mkdir(parents=True, exist_ok=True)

        reset_tolerances()
        set_tolerances(scenario.tolerances)

        self.system = scenario.build_system()
        self.sensors = scenario.build_sensors(self.system.n)
        self.graph = scenario.build_graph(graph_seed)
        check_sensors(self.system, self.sensors, self.graph.node_count)
        self.weights = scenario.build_weights(self.graph)
        self.metrics = graph_metrics(self.graph)
        self.slem = slem(self.weights)

    def fusion_depths(self, requested, default):
        if requested:
            return sorted(set(requested))
        if self.scenario.fusion_depths:
            return sorted(set(self.scenario.fusion_depths))
        return list(default)

    def write_csv(self, df, name):
        path = self.output_dir / name
        df.to_csv(path, index=False, float_format=FLOAT_FORMAT)
        print(f"  Wrote {path} ({len(df)} rows)")
        return path

    def print_header(self, title):
        print("\n" + "=" * 60)
        print(title)
        print("=" * 60)
        print(f"Scenario: {self.scenario.name}")
        print(f"Nodes: {self.graph.node_count}, edges: {len(self.graph.edges)}, "
              f"diameter: {self.metrics.diameter}, slem: {self.slem:.6f}")
        print(f"Output directory: {self.output_dir}")

    def cmd_analyze(self, depths=None):
        d = max(self.metrics.diameter, 1)
        depths = self.fusion_depths(depths, range(d, max(d, ANALYZE_MAX_L) + 1))
        self.print_header("STEADY-STATE ANALYSIS")
        print(f"Fusion depths: {depths[0]}..{depths[-1]} ({len(depths)} values)")

        reports = gap_report(self.system, self.sensors, self.weights, depths)
        gaps = pd.DataFrame([{
            "L": r.L,
            "node": r.node,
            "gap_param": r.gap_param,
            "gap_consistency": r.gap_consistency,
            "gap_total": r.gap_total,
            "mse_theory": r.mse_theory,
            "mse_theory_posterior": r.mse_theory_posterior,
            "mse_central": r.mse_central,
            "mse_central_posterior": r.mse_central_posterior,
            "bound_param": r.bound_param,
            "bound_consistency": r.bound_consistency,
            "slem": self.slem,
        } for r in reports])

        rows = []
        for quantity, node, fit in fit_gap_rates(reports, L_min=self.metrics.diameter):
            rows.append({
                "quantity": quantity,
                "node": node,
                "M": fit.M if fit else float("nan"),
                "q": fit.q if fit else float("nan"),
                "residual": fit.residual if fit else float("nan"),
                "relative_residual": fit.relative_residual if fit else float("nan"),
                "L_min": fit.fit_range[0] if fit else "",
                "L_max": fit.fit_range[1] if fit else "",
                "slem": self.slem,
            })
        rates = pd.DataFrame(rows)

        minima = minimal_fusion_scan(self.system, self.sensors, self.weights)
        scan = pd.DataFrame({"node": range(len(minima)), "L_min": [("" if m is None else m) for m in minima]})

        self.write_csv(gaps, "gaps.csv")
        self.write_csv(rates, "rates.csv")
        self.write_csv(scan, "minimal_fusion.csv")

        overall = rates[rates["node"] == "all"]
        print("\nRate fits over the node-wise maximum:")
        for _, row in overall.iterrows():
            if pd.isna(row["q"]):
                print(f"  {row['quantity']:<16} no fit (too few points above the floor)")
                continue
            flags = []
            if row["q"] > self.slem + properties.RATE_SLACK:
                flags.append("q ABOVE slem + 0.05")
            if row["relative_residual"] > properties.RESIDUAL_LIMIT:
                flags.append("residual ABOVE 10% of range")
            print(f"  {row['quantity']:<16} q={row['q']:.4f}  M={row['M']:.3e}  "
                  f"residual={row['residual']:.3f} ({row['relative_residual']:.1%} of range)  "
                  f"[{', '.join(flags) or 'ok'}]")
        return reports

    def cmd_simulate(self, depths=None, trials=None, steps=None, seed=None, jobs=None):
        d = max(self.metrics.diameter, 1)
        depths = self.fusion_depths(depths, [d + offset for offset in SIMULATE_OFFSETS])
        cfg = self.scenario.trials.build(trials=trials, steps=steps, seed=seed)
        P_central, central_loop = centralized_closed_loop(self.system, self.sensors)
        mse_central_prior = float(P_central.trace())
        mse_central_posterior = float(central_loop.posterior.trace())
        self.print_header("MONTE CARLO SIMULATION")
        print(f"Fusion depths: {', '.join(map(str, depths))}; {cfg.trials} trials x {cfg.steps} steps, seed {cfg.seed}")

        rows = []
        for L in depths:
            result = monte_carlo_mse(self.system, self.sensors, self.weights, L, cfg, n_jobs=jobs)
            for i in range(self.graph.node_count):
                state = node_steady_state(self.system, self.sensors, self.weights, i, L)
                rows.append({
                    "L": L,
                    "node": i,
                    "mse_empirical": result.mse[i],
                    "mse_theory_prior": float(state.P_true.trace()),
                    "mse_theory_posterior": float(state.P_true_posterior.trace()),
                    "mse_central_prior": mse_central_prior,
                    "mse_central_posterior": mse_central_posterior,
                    "stderr": result.mse_stderr[i],
                    "trials": result.trials,
                })
            print(f"  [L={L}] mean MSE over nodes: {result.mse.mean():.6f} (centralized: {mse_central_posterior:.6f})")
        return self.write_csv(pd.DataFrame(rows), "mse.csv")

    def cmd_graph(self):
        self.print_header("GRAPH")
        path = self.output_dir / "graph.edges"
        write_edge_list(self.graph, path)
        print(f"  Wrote {path}")
        print(f"  Connected: {self.metrics.connected}")
        if collective_observability(self.system, self.sensors):
            minima = minimal_fusion_scan(self.system, self.sensors, self.weights)
            print("  Minimal fusion depth per node: "
                  + ", ".join(f"{i}:{'inf' if m is None else m}" for i, m in enumerate(minima)))
        else:
            print("  Network is not collectively observable; no minimal fusion depth exists")
        return path


def cmd_verify(graph_seed=1, master_seed=properties.DEFAULT_MASTER_SEED, systems=properties.DEFAULT_SYSTEMS):
    print("\n" + "=" * 60)
    print("PROPERTY VERIFICATION")
    print("=" * 60)
    results = properties.run_all(paper_scenario(), graph_seed, master_seed, systems)
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"  [{status}] {r.name:<20} checked={r.checked:<4} worst={r.worst:.3e}")
        if not r.passed:
            print(f"         {r.message}")

    failed = [r for r in results if not r.passed]
    print(f"\nPassed: {len(results) - len(failed)}/{len(results)}")
    return EXIT_PROPERTY_FAILED if failed else EXIT_OK


def setup_logging(level):
    logging.basicConfig(
        level=level.upper(),
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(show_path=False)],
        force=True,
    )


def resolve_scenario(args):
    if args.scenario:
        return load_scenario(args.scenario)
    return get_builtin_scenario(args.builtin)


def build_parser():
    parser = argparse.ArgumentParser(description="Consensus-on-measurement distributed filtering experiments")
    parser.add_argument(
        "--log-level",
        default=os.getenv("CMDF_LOG_LEVEL", "INFO"),
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="Logging level (default: $CMDF_LOG_LEVEL or INFO)"
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (
        ("analyze", "Closed-form steady-state gaps and rate fits"),
        ("simulate", "Monte Carlo MSE against the theory"),
        ("graph", "Emit the scenario graph and its diagnostics"),
    ):
        sub = subparsers.add_parser(name, help=help_text)
        source = sub.add_mutually_exclusive_group()
        source.add_argument("--scenario", help="YAML scenario file")
        source.add_argument("--builtin", default="paper", help="Built-in scenario name (default: paper)")
        sub.add_argument("--graph-seed", type=int, help="Override the random graph seed")
        sub.add_argument("--out", help="Output directory")
        if name in ("analyze", "simulate"):
            sub.add_argument("--L", dest="depths", type=int, action="append", help="Fusion depth (repeatable)")
        if name == "simulate":
            sub.add_argument("--seed", type=int, help="Monte Carlo seed")
            sub.add_argument("--trials", type=int, help="Number of trials")
            sub.add_argument("--steps", type=int, help="Steps per trial")
            sub.add_argument("--jobs", type=int, help="Worker count (default: $CMDF_NUM_THREADS or 1)")

    verify = subparsers.add_parser("verify", help="Run the property suites")
    verify.add_argument("--seed", type=int, default=properties.DEFAULT_MASTER_SEED, help="Master seed for random systems")
    verify.add_argument("--systems", type=int, default=properties.DEFAULT_SYSTEMS, help="Number of random systems")
    verify.add_argument("--graph-seed", type=int, default=1, help="Seed of the scenario graph")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)

    try:
        if args.command == "verify":
            return cmd_verify(args.graph_seed, args.seed, args.systems)

        runner = ExperimentRunner(resolve_scenario(args), args.out, args.graph_seed)
        if args.command == "analyze":
            runner.cmd_analyze(args.depths)
        elif args.command == "simulate":
            runner.cmd_simulate(args.depths, args.trials, args.steps, args.seed, args.jobs)
        elif args.command == "graph":
            runner.cmd_graph()
    except UnobservableError as e:
        where = f" (node {e.node}, L={e.L})" if e.node is not None else ""
        logger.error("Unobservable configuration%s: %s", where, e)
        return EXIT_ERROR
    except CMDFError as e:
        logger.error("%s: %s", type(e).__name__, e)
        return EXIT_ERROR
    finally:
        reset_tolerances()
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
