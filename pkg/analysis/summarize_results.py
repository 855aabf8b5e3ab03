#!/usr/bin/env python3
"""
Summarize analyze/simulate outputs per fusion depth

Input: <out_dir>/gaps.csv and/or <out_dir>/mse.csv
Output: average, median, max, min across nodes for every L
"""

import argparse
import sys
from pathlib import Path

import pandas as pd

GAP_COLUMNS = ['gap_param', 'gap_consistency', 'gap_total', 'mse_theory']
MSE_COLUMNS = ['mse_empirical', 'mse_theory_prior', 'mse_theory_posterior']


def summarize_by_depth(df, columns):
    """
    Per-L statistics across nodes

    For every column: <column>_mean, <column>_median, <column>_max, <column>_min
    """
    grouped = df.groupby('L')[columns]
    frames = []
    for stat in ('mean', 'median', 'max', 'min'):
        frame = grouped.agg(stat)
        frame.columns = [f"{c}_{stat}" for c in columns]
        frames.append(frame)
    summary = pd.concat(frames, axis=1)
    summary['nodes'] = df.groupby('L').size()
    return summary.reset_index()


def summarize_mse(df):
    summary = summarize_by_depth(df, MSE_COLUMNS)
    # nodes whose empirical MSE sits more than 3 standard errors from the posterior theory
    outside = (df['mse_empirical'] - df['mse_theory_posterior']).abs() > 3 * df['stderr']
    summary['nodes_outside_3se'] = outside.groupby(df['L']).sum().values
    if 'mse_central_posterior' in df:
        summary['mse_central_posterior'] = df.groupby('L')['mse_central_posterior'].first().values
    return summary


def _report(title, summary, output_file):
    print("=" * 80)
    print(title)
    print("=" * 80)
    print(summary.to_string(index=False))
    summary.to_csv(output_file, index=False, float_format="%.11e")
    print(f"\nSummary saved to: {output_file}\n")


def summarize_results(out_dir):
    out_dir = Path(out_dir)
    results = {}

    gaps_file = out_dir / 'gaps.csv'
    if gaps_file.exists():
        results['gaps'] = summarize_by_depth(pd.read_csv(gaps_file), GAP_COLUMNS)
        _report("Steady-state gaps per fusion depth", results['gaps'], out_dir / 'summary_gaps.csv')

    mse_file = out_dir / 'mse.csv'
    if mse_file.exists():
        results['mse'] = summarize_mse(pd.read_csv(mse_file))
        _report("Monte Carlo MSE per fusion depth", results['mse'], out_dir / 'summary_mse.csv')

    if not results:
        print(f"No gaps.csv or mse.csv found in {out_dir}")
    return results


def main(argv=None):
    parser = argparse.ArgumentParser(description="Summarize gaps.csv / mse.csv per fusion depth")
    parser.add_argument("out_dir", help="Directory written by runner.py analyze/simulate")
    args = parser.parse_args(argv)
    return 0 if summarize_results(args.out_dir) else 1


if __name__ == '__main__':
    sys.exit(main())
