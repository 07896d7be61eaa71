#!/usr/bin/env python3
"""Latency split between critical and non-critical saturated nodes.

Runs the 10-node saturated scenario across seeds twice: once with the
differentiated initial backoff windows (critical BE 2 vs non-critical BE 4)
and once with equal windows as a control, then prints per-group means.
"""

import argparse
import statistics
from pathlib import Path

from wbansim.scenario import parse_scenario
from wbansim.simulation import Simulation

import yaml

SCENARIO = Path(__file__).resolve().parent.parent / "scenarios" / "priority_saturated.yaml"


def run_policy(raw, min_be_critical, min_be_noncritical, seeds):
    raw = dict(raw)
    raw["mac_params"] = {
        "min_be_critical": min_be_critical,
        "min_be_noncritical": min_be_noncritical,
    }
    scn = parse_scenario(raw, name="priority")
    crit, non_crit = [], []
    for seed in seeds:
        ledger = Simulation(scn, seed=seed).run()
        for node in range(1, 6):
            crit += ledger.latency_samples(node=node)
        for node in range(6, 11):
            non_crit += ledger.latency_samples(node=node)
    return statistics.mean(crit) / 1000, statistics.mean(non_crit) / 1000


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seeds", type=int, default=10, help="number of seeds (default 10)")
    args = parser.parse_args()
    raw = yaml.safe_load(SCENARIO.read_text(encoding="utf-8"))
    seeds = range(1, args.seeds + 1)

    print(f"{'policy':<28}{'critical ms':>14}{'non-critical ms':>18}")
    for label, be_c, be_nc in (
        ("differentiated (2 / 4)", 2, 4),
        ("equal windows  (3 / 3)", 3, 3),
    ):
        mc, mn = run_policy(raw, be_c, be_nc, seeds)
        print(f"{label:<28}{mc:>14.2f}{mn:>18.2f}")


if __name__ == "__main__":
    main()
