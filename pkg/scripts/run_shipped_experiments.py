#!/usr/bin/env python3
"""Run every shipped experiment config and print a one-line summary each."""

import sys
from pathlib import Path

from dalmc.cli import run_experiment

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def main():
    names = sys.argv[1:] or ["gaussian_sanity", "gauss_n34", "mixture2d",
                             "figure1", "heavy_tail"]
    for name in names:
        report = run_experiment(CONFIGS / f"{name}.toml")
        checks = report["bound_checks"]
        failed = [c["name"] for c in checks if c["pass"] is False]
        status = "ok" if not failed else f"FAILED {failed}"
        print(f"{name}: {len(checks)} bound checks, "
              f"{report['flagged_chains']} flagged chains, {status}")


if __name__ == "__main__":
    main()
