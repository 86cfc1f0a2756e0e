#!/usr/bin/env python3
"""Step-count and score-bias sweeps on the N(3, 4) target.

Writes sweep CSVs under out/sweeps/: the W2 error against exact target
samples should fall as the step count grows and rise with injected bias.
"""

from pathlib import Path

from dalmc.cli import sweep

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def main():
    cfg = CONFIGS / "gauss_n34.toml"
    rows = sweep(cfg, "M", ["250", "500", "1000", "2000"],
                 out_override="out/sweeps/steps")
    for row in rows:
        print(row)
    rows = sweep(cfg, "eps_score", ["0.0", "0.1", "0.3", "1.0"],
                 out_override="out/sweeps/bias")
    for row in rows:
        print(row)


if __name__ == "__main__":
    main()
