#!/usr/bin/env python3
"""Run the bundled reference sweeps and fit the empirical slopes.

Writes one CSV per campaign under results/ plus a manifest per config, then
prints the fitted antenna efficiency next to the closed-form reference for
every produced CSV.  Figures can be reproduced by plotting ln(vep) against m
from the CSVs (the log_theory_* columns carry the bound overlays).

Usage: python scripts/run_reference_sweeps.py [--threads K] [--out-dir results]
"""

import argparse
import sys
from pathlib import Path

from mimodet.cli import cmd_fit, cmd_sweep

CONFIGS = ["fig1.cfg", "fig2.cfg", "fig3.cfg"]


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--out-dir", default="results")
    args = parser.parse_args()

    root = Path(__file__).resolve().parent.parent
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    for name in CONFIGS:
        config = root / "configs" / name
        out = out_dir / (config.stem + ".csv")
        print(f"=== sweep {config.name} ===")
        status = cmd_sweep(str(config), str(out), threads=args.threads)
        if status != 0:
            return status
        for csv_path in sorted(out_dir.glob(config.stem + "*.csv")):
            print(f"--- fit {csv_path.name} ---")
            cmd_fit(str(csv_path))
    return 0


if __name__ == "__main__":
    sys.exit(main())
