#!/usr/bin/env python3
"""Run the full scaled benchmark: one shared synthetic dataset, then train,
evaluate, and explain all three tasks, and merge everything into one report.

    python scripts/run_benchmark.py [--root results/benchmark] [--seed 11]

Takes roughly 15 minutes on two CPU cores.
"""

import argparse
import sys
import time
from pathlib import Path

import yaml

from aquacast.cli import main as aqua

REPO = Path(__file__).resolve().parent.parent
TASKS = ("change", "direction", "magnitude")


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--root", default="results/benchmark")
    parser.add_argument("--seed", type=int, default=11)
    parser.add_argument("--force", action="store_true")
    args = parser.parse_args()

    root = Path(args.root)
    root.mkdir(parents=True, exist_ok=True)
    started = time.time()

    manifest = None
    for task in TASKS:
        cfg = yaml.safe_load((REPO / "configs" / f"benchmark_{task}.yaml").read_text())
        cfg["output_dir"] = str(root)
        cfg["seed"] = args.seed
        cfg_path = root / f"benchmark_{task}.yaml"
        cfg_path.write_text(yaml.safe_dump(cfg))

        if manifest is None:
            gen = ["gen-data", "--config", str(cfg_path)] + (["--force"] if args.force else [])
            if aqua(gen) != 0:
                return 1
            manifest = root / f"bench_{task}" / "dataset" / "manifest.json"

        for cmd in ("train", "evaluate", "explain"):
            rc = aqua([cmd, "--config", str(cfg_path), "--manifest", str(manifest)])
            if rc != 0:
                return rc
        print(f"[{task}] done after {time.time() - started:.0f}s")

    rc = aqua(["report", "--results", str(root), "--out", str(root / "report")])
    print(f"total wall time: {time.time() - started:.0f}s")
    return rc


if __name__ == "__main__":
    sys.exit(main())
