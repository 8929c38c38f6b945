#!/usr/bin/env python3
"""Minute-scale smoke run of the whole pipeline on tiny synthetic scenes:
gen-data -> train -> evaluate -> explain -> report, using configs/quick_demo.yaml.
"""

import sys
from pathlib import Path

from aquacast.cli import main as aqua

CONFIG = Path(__file__).resolve().parent.parent / "configs" / "quick_demo.yaml"


def main() -> int:
    for cmd in (["gen-data", "--force"], ["train"], ["evaluate"], ["explain"], ["report"]):
        rc = aqua(cmd + ["--config", str(CONFIG)])
        if rc != 0:
            return rc
    return 0


if __name__ == "__main__":
    sys.exit(main())
