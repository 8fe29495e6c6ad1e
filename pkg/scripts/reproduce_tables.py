"""Run the table configurations and refresh the golden reports used by the acceptance tests.

Usage:
    python scripts/reproduce_tables.py                    # every table config
    python scripts/reproduce_tables.py cat2_multiplex     # selected configs
    python scripts/reproduce_tables.py --no-golden        # leave tests/data alone

Each run writes ``<runs-dir>/<name>/report.json`` and resumes from its restart
checkpoint, so an interrupted run can be restarted with the same command.
"""

from __future__ import annotations

import argparse
import shutil
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
TABLE_CONFIGS = ["cat2_multiplex", "cat2_single", "gkp2_multiplex", "gkp3_harvest", "cat2_beam"]


def main(argv=None) -> int:
    from heraldopt import cli

    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("names", nargs="*", default=TABLE_CONFIGS, help="config names under configs/")
    parser.add_argument("--runs-dir", default=str(ROOT / "runs"))
    parser.add_argument("--no-golden", action="store_true", help="do not copy reports to tests/data")
    args = parser.parse_args(argv)

    golden = ROOT / "tests" / "data"
    for name in args.names:
        out = Path(args.runs_dir) / name
        print(f"== {name}", flush=True)
        code = cli.main(["optimize", "--config", str(ROOT / "configs" / f"{name}.json"), "--output-dir", str(out), "--resume"])
        if code != cli.EXIT_OK:
            return code
        if not args.no_golden:
            golden.mkdir(parents=True, exist_ok=True)
            shutil.copyfile(out / "report.json", golden / f"{name}.json")
    return 0


if __name__ == "__main__":
    sys.exit(main())
