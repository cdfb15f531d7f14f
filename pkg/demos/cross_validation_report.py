"""Score the filter by leave-one-out cross-validation over named sites.

Each valid fine observation is withheld in turn, the filter re-runs
without it, and its posterior mean for that month is compared with the
held-out value. The evaluate command aggregates those errors per site
window and renders the metrics table printed below.

    python3 demos/cross_validation_report.py [--root DIR]
"""

import argparse
import json
import tempfile
from pathlib import Path

from oifuse.cli import main as oifuse_main
from oifuse.evaluation import read_metrics_csv


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--root", type=Path, default=None)
    args = parser.parse_args()
    root = args.root or Path(tempfile.mkdtemp(prefix="oifuse_cv_"))
    root.mkdir(parents=True, exist_ok=True)

    config = {
        "workspace": str(root / "workspace"),
        "out": str(root / "out"),
        "archive_start": 2000,
        "archive_end": 2003,
        "target_year": 2004,
        "synth": {
            "width": 30,
            "height": 30,
            "start_year": 2000,
            "archive_years": 4,
            "coarse_block": 6,
            "cloud_gap_fraction": 0.35,
            "seed": 3,
        },
        # Three 10x10 windows carved out of the 30x30 scene.
        "sites": [
            {"name": "ridge", "x0": 0, "y0": 0, "width": 10, "height": 10},
            {"name": "valley", "x0": 10, "y0": 10, "width": 10, "height": 10},
            {"name": "plain", "x0": 20, "y0": 20, "width": 10, "height": 10},
        ],
    }
    config_path = root / "config.json"
    config_path.write_text(json.dumps(config, indent=2))
    print(f"workspace: {root}")

    for command in ("simulate", "build-climatology", "fit-fusion", "evaluate"):
        rc = oifuse_main([command, "--config", str(config_path)])
        if rc != 0:
            raise SystemExit(rc)

    print()
    print((root / "out" / "evaluation" / "metrics_table.txt").read_text())

    report = read_metrics_csv(root / "out" / "evaluation" / "metrics.csv")
    folds = sum(r.n_heldout for r in report.rows)
    print(f"{folds} held-out predictions across {len(report.rows)} site/band rows")
    print("ME near zero means no systematic bias; RMSE >= MAE always holds,")
    print("and a wide spread between them points at a few large misses.")


if __name__ == "__main__":
    main()
