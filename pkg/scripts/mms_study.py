"""Manufactured-solution convergence tables for the configs that carry an mms block.

    python3 scripts/mms_study.py --levels 4 --out results
"""

import argparse
import json
from pathlib import Path

from singlab.apps import load_config, run_mms

ROOT = Path(__file__).resolve().parent.parent
STUDIES = ("heat_segment", "heat_annulus", "degenerate_strong")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--levels", type=int, default=None, help="override the configured level count")
    ap.add_argument("--out", default="results")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    for name in STUDIES:
        table = run_mms(load_config(ROOT / "configs" / f"{name}.json"), args.levels)
        print(f"{name}  ({table.norm['scheme']}, weighted L2 with lambda' = {table.norm['lambda_prime']:g})")
        for row in table.levels:
            order = f"{row['order']:.3f}" if "order" in row else "-"
            print(f"  level {row['level']}  n={row['n_interior']:<6} dt={row['dt']:.2e}  "
                  f"err={row['error']:.3e}  order={order}")
        with open(out / f"{name}.mms.json", "w") as fh:
            json.dump(table.as_dict(), fh, indent=2)


if __name__ == "__main__":
    main()
