"""Certify and run every shipped config; write reports and a summary table.

    python3 scripts/run_all.py --out results
"""

import argparse
import json
import time
from pathlib import Path

from singlab.apps import CertificationError, load_config, run

ROOT = Path(__file__).resolve().parent.parent


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    out = Path(args.out)

    batch = json.loads((ROOT / "configs" / "batch.json").read_text())
    rows = []
    for rel in batch["configs"]:
        cfg = load_config(ROOT / "configs" / rel)
        t0 = time.time()
        try:
            rep = run(cfg, seed=args.seed, threads=args.threads)
            rep.write(out)
            failing = [k for k, v in rep.flags.items() if not v]
            rows.append((cfg.name, "PASS" if rep.passed else "FAIL", ",".join(failing)))
        except CertificationError as exc:
            rows.append((cfg.name, "UNCERTIFIED", exc.condition))
        print(f"{rows[-1][0]:<20} {rows[-1][1]:<12} {rows[-1][2]:<30} {time.time() - t0:6.1f}s")

    out.mkdir(parents=True, exist_ok=True)
    with open(out / "summary.json", "w") as fh:
        json.dump([dict(zip(("name", "status", "failing"), r)) for r in rows], fh, indent=2)


if __name__ == "__main__":
    main()
