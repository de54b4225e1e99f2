"""Command line interface ``sp``.

::

    sp run <config>            certify, evolve, probe; write a JSON report and CSV trace
    sp check <config>          hypotheses only; exit code 0 iff all certify
    sp mms <config> --levels k convergence table
    sp sweep <batch>           run every config of a batch file in parallel
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from singlab.apps.config import load_config
from singlab.apps.drivers import CertificationError, RunReport, _jsonable, run, run_hypotheses
from singlab.apps.mms import run_mms
from singlab.geometry import ConfigurationError, GeometryError, UnsupportedParameterError
from singlab.operators import ValidationError

INPUT_ERRORS = (ConfigurationError, GeometryError, UnsupportedParameterError, ValidationError,
                FileNotFoundError, json.JSONDecodeError)


def _out_dir(args, cfg) -> Path:
    return Path(args.out or cfg.output.get("dir", "results"))


def _write_json(path: Path, data) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(_jsonable(data), fh, indent=2)


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    out = _out_dir(args, cfg)
    try:
        report = run(cfg, seed=args.seed, threads=args.threads)
    except CertificationError as exc:
        _write_json(out / f"{cfg.name}.report.json",
                    {"name": cfg.name, "passed": False, "first_failure": exc.condition,
                     "hypotheses": exc.report.as_dict()})
        print(f"{cfg.name}: certification failed at {exc.condition}")
        return 1
    paths = report.write(out)
    print(report.summary_line())
    for kind, path in paths.items():
        print(f"  {kind}: {path}")
    return 0 if report.passed else 1


def cmd_check(args) -> int:
    cfg = load_config(args.config)
    rep = run_hypotheses(cfg)
    if args.out:
        _write_json(Path(args.out) / f"{cfg.name}.check.json", rep.as_dict())
    for name, ok in rep.conditions.items():
        print(f"{name}: {'ok' if ok else 'FAIL'}")
    if rep.passed:
        print(f"{cfg.name}: all conditions certify")
        return 0
    print(f"{cfg.name}: first failing condition {rep.first_failure}")
    return 1


def cmd_mms(args) -> int:
    cfg = load_config(args.config)
    table = run_mms(cfg, args.levels)
    print(f"{'level':>5} {'n':>7} {'dt':>10} {'error':>12} {'order':>7}")
    for row in table.levels:
        order = f"{row['order']:.3f}" if "order" in row else "-"
        print(f"{row['level']:>5} {row['n_interior']:>7} {row['dt']:>10.3e} "
              f"{row['error']:>12.4e} {order:>7}")
    if not table.monotone:
        print("warning: error decay is not monotone")
    if args.out:
        _write_json(Path(args.out) / f"{cfg.name}.mms.json", table.as_dict())
    return 0 if table.monotone else 1


def _sweep_one(path: str, out: str | None, seed: int) -> tuple[str, int, str]:
    try:
        cfg = load_config(path)
        report: RunReport = run(cfg, seed=seed)
        report.write(Path(out or cfg.output.get("dir", "results")))
        return path, 0 if report.passed else 1, report.summary_line()
    except CertificationError as exc:
        return path, 1, f"{path}: certification failed at {exc.condition}"
    except INPUT_ERRORS as exc:
        return path, 2, f"{path}: {exc}"


def cmd_sweep(args) -> int:
    batch = Path(args.batch)
    with open(batch) as fh:
        spec = json.load(fh)
    paths = [str((batch.parent / p).resolve()) for p in spec["configs"]]
    with ProcessPoolExecutor(max_workers=max(1, args.threads)) as pool:
        results = list(pool.map(_sweep_one, paths, [args.out] * len(paths),
                                [args.seed] * len(paths)))
    code = 0
    for _, rc, line in results:
        print(line)
        code = max(code, rc)
    return code


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sp", description="singular elliptic operator laboratory")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp_):
        sp_.add_argument("--out", help="output directory")
        sp_.add_argument("--threads", type=int, default=1, help="worker threads/processes")
        sp_.add_argument("--seed", type=int, default=0, help="seed for probe randomness")

    r = sub.add_parser("run", help="certify, evolve and probe one config")
    r.add_argument("config")
    common(r)
    r.set_defaults(func=cmd_run)
    c = sub.add_parser("check", help="run the hypothesis checklist only")
    c.add_argument("config")
    common(c)
    c.set_defaults(func=cmd_check)
    m = sub.add_parser("mms", help="manufactured-solution convergence study")
    m.add_argument("config")
    m.add_argument("--levels", type=int, default=None, help="levels (default: from the config)")
    common(m)
    m.set_defaults(func=cmd_mms)
    s = sub.add_parser("sweep", help="run a batch of configs in parallel")
    s.add_argument("batch", help='JSON file {"configs": [paths relative to it]}')
    common(s)
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
