"""``ipr-qsim`` command line.

Precedence for every setting: command-line flag > config file > experiment default.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from ..errors import IprQsimError
from .config import EXPERIMENTS, load_config
from .experiments import count_violations, run_experiment
from .io import emit_csv, emit_timings, run_id, write_manifest
from .verify import run_all

log = logging.getLogger("ipr_qsim")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ipr-qsim", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment from a config file")
    run.add_argument("config", type=Path)
    run.add_argument("--experiment", choices=EXPERIMENTS)
    run.add_argument("--out", type=Path, help="output directory (overrides config 'output')")
    run.add_argument("--seed", type=int)
    run.add_argument("--mode", choices=("exact", "sampled"))
    run.add_argument("--shots", type=int, dest="n_shots")

    ver = sub.add_parser("verify", help="bound study plus invariant checks; exit 0 iff no violations")
    ver.add_argument("--trials", type=int, default=500)
    ver.add_argument("--seed", type=int, default=0)
    return p


def cmd_run(args) -> int:
    overrides = {"experiment": args.experiment, "seed": args.seed, "mode": args.mode,
                 "n_shots": args.n_shots,
                 "output": str(args.out) if args.out is not None else None}
    cfg = load_config(args.config, overrides)
    rid = run_id(cfg)
    log.info("running %s (run id %s)", cfg.experiment, rid)
    rows = run_experiment(cfg)
    out = Path(cfg.output)
    csv_path = emit_csv(rows, out / f"{cfg.experiment}.csv")
    emit_timings(rows, out / f"{cfg.experiment}.timings.csv")
    n_bad = count_violations(rows)
    write_manifest(cfg, rid, out / f"{cfg.experiment}.manifest.yaml",
                   {"rows": len(rows), "violations": n_bad})
    print(f"{cfg.experiment}: {len(rows)} rows -> {csv_path}")
    return 0 if n_bad == 0 else 1


def cmd_verify(args) -> int:
    results = run_all(args.trials, args.seed)
    for r in results:
        status = "PASS" if r.violations == 0 else "FAIL"
        print(f"{status}  {r.name}: {r.violations} violations ({r.detail})")
    return 0 if all(r.violations == 0 for r in results) else 1


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = _parser().parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args)
        return cmd_verify(args)
    except (IprQsimError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
