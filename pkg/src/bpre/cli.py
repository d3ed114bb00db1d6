"""Command-line entry point: ``bpre <kind> --law <spec> [options]``.

Options may also come from a flat ``key=value`` config file (``--config``);
command-line flags override file values, and the ``BPRE_SEED`` environment
variable serves as the seed fallback.
"""
from __future__ import annotations

import argparse
import json
import sys

from .exceptions import BpreError
from .harness import KINDS, METHODS, ExperimentConfig, default_seed, read_config_file, run


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="bpre",
        description="Branching-process-in-random-environment experiments",
    )
    p.add_argument("kind", choices=KINDS, help="experiment kind")
    p.add_argument("--law", help="law spec, e.g. 'pareto(2,1,3)' or 'twopoint(0.7,0.7,0.25)'")
    p.add_argument("--config", help="flat key=value config file; flags override")
    p.add_argument("--n", type=int, help="horizon / target level (0 = stationary where applicable)")
    p.add_argument("--m", type=float, help="tail threshold")
    p.add_argument("--reps", type=int, help="replication count")
    p.add_argument("--mode", choices=["size1", "statedep", "noimm"], help="immigration mode")
    p.add_argument("--method", choices=list(METHODS), help="estimator method")
    p.add_argument("--c", type=float, help="event size bound / corridor offset")
    p.add_argument("--eps", type=float, help="corridor slope")
    p.add_argument("--seed", type=int, help="master seed (default: BPRE_SEED env or constant)")
    p.add_argument("--workers", type=int, help="worker process count")
    p.add_argument("--out", help="output path prefix")
    p.add_argument("--format", choices=["csv", "json"], help="result file format")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    values: dict = {}
    try:
        if args.config:
            values.update(read_config_file(args.config))
        for key in ("law", "n", "m", "reps", "mode", "method", "c", "eps", "seed", "workers", "out", "format"):
            v = getattr(args, key)
            if v is not None:
                values[key] = v
        values["kind"] = args.kind
        if "law" not in values:
            print("error: --law is required (flag or config file)", file=sys.stderr)
            return 2
        values.setdefault("seed", default_seed())
        config = ExperimentConfig.from_dict(values)
    except (BpreError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        manifest = run(config)
    except BpreError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps({"outputs": manifest["outputs"], "manifest": manifest["manifest_path"]}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
