"""Command-line entry point: ``scoremem run | gen-data | list-experiments | template``.

Exit codes: 0 success, 1 runtime failure, 2 usage or contract error
(bad config, unknown generator, observation not in the dataset).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .datasets import gen_dataset, write_dataset
from .errors import (ConfigError, DomainError, InvalidDatasetError, ScoreMemError,
                     UndefinedObservationError)
from .experiments import list_experiments, run_experiment, template

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("scoremem")


def _build_parser():
    p = argparse.ArgumentParser(prog="scoremem",
                                description="Memorization experiments for score-based models.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment from a JSON config file")
    r.add_argument("config", type=Path)
    r.add_argument("-o", "--output-dir", type=Path, default=None,
                   help="output directory (overrides $SCOREMEM_OUTPUT_DIR and the config)")
    r.add_argument("--no-timestamp", action="store_true",
                   help="omit the generation timestamp comment from SVG files")

    g = sub.add_parser("gen-data", help="write a generated dataset to CSV")
    g.add_argument("spec", help="e.g. gaussian2d:n=20,seed=0 | symmetric2 | symmetric4 | "
                                "paired-linear:n=20,seed=0,step=1 | file:<path>")
    g.add_argument("-o", "--output", type=Path, required=True)

    sub.add_parser("list-experiments", help="list experiment names")

    t = sub.add_parser("template", help="print the default config of an experiment")
    t.add_argument("experiment")
    return p


def _run(args):
    try:
        raw = json.loads(args.config.read_text())
    except json.JSONDecodeError as err:
        raise ConfigError(f"{args.config}: invalid JSON ({err})") from None
    out = run_experiment(raw, output_dir=args.output_dir, base_dir=args.config.parent,
                         timestamp=False if args.no_timestamp else None)
    print(json.dumps({"out_dir": str(out["out_dir"]), "results": out["results"]},
                     indent=2, sort_keys=True, default=float))


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        if args.command == "run":
            _run(args)
        elif args.command == "gen-data":
            ds = gen_dataset(args.spec)
            write_dataset(ds, args.output)
            print(f"wrote {ds.N} points (d={ds.d}, m={ds.m}) to {args.output}")
        elif args.command == "list-experiments":
            for name, desc in list_experiments().items():
                print(f"{name:22s} {desc}")
        elif args.command == "template":
            print(json.dumps(template(args.experiment), indent=2))
    except UndefinedObservationError as err:
        print(f"error: undefined observation: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, InvalidDatasetError, DomainError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (ScoreMemError, OSError) as err:
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
