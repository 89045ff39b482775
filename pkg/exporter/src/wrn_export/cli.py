"""Command line: ``wrn-export train job.cfg`` / ``wrn-export export job.cfg``."""

from __future__ import annotations

import argparse
import sys

from .export import export_features
from .jobfile import load_export_job, load_train_job
from .train import train_wrn


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="wrn-export",
        description="train a WRN-28-10 and export penultimate features")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (("train", "train from a key=value job file"),
                           ("export", "export IPFF features from a checkpoint")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("job", help="key=value job configuration file")
    args = parser.parse_args(argv)
    try:
        if args.command == "train":
            train_wrn(load_train_job(args.job))
        else:
            for path in export_features(load_export_job(args.job)):
                print(f"wrote {path}")
        return 0
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
