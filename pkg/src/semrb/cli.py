"""Command-line entry point: ``semrb offline|online|study``."""
from __future__ import annotations

import argparse
import logging
import sys

from . import io, pipeline


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="semrb", description="Spectral-element Navier-Stokes solver with a POD-Galerkin ROM.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    off = sub.add_parser("offline", help="snapshot sweep, POD and reduced operators")
    off.add_argument("--config", required=True)
    off.add_argument("--archive", help="archive directory (default: output_dir from config)")

    on = sub.add_parser("online", help="reduced solve at one gap height")
    on.add_argument("--archive", required=True)
    on.add_argument("--mu", type=float, required=True)
    on.add_argument("--N", type=int, help="reduced dimension (default: threshold size)")
    on.add_argument("--dump-field", help="write the reconstructed DOF vector to this file")

    st = sub.add_parser("study", help="error and timing study against the full model")
    st.add_argument("--config", required=True)
    st.add_argument("--archive", required=True)
    st.add_argument("--out", help="directory for CSV output (default: <archive>/study)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "offline":
            pipeline.cmd_offline(io.load_config(args.config), args.archive)
        elif args.command == "online":
            pipeline.cmd_online(args.archive, args.mu, args.dump_field, args.N)
        else:
            pipeline.cmd_study(io.load_config(args.config), args.archive, args.out)
    except (OSError, ValueError, RuntimeError, KeyError) as exc:
        print(f"semrb {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
