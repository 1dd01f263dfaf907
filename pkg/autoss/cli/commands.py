from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

from autoss.cli import commands_harness, commands_index, commands_query
from autoss.core.config import logger
from autoss.core.errors import AutossError

EXIT_ERROR = 1


def create_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="autoss",
        description="Authenticated string similarity search: owner, server and client roles.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    commands_index.register(sub)
    commands_query.register(sub)
    commands_harness.register(sub)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """0 on success, 2 when verification fails, 1 on any toolkit error."""
    args = create_parser().parse_args(argv)
    logger.debug("cli | command={}", args.command)
    try:
        return args.handler(args)
    except AutossError as exc:
        logger.error("{} failed | error={}", args.command, exc)
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_ERROR
