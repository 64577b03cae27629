"""
Superficie de línea de comandos de featprobe.
Cada módulo de api/commands registra su subcomando; aquí se ensamblan y se
traducen los errores a códigos de salida estables.
"""
import argparse
import json
import logging
import sys
from typing import List, Optional

from pydantic import ValidationError

from api.commands import COMMANDS
from api.commands.common import global_flags
from services.config import LOG_LEVEL, TOOLKIT_VERSION
from services.errors import FeatprobeError

logger = logging.getLogger(__name__)

EXIT_CONFIG = 2
EXIT_IO = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="featprobe",
        description="Medición de cuellos de botella de representación entre encoders, necks y expertos",
    )
    parser.add_argument("--version", action="version", version=f"featprobe {TOOLKIT_VERSION}")
    subparsers = parser.add_subparsers(dest="command", required=True)
    parents = [global_flags()]
    for module in COMMANDS:
        module.register(subparsers, parents)
    return parser


def configure_logging(verbose: bool) -> None:
    level = logging.DEBUG if verbose else getattr(logging, LOG_LEVEL.upper(), logging.INFO)
    logging.basicConfig(
        level=level,
        stream=sys.stderr,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        force=True,
    )


def _fail(args, code: int, message: str, diagnostics=None) -> int:
    logger.error(message)
    if getattr(args, "json", False):
        payload = {"error": message, "exit_code": code, "diagnostics": diagnostics or {}}
        sys.stdout.write(json.dumps(payload, sort_keys=True, default=str) + "\n")
    return code


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse: 0 con --help, 2 con uso inválido
        return int(e.code or 0)
    configure_logging(getattr(args, "verbose", False))
    try:
        return int(args.handler(args))
    except FeatprobeError as e:
        return _fail(args, e.exit_code, e.message, e.diagnostics)
    except ValidationError as e:
        messages = [err["msg"] for err in e.errors()]
        return _fail(args, EXIT_CONFIG, f"configuración inválida: {e}", {"errors": messages})
    except OSError as e:
        return _fail(args, EXIT_IO, f"error de E/S: {e}")


if __name__ == "__main__":
    sys.exit(main())
