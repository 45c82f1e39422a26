#!/usr/bin/env python3
"""
tenslet - Main Application
Tensor needlet transforms for tangent fields on the sphere.
"""

import sys
from typing import List, Optional

from loguru import logger

from src.cli import EXIT_FAILED, EXIT_USAGE, build_parser, dispatch
from src.config import Config
from src.errors import TensletError

CONSOLE_FORMAT = (
    "<green>{time:YYYY-MM-DD HH:mm:ss}</green> | <level>{level: <8}</level> | "
    "<cyan>{name}</cyan>:<cyan>{function}</cyan>:<cyan>{line}</cyan> - <level>{message}</level>"
)
FILE_FORMAT = "{time:YYYY-MM-DD HH:mm:ss} | {level: <8} | {name}:{function}:{line} - {message}"


def setup_logging(config: Config):
    """Configure console and optional rotating file sinks."""
    logger.remove()
    logger.add(sys.stderr, format=CONSOLE_FORMAT, level=config.get("logging.level", "INFO"))
    if config.get("logging.file_logging", False):
        logger.add(
            config.get("logging.log_file", "tenslet.log"),
            rotation=config.get("logging.rotation", "1 day"),
            retention=config.get("logging.retention", "7 days"),
            format=FILE_FORMAT,
            level="DEBUG",
        )


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else 0

    try:
        config = Config(args.config)
    except TensletError as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_USAGE
    setup_logging(config)

    try:
        return dispatch(args, config)
    except TensletError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_USAGE
    except KeyboardInterrupt:
        logger.info("Interrupted by user")
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
