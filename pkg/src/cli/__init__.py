"""Command-line surface of stagfv."""

from src.cli.main import main, run

__all__ = ["main", "run"]
