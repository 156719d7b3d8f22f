"""Command-line entry point wrapper.

Sets up the Python path so ``python main.py ...`` works from a checkout
without installing the package.
"""

import sys
from pathlib import Path

PROJECT_ROOT = Path(__file__).parent
if str(PROJECT_ROOT) not in sys.path:
    sys.path.insert(0, str(PROJECT_ROOT))

from src.cli.main import main, run  # noqa: E402

__all__ = ["main", "run"]

if __name__ == "__main__":
    run()
