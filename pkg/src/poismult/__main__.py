"""Allow ``python -m poismult`` to behave like the console script."""

import sys

from .cli import run

if __name__ == "__main__":
    sys.exit(run())
