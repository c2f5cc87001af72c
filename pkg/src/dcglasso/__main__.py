"""Module entry point: python -m dcglasso behaves like the dcglasso script."""

import sys

from .cli import main

if __name__ == "__main__":
    sys.exit(main())
