"""Allow ``python -m invnet`` as an alternative to the console script."""

import sys

from invnet.cli import main

if __name__ == "__main__":
    sys.exit(main())
