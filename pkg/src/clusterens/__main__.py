"""Allow ``python -m clusterens``."""

import sys

from clusterens.cli import main

sys.exit(main())
