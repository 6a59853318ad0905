"""Allow ``python -m lotlab``."""

import sys

from .cli import main

sys.exit(main())
