"""Allow ``python -m emsplit``."""

import sys

from .cli import main

sys.exit(main())
