"""Allow ``python -m trafficpinn``."""

import sys

from .cli import main

sys.exit(main())
