# barron_flow/__main__.py

import sys

from . import main

sys.exit(main())
