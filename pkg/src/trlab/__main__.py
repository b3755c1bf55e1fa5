import sys

from trlab.cli import main

sys.exit(main())
