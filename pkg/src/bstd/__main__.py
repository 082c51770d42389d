import sys

from bstd.cli import main

sys.exit(main())
