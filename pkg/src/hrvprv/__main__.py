import sys

from hrvprv.cli import main

sys.exit(main())
