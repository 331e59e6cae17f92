import sys

from gsdmix.cli import main

sys.exit(main())
