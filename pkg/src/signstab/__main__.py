import sys

from signstab.cli import main

sys.exit(main())
