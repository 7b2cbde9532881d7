import sys

from l0cert.cli import main

sys.exit(main())
