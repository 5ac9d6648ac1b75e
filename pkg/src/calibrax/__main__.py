import sys

from calibrax.cli import main

sys.exit(main())
