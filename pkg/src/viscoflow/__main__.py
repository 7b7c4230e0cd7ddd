import sys

from viscoflow.cli import main

sys.exit(main())
