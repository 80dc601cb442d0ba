import sys

from fpflow.cli import main

sys.exit(main())
