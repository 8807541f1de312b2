import sys

from gabigan.cli import main

sys.exit(main())
