import sys

from compverify.cli import main

sys.exit(main())
