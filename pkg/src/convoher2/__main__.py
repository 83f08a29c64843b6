import sys

from convoher2.cli.main import main

sys.exit(main())
