import sys

from privquery.cli.main import main

sys.exit(main())
