import sys

from darca_ncs_tuning.cli import main

sys.exit(main())
