"""Command line launcher for the SegReg engine.
"""

import sys

from segreg.cli.commands import main


if __name__ == '__main__':
    sys.exit(main())
