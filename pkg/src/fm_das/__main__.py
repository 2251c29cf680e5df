"""
允许通过 python -m fm_das 运行 CLI
"""

import sys
from fm_das.cli import main

if __name__ == "__main__":
    sys.exit(main())
