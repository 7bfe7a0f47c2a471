#!/usr/bin/env python3
"""
compverify launcher
Usage: python verify.py <command> [options]; see `python verify.py --help`.
"""

import sys

from compverify.cli import main

# ==================== ENTRY POINT ====================

if __name__ == "__main__":
    sys.exit(main())
