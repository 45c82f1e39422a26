#!/usr/bin/env python3
"""
tenslet - Entry Point
Run this script with a subcommand: quad, transform, bench or verify.
"""

import os
import sys

# Add src to path
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from src.main import main

if __name__ == "__main__":
    sys.exit(main())
