#!/usr/bin/env python3
"""
Run script for the mixture-process choice design tools.
Dispatches to the command line; `python run.py serve` starts the API with Uvicorn.
"""

import sys

from app.cli import main

if __name__ == "__main__":
    sys.exit(main())
