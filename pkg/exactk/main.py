#!/usr/bin/env python
import sys

from exactk.cli.interface import run_cli


if __name__ == "__main__":
    sys.exit(run_cli())

# python -m exactk.main gen-data --mode oracle --out data/
# python -m pip install -e .
