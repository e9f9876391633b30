"""Rerun the figure2 experiment; extra arguments go to `gansemble reproduce figure2`.

    python3 scripts/reproduce_figure2.py --profile smoke --workdir work
"""
import sys

from gansemble.cli import main

if __name__ == "__main__":
    sys.exit(main(["reproduce", "figure2", *sys.argv[1:]]))
