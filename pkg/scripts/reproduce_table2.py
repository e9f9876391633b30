"""Rerun the table2 experiment; extra arguments go to `gansemble reproduce table2`.

    python3 scripts/reproduce_table2.py --profile smoke --workdir work
"""
import sys

from gansemble.cli import main

if __name__ == "__main__":
    sys.exit(main(["reproduce", "table2", *sys.argv[1:]]))
