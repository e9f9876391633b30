"""Rerun the table1 experiment; extra arguments go to `gansemble reproduce table1`.

    python3 scripts/reproduce_table1.py --profile smoke --workdir work
"""
import sys

from gansemble.cli import main

if __name__ == "__main__":
    sys.exit(main(["reproduce", "table1", *sys.argv[1:]]))
