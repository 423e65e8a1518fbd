#!/usr/bin/env python3
"""End-to-end desk-scale run: calibrate, build solution tables, profile
speedups, then sweep the accelerated fraction. Artifacts land in ./artifacts.
"""

import sys

from tdgemm.cli import main

ARTIFACTS = "artifacts"


def run(*argv):
    code = main(list(argv))
    if code != 0:
        sys.exit(code)


if __name__ == "__main__":
    seed = sys.argv[1] if len(sys.argv) > 1 else "0"
    base = ["--seed", seed, "--l", "48", "--tables", ARTIFACTS, "--out", ARTIFACTS]
    run(*base, "calibrate", "--w", "2", "3", "4")
    run(*base, "profile", "--w", "2", "3", "4")
    run(*base, "solutions", "--w", "2", "3", "4")
    run(*base, "sweep", "--blocks", "3")
    print(f"artifacts written to ./{ARTIFACTS}")
