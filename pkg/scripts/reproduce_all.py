#!/usr/bin/env python3
"""Run both shipped scenarios end to end and summarize the outcomes."""

import sys

from compfrac.cli import main

SCENARIOS = ("monoenergetic", "bremsstrahlung")

if __name__ == "__main__":
    codes = {}
    for scenario in SCENARIOS:
        print(f"=== {scenario} ===")
        codes[scenario] = main(["reproduce", scenario])
    print()
    for scenario, code in codes.items():
        print(f"{scenario}: {'ok' if code == 0 else f'exit {code}'}")
    sys.exit(max(codes.values()))
