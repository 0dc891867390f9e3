#!/usr/bin/env python3
"""Sweep the contraction parameter lambda and print epsilon per grid point.

Useful for seeing how conservative the certified bound is across the
feasible range before committing to a design.

Usage: python scripts/lambda_sweep.py path/to/config.json [n_points]
"""

import sys
from dataclasses import replace
from pathlib import Path

from layersynth.cli import bundled_config_text
from layersynth.synthesis import SynthesisError, design_pipeline
from layersynth.systems import load_config


def main(argv: list[str]) -> int:
    if not argv:
        print(__doc__, file=sys.stderr)
        return 2
    source = argv[0]
    n_points = int(argv[1]) if len(argv) > 1 else 20
    if Path(source).exists():
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = bundled_config_text(source)
    arch = load_config(text)

    grid = [k / (n_points + 1) for k in range(1, n_points + 1)]
    print("lambda,status,epsilon")
    for lam in grid:
        one = replace(arch, synth=replace(arch.synth, lambda_grid=(lam,),
                                          use_constructive_fallback=False))
        try:
            design = design_pipeline(one)
            print(f"{lam:.6f},optimal,{design.cert.epsilon:.6f}")
        except SynthesisError:
            print(f"{lam:.6f},infeasible,")
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
