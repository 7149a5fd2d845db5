#!/usr/bin/env python3
"""Write the three built-in synthetic image pairs as PNG files.

Usage: python3 scripts/make_example_images.py [--out-dir DIR] [--side N]
"""

import argparse
from pathlib import Path

from qcreg import SHIPPED_PAIRS, write_image


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default="example_images")
    parser.add_argument("--side", type=int, default=128)
    args = parser.parse_args()

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, make in SHIPPED_PAIRS.items():
        moving, static = make(args.side)
        write_image(out / f"{name}_moving.png", moving)
        write_image(out / f"{name}_static.png", static)
        print(f"{name}: wrote {moving.shape[0]} x {moving.shape[1]} pair to {out}/")


if __name__ == "__main__":
    main()
