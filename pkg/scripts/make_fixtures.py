#!/usr/bin/env python3
"""Materialize synthetic fixture datasets for demos and manual CLI runs.

Writes a crop dataset (bolt images + part masks + generation manifest) and a
scene dataset (inspection images + detection manifest) under --out.
"""

import argparse
from pathlib import Path

from sbde import fixtures


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="fixture_data", help="output directory")
    parser.add_argument("--crops", type=int, default=10, help="number of bolt crops")
    parser.add_argument("--scenes", type=int, default=4, help="number of train scenes")
    parser.add_argument("--test-scenes", type=int, default=1)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    out = Path(args.out)
    crops = fixtures.write_crop_dataset(out / "crops", args.crops, seed0=args.seed)
    scenes = fixtures.write_scene_dataset(
        out / "scenes", args.scenes, seed0=args.seed, n_test=args.test_scenes
    )
    print(f"crop manifest:  {crops}")
    print(f"scene manifest: {scenes}")


if __name__ == "__main__":
    main()
