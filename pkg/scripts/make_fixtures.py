"""Write the synthetic fixtures as raw little-endian f32 files for the CLI.

    python3 scripts/make_fixtures.py OUTDIR [--shape 64,64,64] [--seed 0]
"""

import argparse
import pathlib

from qoipress.fixtures import FIELDS, seed_from_env


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("outdir", type=pathlib.Path)
    ap.add_argument("--shape", default="64,64,64")
    ap.add_argument("--seed", type=int, default=seed_from_env())
    ap.add_argument("--copies", type=int, default=3, help="independent realisations per fixture")
    args = ap.parse_args()
    shape = tuple(int(s) for s in args.shape.split(","))
    args.outdir.mkdir(parents=True, exist_ok=True)
    for name, gen in FIELDS.items():
        for j in range(args.copies):
            path = args.outdir / f"{name}_{j}.f32"
            gen(shape, seed=args.seed + j).astype("<f4").tofile(path)
            print(path)


if __name__ == "__main__":
    main()
