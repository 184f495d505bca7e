"""Write a small synthetic dataset in the DDR release layout.

    python scripts/make_synthetic_dataset.py data/synthetic --size 80
"""

import argparse

from lanet.data import build_manifest, make_synthetic_ddr


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("root")
    parser.add_argument("--size", type=int, default=80)
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--seg", type=int, nargs=3, default=(8, 4, 4), metavar=("TRAIN", "VALID", "TEST"))
    parser.add_argument("--scr", type=int, nargs=2, default=(12, 12), metavar=("NODR", "NPDR"),
                        help="screening images per class in train; valid and test get two thirds")
    args = parser.parse_args()
    nodr, npdr = args.scr
    small = (max(1, 2 * nodr // 3), max(1, 2 * npdr // 3))
    root = make_synthetic_ddr(args.root, tuple(args.seg), ((nodr, npdr), small, small), args.size, args.seed)
    for kind in ("DDR-Seg", "DDR-Scr"):
        print(kind, build_manifest(root, kind).counts())


if __name__ == "__main__":
    main()
