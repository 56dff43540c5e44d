#!/usr/bin/env python3
"""Convert the digits bundled with the npm `mnist` package into IDX files.

The npm package (https://www.npmjs.com/package/mnist) ships 10,000 MNIST
digits as normalized floats in src/digits/<d>.json. This script restores the
8-bit pixel values, shuffles with a fixed seed so that any prefix contains
every class, and writes big-endian IDX files:

    images-idx3-ubyte   magic 0x00000803, n x 28 x 28 uint8
    labels-idx1-ubyte   magic 0x00000801, n uint8

Usage:
    npm pack mnist && tar xzf mnist-*.tgz
    python3 tools/mnist_from_npm.py package/ data/mnist
    tar czf data/mnist-10k-idx.tar.gz -C data mnist
"""

import argparse
import json
import pathlib
import random
import struct

SIDE = 28


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("package_dir", type=pathlib.Path)
    parser.add_argument("out_dir", type=pathlib.Path)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    images = []
    labels = []
    for digit in range(10):
        path = args.package_dir / "src" / "digits" / f"{digit}.json"
        flat = json.loads(path.read_text())["data"]
        if len(flat) % (SIDE * SIDE) != 0:
            raise SystemExit(f"{path}: length {len(flat)} is not a multiple of {SIDE * SIDE}")
        for k in range(len(flat) // (SIDE * SIDE)):
            chunk = flat[k * SIDE * SIDE:(k + 1) * SIDE * SIDE]
            images.append(bytes(min(255, max(0, round(v * 255))) for v in chunk))
            labels.append(digit)

    order = list(range(len(images)))
    random.Random(args.seed).shuffle(order)

    args.out_dir.mkdir(parents=True, exist_ok=True)
    with open(args.out_dir / "images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(order), SIDE, SIDE))
        for i in order:
            f.write(images[i])
    with open(args.out_dir / "labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(order)))
        f.write(bytes(labels[i] for i in order))
    print(f"wrote {len(order)} digits to {args.out_dir}")


if __name__ == "__main__":
    main()
