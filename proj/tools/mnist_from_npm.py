#!/usr/bin/env python3
"""Convert the digit JSON shipped in the npm `mnist` package into IDX files.

Usage: mnist_from_npm.py <package/src/digits> <out-dir> [--test-fraction 0.2]

Each digit's images are split deterministically (tail fraction goes to the
test files) so that UMNIST train and test sets never share a source digit.
"""
import argparse
import json
import struct
from pathlib import Path


def write_idx(path, magic, dims, payload):
    with open(path, "wb") as f:
        f.write(struct.pack(">I", magic))
        for d in dims:
            f.write(struct.pack(">I", d))
        f.write(bytes(payload))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("digits_dir")
    ap.add_argument("out_dir")
    ap.add_argument("--test-fraction", type=float, default=0.2)
    args = ap.parse_args()

    splits = {"train": ([], []), "t10k": ([], [])}
    for digit in range(10):
        raw = json.load(open(Path(args.digits_dir) / f"{digit}.json"))["data"]
        n = len(raw) // 784
        n_test = int(round(n * args.test_fraction))
        for i in range(n):
            pixels = [int(round(v * 255)) for v in raw[i * 784:(i + 1) * 784]]
            split = "t10k" if i >= n - n_test else "train"
            splits[split][0].extend(pixels)
            splits[split][1].append(digit)

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, (pixels, labels) in splits.items():
        write_idx(out / f"{name}-images-idx3-ubyte", 0x00000803,
                  [len(labels), 28, 28], pixels)
        write_idx(out / f"{name}-labels-idx1-ubyte", 0x00000801,
                  [len(labels)], labels)
        print(f"{name}: {len(labels)} images")


if __name__ == "__main__":
    main()
