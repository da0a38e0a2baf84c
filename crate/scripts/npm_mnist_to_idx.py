#!/usr/bin/env python3
"""Convert the digits bundled in the `mnist` npm package into IDX files.

The official MNIST mirrors are the preferred source. This helper exists for
machines that can reach an npm registry but not the dataset mirrors. The npm
package ships roughly 1000 real MNIST digits per class as [0, 1] floats; they
are rescaled to bytes, interleaved across classes (so a prefix of the test
split is class-balanced like the original) and split 80/20 into train/test.

Usage:
    npm pack mnist && tar xzf mnist-*.tgz
    python3 scripts/npm_mnist_to_idx.py package/src/digits data/mnist
"""

import gzip
import json
import os
import struct
import sys

SIDE = 28
PIXELS = SIDE * SIDE


def load_digit(path):
    with open(path) as f:
        raw = json.load(f)["data"]
    n = len(raw) // PIXELS
    return [
        bytes(min(255, max(0, round(v * 255))) for v in raw[i * PIXELS:(i + 1) * PIXELS])
        for i in range(n)
    ]


def interleave(per_class):
    out = []
    cursors = [0] * len(per_class)
    remaining = sum(len(c) for c in per_class)
    while remaining:
        for label, images in enumerate(per_class):
            if cursors[label] < len(images):
                out.append((label, images[cursors[label]]))
                cursors[label] += 1
                remaining -= 1
    return out


def write_idx(out_dir, prefix, samples):
    with gzip.open(os.path.join(out_dir, f"{prefix}-images-idx3-ubyte.gz"), "wb") as f:
        f.write(struct.pack(">IIII", 0x803, len(samples), SIDE, SIDE))
        for _, img in samples:
            f.write(img)
    with gzip.open(os.path.join(out_dir, f"{prefix}-labels-idx1-ubyte.gz"), "wb") as f:
        f.write(struct.pack(">II", 0x801, len(samples)))
        f.write(bytes(label for label, _ in samples))


def main():
    if len(sys.argv) != 3:
        sys.exit(__doc__)
    src, out_dir = sys.argv[1], sys.argv[2]
    os.makedirs(out_dir, exist_ok=True)
    train, test = [], []
    for digit in range(10):
        images = load_digit(os.path.join(src, f"{digit}.json"))
        cut = int(len(images) * 0.8)
        train.append(images[:cut])
        test.append(images[cut:])
    write_idx(out_dir, "train", interleave(train))
    write_idx(out_dir, "t10k", interleave(test))


if __name__ == "__main__":
    main()
