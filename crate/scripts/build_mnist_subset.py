#!/usr/bin/env python3
"""Rebuild data/mnist/ from the `mnist` npm package (10,000 MNIST digits).

The npm package stores each digit as 784 grayscale values rounded to three
decimals; round(v * 255) recovers the original byte exactly. Digits are
shuffled with a fixed seed and split into an 8,000-image training file (the
CLI holds out the last 1,000 for validation) and a 2,000-image test file,
both written as gzipped IDX.

    npm pack mnist@1.1.0 && tar xzf mnist-1.1.0.tgz
    python3 scripts/build_mnist_subset.py package/src/digits data/mnist
"""
import gzip
import json
import random
import struct
import sys
from pathlib import Path

TRAIN = 8000
SEED = 20250915


def write_gz(path, payload):
    with open(path, "wb") as raw:
        with gzip.GzipFile(fileobj=raw, mode="wb", mtime=0, filename="") as gz:
            gz.write(payload)


def main(src, dst):
    samples = []
    for digit in range(10):
        values = json.loads(Path(src, f"{digit}.json").read_text())["data"]
        for i in range(len(values) // 784):
            pixels = bytes(round(v * 255) for v in values[i * 784:(i + 1) * 784])
            samples.append((pixels, digit))
    random.Random(SEED).shuffle(samples)

    dst = Path(dst)
    dst.mkdir(parents=True, exist_ok=True)
    for prefix, part in (("train", samples[:TRAIN]), ("t10k", samples[TRAIN:])):
        images = struct.pack(">IIII", 0x803, len(part), 28, 28) + b"".join(p for p, _ in part)
        labels = struct.pack(">II", 0x801, len(part)) + bytes(d for _, d in part)
        write_gz(dst / f"{prefix}-images-idx3-ubyte.gz", images)
        write_gz(dst / f"{prefix}-labels-idx1-ubyte.gz", labels)
        print(f"{prefix}: {len(part)} samples")


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
