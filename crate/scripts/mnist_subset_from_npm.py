#!/usr/bin/env python3
"""Convert the 10k-digit MNIST subset shipped in the `mnist` npm package to IDX.

Usage:
    npm pack mnist && tar xzf mnist-*.tgz
    python3 scripts/mnist_subset_from_npm.py package/src/digits data/mnist-subset

Writes gzipped train (8000) / t10k (2000) IDX files. The split is a fixed
permutation (seed 20240501) so the files are reproducible.
"""
import gzip
import json
import random
import struct
import sys
from pathlib import Path

TRAIN = 8000


def write_idx_images(path, images):
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        for img in images:
            f.write(bytes(img))


def write_idx_labels(path, labels):
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main(src, dst):
    src, dst = Path(src), Path(dst)
    samples = []
    for digit in range(10):
        data = json.loads((src / f"{digit}.json").read_text())["data"]
        assert len(data) % 784 == 0
        for k in range(len(data) // 784):
            px = [int(round(v * 255)) for v in data[k * 784:(k + 1) * 784]]
            assert all(0 <= p <= 255 for p in px)
            samples.append((px, digit))
    random.Random(20240501).shuffle(samples)
    dst.mkdir(parents=True, exist_ok=True)
    train, test = samples[:TRAIN], samples[TRAIN:]
    write_idx_images(dst / "train-images-idx3-ubyte.gz", [s[0] for s in train])
    write_idx_labels(dst / "train-labels-idx1-ubyte.gz", [s[1] for s in train])
    write_idx_images(dst / "t10k-images-idx3-ubyte.gz", [s[0] for s in test])
    write_idx_labels(dst / "t10k-labels-idx1-ubyte.gz", [s[1] for s in test])
    print(f"train={len(train)} test={len(test)}")


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
