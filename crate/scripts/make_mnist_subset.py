#!/usr/bin/env python3
"""Build the small MNIST IDX fixture used by the tests and desk-scale configs.

Source: the `mnist` npm package (MIT, Juan Cazala), which ships 10 000 MNIST
digits as JSON arrays of pixel/255 rounded to three decimals. Pixels are
recovered exactly with round(x * 255).

usage: make_mnist_subset.py <path/to/npm/package> <out_dir> [n_train] [n_test]
"""
import json
import os
import struct
import sys

import numpy as np


def write_idx_images(path, images):
    n, rows, cols = images.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, n, rows, cols))
        f.write(images.astype(np.uint8).tobytes())


def write_idx_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(np.asarray(labels, dtype=np.uint8).tobytes())


def main():
    pkg, out = sys.argv[1], sys.argv[2]
    n_train = int(sys.argv[3]) if len(sys.argv) > 3 else 2000
    n_test = int(sys.argv[4]) if len(sys.argv) > 4 else 500
    images, labels = [], []
    for digit in range(10):
        with open(os.path.join(pkg, "src", "digits", f"{digit}.json")) as f:
            data = np.asarray(json.load(f)["data"], dtype=np.float64)
        pix = np.rint(data * 255.0).astype(np.int64).reshape(-1, 28, 28)
        assert pix.min() >= 0 and pix.max() <= 255
        images.append(pix)
        labels.extend([digit] * len(pix))
    images = np.concatenate(images)
    labels = np.asarray(labels)
    order = np.random.default_rng(20211).permutation(len(images))
    images, labels = images[order], labels[order]
    os.makedirs(out, exist_ok=True)
    write_idx_images(os.path.join(out, "train-images-idx3-ubyte"), images[:n_train])
    write_idx_labels(os.path.join(out, "train-labels-idx1-ubyte"), labels[:n_train])
    test = slice(n_train, n_train + n_test)
    write_idx_images(os.path.join(out, "t10k-images-idx3-ubyte"), images[test])
    write_idx_labels(os.path.join(out, "t10k-labels-idx1-ubyte"), labels[test])


if __name__ == "__main__":
    main()
