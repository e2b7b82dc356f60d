#!/usr/bin/env python3
"""Build the bundled MNIST sample under data/mnist-sample/.

The 5,000-digit MNIST excerpt shipped inside the mlxtend wheel (500 digits
per class, BSD-3 packaging of the original LeCun/Cortes/Burges data) is
shuffled with a fixed seed and split into a 4,000-image training pool and a
1,000-image test set, written as gzip-compressed IDX files.

Usage: python3 scripts/make_mnist_sample.py [--wheel path/to/mlxtend.whl]
Without --wheel the script runs `pip download mlxtend` into a temp dir.
"""

import argparse
import gzip
import os
import struct
import subprocess
import sys
import tempfile
import zipfile

import numpy as np

SEED = 20220712
TRAIN_COUNT = 4000
MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def find_wheel(explicit):
    if explicit:
        return explicit
    tmp = tempfile.mkdtemp()
    subprocess.check_call([sys.executable, "-m", "pip", "download", "--no-deps",
                           "--dest", tmp, "mlxtend"])
    for name in os.listdir(tmp):
        if name.endswith(".whl"):
            return os.path.join(tmp, name)
    raise SystemExit("mlxtend wheel not found after download")


def write_idx(path, magic, dims, payload):
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(struct.pack(">I", magic))
        for d in dims:
            f.write(struct.pack(">I", d))
        f.write(payload)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--wheel")
    ap.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "..",
                                                  "data", "mnist-sample"))
    args = ap.parse_args()

    with zipfile.ZipFile(find_wheel(args.wheel)) as z:
        text = gzip.decompress(z.read(MEMBER)).decode()
    rows = np.array([[int(v) for v in line.split(",")]
                     for line in text.strip().split("\n")], dtype=np.int64)
    images = rows[:, :784].astype(np.uint8)
    labels = rows[:, 784].astype(np.uint8)

    order = np.random.RandomState(SEED).permutation(len(labels))
    images, labels = images[order], labels[order]

    os.makedirs(args.out, exist_ok=True)
    splits = {"train": slice(0, TRAIN_COUNT), "t10k": slice(TRAIN_COUNT, None)}
    for name, sl in splits.items():
        img, lab = images[sl], labels[sl]
        write_idx(os.path.join(args.out, f"{name}-images-idx3-ubyte.gz"), 0x803,
                  [len(lab), 28, 28], img.tobytes())
        write_idx(os.path.join(args.out, f"{name}-labels-idx1-ubyte.gz"), 0x801,
                  [len(lab)], lab.tobytes())
        print(name, len(lab), np.bincount(lab, minlength=10).tolist())


if __name__ == "__main__":
    main()
