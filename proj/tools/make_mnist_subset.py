#!/usr/bin/env python3
"""Write a class-balanced MNIST subset as IDX files.

The source is the 5000-digit MNIST sample shipped inside the mlxtend wheel
(mlxtend/data/data/mnist_5k.csv.gz, 500 digits per class). Only the wheel is
needed, not an installed mlxtend:

    pip download mlxtend --no-deps -d /tmp/mlx
    python3 tools/make_mnist_subset.py /tmp/mlx/mlxtend-*.whl data/ --per-class 200
"""
import argparse
import gzip
import struct
import zipfile
from pathlib import Path


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("wheel")
    ap.add_argument("out_dir")
    ap.add_argument("--per-class", type=int, default=200)
    args = ap.parse_args()

    with zipfile.ZipFile(args.wheel) as z:
        rows = gzip.decompress(z.read("mlxtend/data/data/mnist_5k.csv.gz")).decode().splitlines()

    taken = {c: 0 for c in range(10)}
    images, labels = [], []
    for row in rows:
        values = [int(v) for v in row.split(",")]
        label = values[-1]
        if taken[label] >= args.per_class:
            continue
        taken[label] += 1
        images.append(bytes(values[:-1]))
        labels.append(label)

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n = len(images)
    with open(out / "mnist-subset-images.idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, n, 28, 28))
        for img in images:
            f.write(img)
    with open(out / "mnist-subset-labels.idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x00000801, n))
        f.write(bytes(labels))
    print(f"wrote {n} digits to {out}")


if __name__ == "__main__":
    main()
