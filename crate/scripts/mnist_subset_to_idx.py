#!/usr/bin/env python3
"""Convert the 10,000 MNIST digits bundled in the npm `mnist` package to IDX.

    npm pack mnist && tar xzf mnist-*.tgz
    python3 scripts/mnist_subset_to_idx.py package/src/digits OUT_DIR [--test 2000] [--seed 0]

The package stores pixels as value/255 rounded to three decimals, so
round(v * 255) recovers the original bytes. Digits are shuffled with a fixed
seed and split into train-{images,labels} and t10k-{images,labels} files.
"""
import argparse
import json
import os
import random
import struct


def write_images(path, images):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x803, len(images), 28, 28))
        for img in images:
            f.write(bytes(img))


def write_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x801, len(labels)))
        f.write(bytes(labels))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("digits_dir")
    ap.add_argument("out_dir")
    ap.add_argument("--test", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    samples = []
    for d in range(10):
        with open(os.path.join(args.digits_dir, f"{d}.json")) as f:
            data = json.load(f)["data"]
        for i in range(0, len(data), 784):
            samples.append(([round(v * 255) for v in data[i : i + 784]], d))
    random.Random(args.seed).shuffle(samples)
    test, train = samples[: args.test], samples[args.test :]

    os.makedirs(args.out_dir, exist_ok=True)
    for name, part in (("train", train), ("t10k", test)):
        write_images(os.path.join(args.out_dir, f"{name}-images-idx3-ubyte"), [s[0] for s in part])
        write_labels(os.path.join(args.out_dir, f"{name}-labels-idx1-ubyte"), [s[1] for s in part])
    print(f"{len(train)} train, {len(test)} test digits written to {args.out_dir}")


if __name__ == "__main__":
    main()
