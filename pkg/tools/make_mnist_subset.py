"""Build a 10,000-image MNIST subset in IDX format from the ``mnist`` npm package.

The npm package (cazala/mnist, MIT) ships 10,000 MNIST digits as one JSON
file per class, with gray levels divided by 255 and rounded to three
decimals. This script rounds them back to bytes, shuffles with a fixed
seed and writes an 8,000 / 2,000 train/test split:

    npm pack mnist && tar xzf mnist-*.tgz
    python tools/make_mnist_subset.py package/src/digits data/mnist10k

The training code reads the result with ``vmfml.load_idx``.
"""

import argparse
import json
from pathlib import Path

import numpy as np

from vmfml.data import write_idx


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("digits_dir", type=Path, help="directory holding 0.json ... 9.json")
    ap.add_argument("out_dir", type=Path)
    ap.add_argument("--n-test", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    images, labels = [], []
    for digit in range(10):
        flat = np.asarray(json.loads((args.digits_dir / f"{digit}.json").read_text())["data"])
        block = np.rint(flat * 255).astype(np.uint8).reshape(-1, 28, 28)
        images.append(block)
        labels.append(np.full(block.shape[0], digit, dtype=np.uint8))
    images = np.concatenate(images)
    labels = np.concatenate(labels)

    order = np.random.default_rng(args.seed).permutation(labels.size)
    images, labels = images[order], labels[order]
    n_train = labels.size - args.n_test

    args.out_dir.mkdir(parents=True, exist_ok=True)
    write_idx(args.out_dir / "train-images-idx3-ubyte.gz", args.out_dir / "train-labels-idx1-ubyte.gz",
              images[:n_train], labels[:n_train])
    write_idx(args.out_dir / "test-images-idx3-ubyte.gz", args.out_dir / "test-labels-idx1-ubyte.gz",
              images[n_train:], labels[n_train:])
    print(f"wrote {n_train} training and {args.n_test} test images to {args.out_dir}")


if __name__ == "__main__":
    main()
