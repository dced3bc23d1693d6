#!/usr/bin/env python3
"""Build the small two-class MNIST fixture under data/mnist-01.

The source is the digit JSON shipped with the `mnist` npm package
(https://github.com/cazala/mnist, MIT): one file per digit holding the
concatenated 28x28 images as floats in [0, 1]. The script writes genuine
IDX files (big-endian, magic 0x803 / 0x801) with the two classes
interleaved, so a loader that takes "the first n images of either class"
sees both.

usage: make_mnist_fixture.py <digits-dir> <out-dir> [per-class]
"""

import json
import struct
import sys
from pathlib import Path

SIDE = 28


def load_digit(src: Path, digit: int) -> list[bytes]:
    data = json.loads((src / f"{digit}.json").read_text())["data"]
    n = len(data) // (SIDE * SIDE)
    images = []
    for k in range(n):
        px = data[k * SIDE * SIDE:(k + 1) * SIDE * SIDE]
        images.append(bytes(min(255, max(0, round(v * 255))) for v in px))
    return images


def main() -> None:
    src, out = Path(sys.argv[1]), Path(sys.argv[2])
    per_class = int(sys.argv[3]) if len(sys.argv) > 3 else 250
    zeros = load_digit(src, 0)[:per_class]
    ones = load_digit(src, 1)[:per_class]
    images, labels = [], []
    for a, b in zip(zeros, ones):
        images += [a, b]
        labels += [0, 1]
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "images.idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x803, len(images), SIDE, SIDE))
        for img in images:
            f.write(img)
    with open(out / "labels.idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x801, len(labels)))
        f.write(bytes(labels))
    print(f"wrote {len(images)} images to {out}")


if __name__ == "__main__":
    main()
