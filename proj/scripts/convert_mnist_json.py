#!/usr/bin/env python3
"""Convert the npm `mnist` package's digit JSONs into IDX files.

The package (https://www.npmjs.com/package/mnist) ships 10,000 MNIST digits
(863-1127 per class) as flat JSON arrays of pixel values rounded to three
decimals of v/255.  Rounding v*255 back recovers the original byte exactly, so
the emitted IDX files contain true MNIST pixels.

Usage:
    npm install mnist
    python3 scripts/convert_mnist_json.py node_modules/mnist/src/digits data/mnist

Output: train-images-idx3-ubyte / train-labels-idx1-ubyte plus the t10k pair,
an 80/20 split within each class, classes interleaved round-robin so any
prefix of either split is roughly class-balanced.
"""

import json
import pathlib
import struct
import sys

ROWS = COLS = 28
PIXELS = ROWS * COLS


def read_digit(path: pathlib.Path) -> list[bytes]:
    flat = json.loads(path.read_text())["data"]
    if len(flat) % PIXELS:
        raise SystemExit(f"{path}: {len(flat)} values is not a multiple of {PIXELS}")
    images = []
    for off in range(0, len(flat), PIXELS):
        block = flat[off : off + PIXELS]
        images.append(bytes(round(v * 255) for v in block))
    return images


def write_idx(
    images_path: pathlib.Path, labels_path: pathlib.Path, pairs: list[tuple[bytes, int]]
) -> None:
    with open(images_path, "wb") as out:
        out.write(struct.pack(">IIII", 0x803, len(pairs), ROWS, COLS))
        for image, _ in pairs:
            out.write(image)
    with open(labels_path, "wb") as out:
        out.write(struct.pack(">II", 0x801, len(pairs)))
        out.write(bytes(label for _, label in pairs))


def main() -> None:
    if len(sys.argv) != 3:
        raise SystemExit(__doc__)
    src = pathlib.Path(sys.argv[1])
    dst = pathlib.Path(sys.argv[2])
    dst.mkdir(parents=True, exist_ok=True)

    per_digit = [read_digit(src / f"{digit}.json") for digit in range(10)]
    train_counts = [len(images) - len(images) // 5 for images in per_digit]

    def interleave(lo: list[int], hi: list[int]) -> list[tuple[bytes, int]]:
        pairs = []
        for i in range(max(hi) - min(lo)):
            for digit, images in enumerate(per_digit):
                if lo[digit] + i < hi[digit]:
                    pairs.append((images[lo[digit] + i], digit))
        return pairs

    train = interleave([0] * 10, train_counts)
    test = interleave(train_counts, [len(images) for images in per_digit])

    write_idx(dst / "train-images-idx3-ubyte", dst / "train-labels-idx1-ubyte", train)
    write_idx(dst / "t10k-images-idx3-ubyte", dst / "t10k-labels-idx1-ubyte", test)
    print(f"wrote {len(train)} train and {len(test)} test images to {dst}")


if __name__ == "__main__":
    main()
