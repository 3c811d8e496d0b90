#!/usr/bin/env python3
# Copyright 2026 The imvae Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Builds the bundled 10k MNIST subset as gzipped IDX files.

The source is the `mnist` npm package (MIT), which ships 1000 digits per
class as JSON arrays of intensities in [0, 1] rounded to three decimals.
Usage:

    npm pack mnist && tar xzf mnist-1.1.0.tgz
    python3 tools/make_mnist_subset.py package/src/digits data/mnist10k
"""

import argparse
import gzip
import json
import os
import random
import struct

SIDE = 28


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("digits_dir")
    parser.add_argument("out_dir")
    parser.add_argument("--seed", type=int, default=20190211)
    args = parser.parse_args()

    examples = []
    for label in range(10):
        with open(os.path.join(args.digits_dir, f"{label}.json")) as f:
            raw = json.load(f)["data"]
        count = len(raw) // (SIDE * SIDE)
        for k in range(count):
            pixels = raw[k * SIDE * SIDE:(k + 1) * SIDE * SIDE]
            data = bytes(min(255, max(0, round(v * 255))) for v in pixels)
            examples.append((label, data))

    # Interleave classes so any contiguous tail is class-balanced in expectation.
    random.Random(args.seed).shuffle(examples)

    os.makedirs(args.out_dir, exist_ok=True)
    n = len(examples)
    images = struct.pack(">IIII", 2051, n, SIDE, SIDE) + b"".join(d for _, d in examples)
    labels = struct.pack(">II", 2049, n) + bytes(l for l, _ in examples)
    with gzip.GzipFile(os.path.join(args.out_dir, "images-idx3-ubyte.gz"), "wb", mtime=0) as f:
        f.write(images)
    with gzip.GzipFile(os.path.join(args.out_dir, "labels-idx1-ubyte.gz"), "wb", mtime=0) as f:
        f.write(labels)
    print(f"wrote {n} examples to {args.out_dir}")


if __name__ == "__main__":
    main()
