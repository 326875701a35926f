#!/usr/bin/env python3
# Copyright 2026 The pebias Authors.
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
"""Writes the published resolve_seed test vectors (independent Python port)."""

import argparse
import sys

MASK = (1 << 64) - 1


def splitmix64(x):
    x = (x + 0x9E3779B97F4A7C15) & MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK
    return x ^ (x >> 31)


def fnv1a64(s):
    h = 0xCBF29CE484222325
    for b in s.encode("utf-8"):
        h ^= b
        h = (h * 0x100000001B3) & MASK
    return h


def mix_seed(h, v):
    return splitmix64(splitmix64(h) ^ v)


def resolve_seed(master, setting, seed_index, stage):
    h = splitmix64(master)
    h = mix_seed(h, setting)
    h = mix_seed(h, seed_index)
    return mix_seed(h, fnv1a64(stage))


CASES = [
    (0, 0, 0, ""),
    (0, 0, 0, "prefs"),
    (0, 0, 0, "test"),
    (0, 1, 0, "mnar"),
    (0, 0, 1, "mnar"),
    (1, 0, 0, "mnar"),
    (42, 3, 9, "cv"),
    (42, 3, 9, "train:MF"),
    (42, 3, 9, "train:MF-IPS"),
    (42, 3, 9, "train:ExpoMF"),
    (12345, 2, 4, "gmm"),
    (12345, 2, 4, "walks"),
    (12345, 2, 4, "embeddings"),
    (2**64 - 1, 2**64 - 1, 2**64 - 1, "graph-split"),
]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="-", help="output TSV path (default stdout)")
    args = parser.parse_args()
    out = sys.stdout if args.out == "-" else open(args.out, "w", encoding="utf-8")
    out.write("master\tsetting\tseed_index\tstage\tseed\n")
    for master, setting, seed_index, stage in CASES:
        out.write(f"{master}\t{setting}\t{seed_index}\t{stage}\t"
                  f"{resolve_seed(master, setting, seed_index, stage)}\n")
    out.write(f"#fnv1a64\tprefs\t{fnv1a64('prefs')}\n")
    out.write(f"#splitmix64\t0\t{splitmix64(0)}\n")


if __name__ == "__main__":
    main()
