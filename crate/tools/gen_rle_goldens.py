#!/usr/bin/env python3
"""Regenerates tests/fixtures/rle_goldens.json.

The compressed-counts codec here is a line-for-line transcription of
rleToString/rleFrString from the COCO API's maskApi.c, kept independent of
the Rust implementation so the fixture cross-checks it byte-for-byte.
"""

import json
import random
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "crates" / "pastiche-core" / "tests" / "fixtures" / "rle_goldens.json"


def rle_to_string(cnts):
    s = []
    for i, c in enumerate(cnts):
        x = int(c)
        if i > 2:
            x -= int(cnts[i - 2])
        more = True
        while more:
            ch = x & 0x1F
            x >>= 5
            more = (x != -1) if (ch & 0x10) else (x != 0)
            if more:
                ch |= 0x20
            s.append(chr(ch + 48))
    return "".join(s)


def rle_from_string(s, h, w):
    cnts = []
    p = 0
    while p < len(s):
        x = 0
        k = 0
        more = True
        while more:
            c = ord(s[p]) - 48
            x |= (c & 0x1F) << (5 * k)
            more = bool(c & 0x20)
            p += 1
            k += 1
            if not more and (c & 0x10):
                x |= -1 << (5 * k)
        if len(cnts) > 2:
            x += cnts[-2]
        cnts.append(x)
    return cnts


def encode_column_major(pixels, h, w):
    """pixels[y][x] -> zero-first column-major run lengths."""
    cnts = []
    prev = 0
    run = 0
    for x in range(w):
        for y in range(h):
            v = 1 if pixels[y][x] else 0
            if v != prev:
                cnts.append(run)
                run = 0
                prev = v
            run += 1
    cnts.append(run)
    return cnts


def random_mask(rng, h, w):
    density = rng.random()
    return [[1 if rng.random() < density else 0 for _ in range(w)] for _ in range(h)]


def main():
    rng = random.Random(0x51DE)
    cases = []

    def add(h, w, pixels):
        cnts = encode_column_major(pixels, h, w)
        s = rle_to_string(cnts)
        assert rle_from_string(s, h, w) == cnts, (h, w, cnts, s)
        cases.append({"size": [h, w], "counts": cnts, "compressed": s})

    # structured edge cases
    add(1, 1, [[0]])
    add(1, 1, [[1]])
    add(3, 3, [[0] * 3 for _ in range(3)])
    add(3, 3, [[1] * 3 for _ in range(3)])
    add(1, 7, [[0, 1, 0, 1, 1, 0, 1]])
    add(7, 1, [[i % 2] for i in range(7)])
    add(4, 4, [[(x + y) % 2 for x in range(4)] for y in range(4)])
    add(5, 5, [[1 if (x, y) == (0, 0) else 0 for x in range(5)] for y in range(5)])
    add(5, 5, [[1 if (x, y) == (4, 4) else 0 for x in range(5)] for y in range(5)])
    add(6, 9, [[1 if 2 <= x < 7 and 1 <= y < 5 else 0 for x in range(9)] for y in range(6)])

    # randomized sizes up to 128x128
    while len(cases) < 50:
        h = rng.randint(1, 128)
        w = rng.randint(1, 128)
        add(h, w, random_mask(rng, h, w))

    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(json.dumps({"cases": cases}, separators=(",", ":")) + "\n")
    print(f"wrote {len(cases)} cases -> {OUT}")


if __name__ == "__main__":
    main()
