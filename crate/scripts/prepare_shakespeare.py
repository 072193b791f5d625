#!/usr/bin/env python3
"""Build the desk-scale word-level corpus from Project Gutenberg Shakespeare plays.

Usage: prepare_shakespeare.py <texts-dir> <out-dir>

<texts-dir> is the `shksprdata/texts` directory of the `shakespeare` PyPI sdist
(Gutenberg editions, public domain). Output follows the PTB layout: lowercase,
punctuation stripped, one line per source line, blank lines dropped.
"""
import re
import sys
from pathlib import Path

TRAIN = ["hamlet", "othello", "lear", "julius_caesar", "romeo_and_juliet",
         "merchant_of_venice"]
VALID = ["macbeth"]
TEST = ["tempest"]


def clean(path):
    out = []
    for line in path.read_text(encoding="utf-8", errors="strict").splitlines():
        line = line.lower().replace("’", "'")
        line = re.sub(r"[^a-z' ]+", " ", line)
        words = [w.strip("'") for w in line.split()]
        words = [w for w in words if w]
        if words:
            out.append(" ".join(words))
    return out


def main():
    src, dst = Path(sys.argv[1]), Path(sys.argv[2])
    dst.mkdir(parents=True, exist_ok=True)
    total = 0
    for name, plays in (("train", TRAIN), ("valid", VALID), ("test", TEST)):
        lines = []
        for play in plays:
            lines.extend(clean(src / f"{play}_gut.txt"))
        text = "\n".join(lines) + "\n"
        (dst / f"{name}.txt").write_text(text, encoding="utf-8")
        total += len(text)
        print(f"{name}: {len(lines)} lines, {sum(len(l.split()) for l in lines)} words, {len(text)} chars")
    print(f"total chars: {total}")


if __name__ == "__main__":
    main()
