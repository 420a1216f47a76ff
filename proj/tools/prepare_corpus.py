#!/usr/bin/env python3
# SPDX-License-Identifier: Apache-2.0
"""Builds the bundled text corpora from the World English Bible (public domain).

Input is the JSON layout of the `world-english-bible` npm package. Output is
ASCII text, one paragraph per line.
"""
import argparse
import json
import pathlib

TRANSLATE = str.maketrans({
    "\u2018": "'", "\u2019": "'", "\u201c": '"', "\u201d": '"',
    "\u2014": '--', "\u2013": '-', "\u00a0": ' ',
})

CORPUS_BOOKS = ["genesis", "exodus", "leviticus", "numbers", "deuteronomy",
                "joshua", "judges", "1samuel", "2samuel"]
SAMPLE_BOOKS = ["ruth", "esther", "jonah", "proverbs"]


def book_text(path):
    paragraphs, current = [], []
    for item in json.loads(path.read_text(encoding="utf-8")):
        kind = item["type"]
        if kind in ("paragraph text", "line text"):
            current.append(item["value"].strip())
        elif kind in ("paragraph end", "stanza end") and current:
            paragraphs.append(" ".join(current))
            current = []
    if current:
        paragraphs.append(" ".join(current))
    text = "\n".join(" ".join(p.split()) for p in paragraphs) + "\n"
    text = text.translate(TRANSLATE)
    return text.encode("ascii", "ignore").decode("ascii")


def build(json_dir, books, limit):
    out = "".join(book_text(json_dir / f"{b}.json") for b in books)
    return out[:limit] if limit else out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("json_dir", type=pathlib.Path)
    ap.add_argument("--out-dir", type=pathlib.Path, default=pathlib.Path("data"))
    args = ap.parse_args()
    args.out_dir.mkdir(parents=True, exist_ok=True)
    (args.out_dir / "corpus.txt").write_text(build(args.json_dir, CORPUS_BOOKS, 640_000))
    (args.out_dir / "sample.txt").write_text(build(args.json_dir, SAMPLE_BOOKS, 100_000))


if __name__ == "__main__":
    main()
