#!/usr/bin/env python3
"""Regenerate the default mitigation vocabulary (src/dupaudit/data/vocab.txt).

Counts lowercase alphabetic words across English prose available on the
build machine (Python package sources/docstrings and license texts), keeps
wordlike tokens (length 3-14, contains a vowel, seen in several distinct
files), and writes the top entries by frequency.  The output file is
committed, so runtime behavior never depends on this script's environment.
"""

from __future__ import annotations

import argparse
import re
import sysconfig
from collections import Counter
from pathlib import Path

WORD_RE = re.compile(r"[a-z]{3,14}")
VOWELS = set("aeiouy")


def harvest(paths, per_file_cap=20000):
    counts = Counter()
    files_seen = Counter()
    for path in paths:
        try:
            text = path.read_text(encoding="utf-8", errors="ignore").lower()
        except OSError:
            continue
        words = WORD_RE.findall(text)[:per_file_cap]
        counts.update(words)
        files_seen.update(set(words))
    return counts, files_seen


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--size", type=int, default=10000)
    ap.add_argument("--min-count", type=int, default=8)
    ap.add_argument("--min-files", type=int, default=4)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1]
                                         / "src/dupaudit/data/vocab.txt"))
    args = ap.parse_args()

    roots = [Path(sysconfig.get_paths()["purelib"])]
    license_dir = Path("/usr/share/common-licenses")
    sources = []
    for root in roots:
        sources.extend(sorted(root.rglob("*.py")))
        sources.extend(sorted(root.rglob("*.rst")))
        sources.extend(sorted(root.rglob("*.md")))
    if license_dir.is_dir():
        sources.extend(sorted(p for p in license_dir.iterdir() if p.is_file()))

    counts, files_seen = harvest(sources)
    keep = [
        (word, n) for word, n in counts.items()
        if n >= args.min_count
        and files_seen[word] >= args.min_files
        and set(word) & VOWELS
    ]
    keep.sort(key=lambda wn: (-wn[1], wn[0]))
    words = [w for w, _ in keep[:args.size]]
    words.sort()

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("\n".join(words) + "\n", encoding="utf-8")
    print(f"wrote {len(words)} words to {out}")


if __name__ == "__main__":
    main()
