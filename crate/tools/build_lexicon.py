#!/usr/bin/env python3
"""Regenerate the bundled pinyin lexicon and syllable inventory.

Requires `pypinyin` and `jieba` (only for regeneration; the generated files are
checked in). Character frequency comes from jieba's word-frequency dictionary;
per-reading weights come from pypinyin's phrase-aware readings of those same
words, weighted by word frequency, with add-one smoothing so every listed
reading stays reachable.

    python3 tools/build_lexicon.py --size 3000
"""

import argparse
import collections
import os
import re

import jieba
import pypinyin
from pypinyin import Style

INITIALS = ["zh", "ch", "sh", "b", "p", "m", "f", "d", "t", "n", "l", "g", "k",
            "h", "j", "q", "x", "r", "z", "c", "s", "y", "w"]
FINALS = {"a", "o", "e", "i", "u", "v", "ai", "ei", "ui", "ao", "ou", "iu", "ie",
          "ve", "ue", "er", "an", "en", "in", "un", "vn", "ang", "eng", "ing",
          "ong", "ia", "iao", "ian", "iang", "iong", "ua", "uo", "uai", "uan",
          "uang"}
SYLLABLE_RE = re.compile(r"^([a-z]+)([0-4])?$")
DATA = os.path.join(os.path.dirname(__file__), "..", "crates", "core", "data")


def split(syl):
    m = SYLLABLE_RE.match(syl)
    if not m:
        return None
    body, tone = m.group(1), int(m.group(2) or 0)
    for ini in INITIALS:
        if body.startswith(ini):
            fin = body[len(ini):]
            return (ini, fin, tone) if fin in FINALS else None
    if body in FINALS and body[0] in "aoe":
        return "", body, tone
    return None


def is_hanzi(ch):
    return "一" <= ch <= "鿿"


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--size", type=int, default=3000)
    args = ap.parse_args()

    dict_path = os.path.join(os.path.dirname(jieba.__file__), "dict.txt")
    words = []
    with open(dict_path, encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            if len(parts) >= 2 and all(is_hanzi(c) for c in parts[0]):
                words.append((parts[0], int(parts[1])))

    char_freq = collections.Counter()
    for w, f in words:
        for c in w:
            char_freq[c] += f

    forced = set()
    fixtures = os.path.join(DATA, "fixtures")
    for name in ("pairs.tsv", "templates.txt"):
        with open(os.path.join(fixtures, name), encoding="utf-8") as fh:
            for line in fh:
                if line.startswith("#"):
                    continue
                forced.update(c for c in line if is_hanzi(c))

    def readings_of(c):
        out = []
        for r in pypinyin.pinyin(c, style=Style.TONE3, heteronym=True)[0]:
            if split(r) and r not in out:
                out.append(r)
        return out

    chosen = [c for c in sorted(forced) if readings_of(c)]
    for c, _ in char_freq.most_common():
        if len(chosen) >= args.size:
            break
        if c not in forced and readings_of(c):
            chosen.append(c)
    chosen_set = set(chosen)

    reading_counts = collections.defaultdict(collections.Counter)
    for w, f in words:
        if not any(c in chosen_set for c in w):
            continue
        for c, r in zip(w, pypinyin.lazy_pinyin(w, style=Style.TONE3)):
            if c in chosen_set and split(r):
                reading_counts[c][r] += f

    inventory = set()
    lines = []
    for c in sorted(chosen):
        rs = readings_of(c)
        for r in reading_counts[c]:
            if r not in rs:
                rs.append(r)
        counts = [reading_counts[c][r] + 1 for r in rs]
        total = float(sum(counts))
        weighted = sorted(zip(rs, counts), key=lambda x: (-x[1], rs.index(x[0])))
        cells = []
        for r, n in weighted:
            ini, fin, _ = split(r)
            inventory.add((ini, fin))
            cells.append("%s:%.6f" % (r, n / total))
        lines.append("%s\t%s" % (c, ",".join(cells)))

    with open(os.path.join(DATA, "lexicon.tsv"), "w", encoding="utf-8") as fh:
        fh.write("# hanzi<TAB>syllable:weight[,syllable:weight]*\n")
        fh.write("# generated by tools/build_lexicon.py; weights are relative reading frequencies\n")
        fh.write("\n".join(lines) + "\n")

    # the inventory covers every syllable pypinyin knows, not only the chosen characters
    for code in range(0x4E00, 0xA000):
        for r in pypinyin.pinyin(chr(code), style=Style.TONE3, heteronym=True)[0]:
            s = split(r)
            if s:
                inventory.add((s[0], s[1]))
    with open(os.path.join(DATA, "syllables.txt"), "w", encoding="utf-8") as fh:
        fh.write("# initial,final (empty initial for zero-initial syllables)\n")
        for ini, fin in sorted(inventory):
            fh.write("%s,%s\n" % (ini, fin))


if __name__ == "__main__":
    main()
