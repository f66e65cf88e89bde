#!/usr/bin/env python3
"""Regenerate the bundled lexical data files under data/.

  wordlist.txt          word<SPACE>count, used for hashtag segmentation
  lemma_base.txt        base forms the lemmatizer stops at
  lemma_exceptions.tsv  form<TAB>lemma for forms the suffix rules get wrong

Requires the `wordfreq` and `lemminflect` packages. Only needed when the data
files are rebuilt; the C++ library reads the generated files.

The suffix rules below mirror include/dtag/textnorm.hpp (Lemmatizer). If the
two drift apart the exception list grows or shrinks but lemmatization of the
listed forms stays exact, since exceptions are consulted first.
"""

import argparse
import os
import re

import lemminflect
import wordfreq

ALPHA = re.compile(r"^[a-z]+$")
VOWELS = set("aeiouy")
POS_PRIORITY = ("VERB", "NOUN", "ADJ", "ADV", "PROPN", "AUX", "PRON", "ADP", "DET")


def canon(word):
    lemmas = lemminflect.getAllLemmas(word)
    for pos in POS_PRIORITY:
        if pos in lemmas and lemmas[pos]:
            return lemmas[pos][0].lower()
    for values in lemmas.values():
        if values:
            return values[0].lower()
    return word


def target(word):
    seen = set()
    while word not in seen:
        seen.add(word)
        nxt = canon(word)
        if nxt == word:
            break
        word = nxt
    return word


def has_vowel(s):
    return any(c in VOWELS for c in s)


def undouble(stem):
    if len(stem) >= 3 and stem[-1] == stem[-2] and stem[-1] not in VOWELS:
        return stem[:-1]
    return None


def one_rule(w, base):
    """One suffix-stripping step, or None when no rule applies."""

    def pick(cands, default):
        for c in cands:
            if c and c in base:
                return c
        return default

    n = len(w)
    if n >= 5 and w.endswith("ies"):
        return pick([w[:-3] + "y", w[:-1]], w[:-3] + "y")
    if n >= 5 and w.endswith("ied"):
        return pick([w[:-3] + "y", w[:-1]], w[:-3] + "y")
    if n >= 5 and w.endswith("ing") and has_vowel(w[:-3]):
        stem = w[:-3]
        u = undouble(stem)
        return pick([stem, stem + "e", u], u if u else stem)
    if n >= 4 and w.endswith("ed") and not w.endswith("eed") and has_vowel(w[:-2]):
        stem = w[:-2]
        u = undouble(stem)
        return pick([stem, stem + "e", u], u if u else stem)
    if n >= 4 and w.endswith("es"):
        stem = w[:-2]
        sib = stem.endswith(("s", "x", "z", "ch", "sh"))
        return pick([stem, w[:-1]], stem if sib else w[:-1])
    if n >= 3 and w.endswith("s") and not w.endswith(("ss", "us", "is")):
        return w[:-1]
    return None


def rule_lemma(w, base, exceptions=None):
    exceptions = exceptions or {}
    for _ in range(16):
        if w in exceptions:
            w = exceptions[w]
            continue
        if w in base:
            return w
        nxt = one_rule(w, base)
        if nxt is None:
            return w
        w = nxt
    return w


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "..", "data"))
    ap.add_argument("--segment-words", type=int, default=50000)
    ap.add_argument("--lemma-words", type=int, default=30000)
    args = ap.parse_args()

    seg = [w for w in wordfreq.top_n_list("en", args.segment_words * 2) if ALPHA.match(w)]
    seg = seg[: args.segment_words]
    with open(os.path.join(args.out, "wordlist.txt"), "w") as f:
        for w in seg:
            count = max(1, round(wordfreq.word_frequency(w, "en") * 1e9))
            f.write(f"{w} {count}\n")

    words = seg[: args.lemma_words]
    targets = {w: target(w) for w in words}
    base = {t for t in targets.values() if ALPHA.match(t)}
    base = {b for b in base if target(b) == b}
    with open(os.path.join(args.out, "lemma_base.txt"), "w") as f:
        for b in sorted(base):
            f.write(b + "\n")

    # Exceptions are consulted at every step of the rule chain, so adding one
    # can change the outcome for other forms. Iterate to a fixed point.
    exceptions = {}
    while True:
        added = 0
        for w, t in targets.items():
            if w in base or w in exceptions or not ALPHA.match(t) or t not in base:
                continue
            if rule_lemma(w, base, exceptions) != t:
                exceptions[w] = t
                added += 1
        if added == 0:
            break
    with open(os.path.join(args.out, "lemma_exceptions.tsv"), "w") as f:
        for w in sorted(exceptions):
            f.write(f"{w}\t{exceptions[w]}\n")
    print(f"wordlist={len(seg)} base={len(base)} exceptions={len(exceptions)}")


if __name__ == "__main__":
    main()
