#!/usr/bin/env python3
"""Generate the bundled synthetic dataset under data/synthetic."""

import argparse
import json
import math
import random
from pathlib import Path

ONSETS = ["b", "c", "d", "f", "g", "h", "l", "m", "n", "p", "r", "s", "t", "v", "w", "br", "cr", "st", "tr", "pl"]
VOWELS = ["a", "e", "i", "o", "u", "ea", "ou"]
CODAS = ["", "n", "r", "t", "s", "l", "m", "nd", "st"]
HANZI = "山水火木金土日月人口心手足目耳天地风云雨花草鸟鱼马牛羊车门书"
L1S = ["es", "de", "zh"]
CONTEXTS = {
    "es": "Ayer vi {w} en la ciudad.",
    "de": "Gestern habe ich {w} in der Stadt gesehen.",
    "zh": "我昨天在城里看见了{w}。",
}


def pseudo_word(rng, syllables):
    return "".join(rng.choice(ONSETS) + rng.choice(VOWELS) + rng.choice(CODAS) for _ in range(syllables))


def l1_form(rng, en, l1):
    if l1 == "zh":
        return "".join(rng.choice(HANZI) for _ in range(rng.randint(1, 3)))
    if rng.random() < 0.4:  # cognate-like
        suffix = "o" if l1 == "es" else "e"
        return en[:-1] + suffix if len(en) > 3 else en + suffix
    return pseudo_word(rng, rng.randint(1, 3))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="data/synthetic")
    ap.add_argument("--n", type=int, default=200)
    ap.add_argument("--seed", type=int, default=20240501)
    args = ap.parse_args()
    rng = random.Random(args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    words = []
    seen = set()
    while len(words) < args.n:
        w = pseudo_word(rng, rng.randint(1, 3))
        if w not in seen:
            seen.add(w)
            words.append(w)

    bnc, subtlex, cefr = {}, {}, {}
    for rank, w in enumerate(words, start=1):
        if rng.random() < 0.9:
            bnc[w] = int(1_000_000 / rank ** 1.1 * rng.uniform(0.5, 1.5))
        if rng.random() < 0.85:
            subtlex[w] = int(500_000 / rank ** 1.0 * rng.uniform(0.5, 1.5))
        if rng.random() < 0.8:
            cefr[w] = ["A1", "A2", "B1", "B2", "C1", "C2"][min(5, (rank - 1) * 6 // args.n + rng.randint(-1, 1)) if rank > 1 else 0]

    rows = []
    for i, w in enumerate(words):
        l1 = L1S[i % 3]
        l1w = l1_form(rng, w, l1)
        freq = math.log(bnc.get(w, 0) + 1)
        sim = 0.0
        if l1 != "zh":
            common = sum(1 for a, b in zip(w, l1w) if a == b)
            sim = common / max(len(w), len(l1w))
        gold = -3.0 + 0.45 * freq - 0.15 * len(w) + 1.5 * sim + rng.gauss(0, 0.4)
        rows.append({
            "item_id": f"syn{i + 1:03d}",
            "l1": l1,
            "l1_word": l1w,
            "l1_context": CONTEXTS[l1].format(w=l1w),
            "en_word": w,
            "pos": rng.choice(["noun", "verb", "adjective"]),
            "gold_score": f"{gold:.4f}",
        })

    cols = ["item_id", "l1", "l1_word", "l1_context", "en_word", "pos", "gold_score"]
    with open(out / "items.tsv", "w", encoding="utf-8", newline="\n") as f:
        f.write("\t".join(cols) + "\n")
        for r in rows:
            f.write("\t".join(r[c] for c in cols) + "\n")
    for name, table in [("bnc", bnc), ("subtlex", subtlex)]:
        with open(out / f"freq_{name}.tsv", "w", encoding="utf-8", newline="\n") as f:
            f.write("word\tcount\n")
            for w in sorted(table):
                f.write(f"{w}\t{table[w]}\n")
    with open(out / "cefr.tsv", "w", encoding="utf-8", newline="\n") as f:
        f.write("word\tlevel\n")
        for w in sorted(cefr):
            f.write(f"{w}\t{cefr[w]}\n")
    schema = {
        "multiword_lookup": "exact",
        "features": [
            {"name": "len", "source": "word_length", "required": True},
            {"name": "l1_sim", "source": "l1_similarity"},
            {"name": "freq_bnc", "source": "log_freq:bnc", "group": "frequency"},
            {"name": "freq_subtlex", "source": "log_freq:subtlex", "group": "frequency"},
            {"name": "cefr", "source": "cefr:evp"},
        ],
    }
    (out / "schema.json").write_text(json.dumps(schema, indent=2) + "\n", encoding="utf-8")


if __name__ == "__main__":
    main()
