"""Independent oracle for the lexical metric golden file.

BLEU-2 from clipped n-gram counts with brevity penalty; METEOR from an
exhaustive search for the alignment with the most exact matches, then the
most stem matches, then the fewest chunks.

    python3 metric_oracle.py > metric_golden.jsonl
"""
import itertools
import json
import math
import random
import re
from collections import Counter

SUFFIXES = ["ing", "edly", "ed", "ly", "es", "s"]


def stem(w):
    for s in SUFFIXES:
        if w.endswith(s) and len(w) - len(s) >= 3:
            return w[: -len(s)]
    return w


def tokenize(text):
    return [t for t in re.split(r"[^0-9a-z]+", text.lower()) if t]


def bleu2(c, r):
    if not c or not r:
        return 0.0
    max_n = 2 if len(c) >= 2 else 1
    logs = 0.0
    for n in range(1, max_n + 1):
        cc = Counter(tuple(c[i : i + n]) for i in range(len(c) - n + 1))
        rc = Counter(tuple(r[i : i + n]) for i in range(len(r) - n + 1))
        m = sum(min(v, rc[g]) for g, v in cc.items())
        if m == 0:
            return 0.0
        logs += math.log(m / (len(c) - n + 1))
    bp = 1.0 if len(c) > len(r) else math.exp(1 - len(r) / len(c))
    return min(1.0, bp * math.exp(logs / max_n))


def chunks(pairs):
    pairs = sorted(pairs)
    if not pairs:
        return 0
    return 1 + sum(
        1 for a, b in zip(pairs, pairs[1:]) if not (b[0] == a[0] + 1 and b[1] == a[1] + 1)
    )


def matchings(c, r, key, used_c, used_r):
    """All maximum-cardinality one-to-one matchings under `key` equality."""
    best, out = -1, []

    def rec(i, cur, ur):
        nonlocal best, out
        if i == len(c):
            if len(cur) > best:
                best, out = len(cur), [list(cur)]
            elif len(cur) == best:
                out.append(list(cur))
            return
        if i in used_c:
            rec(i + 1, cur, ur)
            return
        for j in range(len(r)):
            if j not in ur and key(c[i]) == key(r[j]):
                cur.append((i, j))
                rec(i + 1, cur, ur | {j})
                cur.pop()
        rec(i + 1, cur, ur)

    rec(0, [], frozenset(used_r))
    return best, out


def meteor(c, r):
    if not c or not r:
        return 0.0
    _, exact = matchings(c, r, lambda t: t, set(), set())
    best = None
    for e in exact:
        _, stems = matchings(c, r, stem, {p[0] for p in e}, {p[1] for p in e})
        for s in stems:
            pairs = e + s
            cand = (len(pairs), -chunks(pairs))
            if best is None or cand > best:
                best = cand
    m, ch = best[0], -best[1]
    if m == 0:
        return 0.0
    p, rr = m / len(c), m / len(r)
    f = 10 * p * rr / (rr + 9 * p)
    return max(0.0, min(1.0, f * (1 - 0.5 * (ch / m) ** 3)))


VOCAB = (
    "the a dorm manager was scared by spider quilt praised then later student walks walked "
    "walking cat sat on mat hall light runs running ran quickly slowly brother sister "
    "letter opened opens door night morning rain falls"
).split()


def pairs(rng):
    fixed = [
        ("the cat sat", "the cat sat on the mat"),
        ("a b c", "a b c"),
        ("c b a", "a b c"),
        ("the manager was scared by a spider", "the dorm manager was scared by the spider"),
        ("walking walks", "walked walking"),
    ]
    yield from fixed
    while True:
        ref = [rng.choice(VOCAB) for _ in range(rng.randint(1, 9))]
        cand = list(ref)
        for _ in range(rng.randint(0, 4)):
            op = rng.random()
            if op < 0.3 and cand:
                cand.pop(rng.randrange(len(cand)))
            elif op < 0.6:
                cand.insert(rng.randint(0, len(cand)), rng.choice(VOCAB))
            elif op < 0.8 and len(cand) > 1:
                i, j = rng.sample(range(len(cand)), 2)
                cand[i], cand[j] = cand[j], cand[i]
            elif cand:
                i = rng.randrange(len(cand))
                cand[i] = cand[i] + rng.choice(["s", "ing", "ed"])
        if cand:
            yield " ".join(cand), " ".join(ref)


def main():
    rng = random.Random(20240611)
    for cand, ref in itertools.islice(pairs(rng), 50):
        c, r = tokenize(cand), tokenize(ref)
        print(json.dumps({
            "candidate": cand,
            "reference": ref,
            "bleu2": round(bleu2(c, r), 10),
            "meteor": round(meteor(c, r), 10),
        }))


if __name__ == "__main__":
    main()
