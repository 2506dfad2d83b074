#!/usr/bin/env python3
"""Writes the synthetic benchmark: tasks.jsonl and the n-gram training corpus.

Every task has a correct body and a distractor body that differ only at the first
character of some block. The corpus repeats the two bodies with a per-task ratio.
"""
import argparse
import json
import os

EOS = "<|endoftext|>"

# (correct copies, distractor copies), cycled over tasks.
RATIOS = [(1, 2), (1, 3), (1, 1), (2, 1)]


def guard(p):
    v, k = p["v"], p["k"]
    prompt = f'def {p["name"]}({v}):\n    """{p["doc"]}"""\n'
    correct = f"    if {v} < 0:\n        return 0\n    return {v} * {k}\n"
    distractor = f"    return {v} * {k}\n"
    test = (f"def check(candidate):\n    assert candidate(3) == {3 * k}\n"
            f"    assert candidate(-2) == 0\n    assert candidate(0) == 0\n")
    return prompt, correct, distractor, test


def filter_sum(p):
    xs, it, acc, m = p["xs"], p["it"], p["acc"], p["m"]
    prompt = f'def {p["name"]}({xs}):\n    """{p["doc"]}"""\n'
    head = f"    {acc} = 0\n    for {it} in {xs}:\n"
    correct = head + f"        if {it} % {m} == 0:\n            {acc} += {it}\n    return {acc}\n"
    distractor = head + f"        {acc} += {it}\n    return {acc}\n"
    data = list(range(1, 13))
    test = (f"def check(candidate):\n    assert candidate({data}) == {sum(x for x in data if x % m == 0)}\n"
            f"    assert candidate([]) == 0\n")
    return prompt, correct, distractor, test


def find_index(p):
    xs, it, idx, t = p["xs"], p["it"], p["idx"], p["t"]
    prompt = f'def {p["name"]}({xs}, {t}):\n    """{p["doc"]}"""\n'
    head = f"    for {idx}, {it} in enumerate({xs}):\n        if {it} == {t}:\n"
    correct = head + f"            return {idx}\n    return -1\n"
    distractor = head + f"            break\n    return -1\n"
    test = ("def check(candidate):\n    assert candidate([4, 8, 15], 8) == 1\n"
            "    assert candidate([4, 8, 15], 16) == -1\n")
    return prompt, correct, distractor, test


def largest(p):
    xs, it, best = p["xs"], p["it"], p["best"]
    prompt = f'def {p["name"]}({xs}):\n    """{p["doc"]}"""\n'
    tail = (f"    {best} = {xs}[0]\n    for {it} in {xs}:\n        if {it} > {best}:\n"
            f"            {best} = {it}\n    return {best}\n")
    correct = f"    if not {xs}:\n        return None\n" + tail
    distractor = tail
    test = ("def check(candidate):\n    assert candidate([3, 9, 2]) == 9\n"
            "    assert candidate([]) is None\n")
    return prompt, correct, distractor, test


def letters(p):
    s, ch, out = p["s"], p["ch"], p["out"]
    prompt = f'def {p["name"]}({s}):\n    """{p["doc"]}"""\n'
    head = f"    {out} = []\n    for {ch} in {s}:\n"
    correct = head + f"        if {ch}.isalpha():\n            {out}.append({ch})\n    return ''.join({out})\n"
    distractor = head + f"        {out}.append({ch})\n    return ''.join({out})\n"
    test = ("def check(candidate):\n    assert candidate('a1b2-c') == 'abc'\n"
            "    assert candidate('') == ''\n")
    return prompt, correct, distractor, test


FAMILIES = [
    (guard, [
        dict(name="scale_apples", v="apples", k=3, doc="Triple the apple count; negative counts become zero."),
        dict(name="scale_boxes", v="boxes", k=5, doc="Boxes times five, clamped below at zero."),
        dict(name="scale_coins", v="coins", k=7, doc="Seven times the coins unless coins are negative."),
        dict(name="scale_drops", v="drops", k=2, doc="Double the drops, never returning a negative value."),
    ]),
    (filter_sum, [
        dict(name="sum_even_weights", xs="weights", it="w", acc="wsum", m=2, doc="Sum of the even weights."),
        dict(name="sum_third_lengths", xs="lengths", it="ln", acc="lsum", m=3, doc="Sum of lengths divisible by three."),
        dict(name="sum_quarter_sizes", xs="sizes", it="sz", acc="ssum", m=4, doc="Add up the sizes that are multiples of four."),
        dict(name="sum_fifth_ticks", xs="ticks", it="tk", acc="tsum", m=5, doc="Total of ticks that five divides."),
    ]),
    (find_index, [
        dict(name="locate_page", xs="pages", it="pg", idx="pos", t="wanted", doc="Index of the wanted page or -1."),
        dict(name="locate_seat", xs="seats", it="st", idx="where", t="goal", doc="Where the goal seat sits, else -1."),
        dict(name="locate_tile", xs="tiles", it="tl", idx="spot", t="needle", doc="Position of needle among tiles; -1 when absent."),
        dict(name="locate_card", xs="cards", it="cd", idx="at", t="probe", doc="First index holding probe, -1 if missing."),
    ]),
    (largest, [
        dict(name="peak_height", xs="heights", it="hh", best="top", doc="Tallest height, or None for no heights."),
        dict(name="peak_score", xs="scores", it="sc", best="high", doc="Highest score; None when scores is empty."),
        dict(name="peak_load", xs="loads", it="ld", best="most", doc="Maximum load or None if loads are absent."),
        dict(name="peak_speed", xs="speeds", it="sp", best="fast", doc="Fastest speed, None for an empty list."),
    ]),
    (letters, [
        dict(name="keep_letters", s="text", ch="c", out="kept", doc="Only the alphabetic characters of text."),
        dict(name="strip_symbols", s="word", ch="w", out="clean", doc="Drop everything from word that is not a letter."),
        dict(name="alpha_only", s="line", ch="q", out="parts", doc="Letters of line in their original order."),
        dict(name="pure_letters", s="phrase", ch="z", out="bag", doc="Filter phrase down to its letters."),
    ]),
]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out-dir", default=os.path.join(os.path.dirname(__file__), "..", "data", "benchmark"))
    args = ap.parse_args()
    os.makedirs(args.out_dir, exist_ok=True)

    tasks, corpus = [], []
    serial = 0
    for family, params in FAMILIES:
        for p in params:
            prompt, correct, distractor, test = family(p)
            good, bad = RATIOS[serial % len(RATIOS)]
            task_id = f"Synth/{serial:02d}"
            tasks.append({
                "task_id": task_id,
                "prompt": prompt,
                "entry_point": p["name"],
                "test": test,
                "canonical_solution": correct,
                "distractor": distractor,
            })
            corpus += [prompt + correct] * good + [prompt + distractor] * bad
            serial += 1

    with open(os.path.join(args.out_dir, "tasks.jsonl"), "w") as f:
        for t in tasks:
            f.write(json.dumps(t, sort_keys=True) + "\n")
    with open(os.path.join(args.out_dir, "corpus.txt"), "w") as f:
        for doc in corpus:
            f.write(doc + EOS + "\n")


if __name__ == "__main__":
    main()
