#!/usr/bin/env python3
"""Labels every token of the fixture snippets with Python's tokenize module.

Output: labels.tsv with columns file, byte_offset, is_line_first, is_block_initial.
A token is block-initial when the tokenizer emitted INDENT right before it.
"""
import argparse
import io
import os
import tokenize

SKIP = {tokenize.NEWLINE, tokenize.NL, tokenize.INDENT, tokenize.DEDENT,
        tokenize.ENDMARKER, tokenize.ENCODING}


def label_file(path):
    with open(path, "rb") as f:
        data = f.read()
    line_starts = [0]
    for i, b in enumerate(data):
        if b == 0x0A:
            line_starts.append(i + 1)
    text = data.decode("utf-8")
    lines = text.splitlines(keepends=True)

    rows = []
    after_indent = False
    last_row = 0
    for tok in tokenize.generate_tokens(io.StringIO(text).readline):
        if tok.type == tokenize.INDENT:
            after_indent = True
            continue
        if tok.type in SKIP:
            continue
        row, col = tok.start
        byte_col = len(lines[row - 1][:col].encode("utf-8"))
        offset = line_starts[row - 1] + byte_col
        line_first = row > last_row
        rows.append((offset, int(line_first), int(after_indent and line_first)))
        after_indent = False
        last_row = tok.end[0]
    return rows


def main():
    here = os.path.dirname(os.path.abspath(__file__))
    ap = argparse.ArgumentParser()
    ap.add_argument("--dir", default=os.path.join(here, "..", "data", "structure"))
    args = ap.parse_args()

    out = ["file\tbyte_offset\tis_line_first\tis_block_initial"]
    for name in sorted(os.listdir(args.dir)):
        if not name.endswith(".py"):
            continue
        for offset, first, block in label_file(os.path.join(args.dir, name)):
            out.append(f"{name}\t{offset}\t{first}\t{block}")
    with open(os.path.join(args.dir, "labels.tsv"), "w") as f:
        f.write("\n".join(out) + "\n")


if __name__ == "__main__":
    main()
