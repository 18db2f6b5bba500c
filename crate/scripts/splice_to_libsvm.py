#!/usr/bin/env python3
"""Convert the UCI splice-junction data to a binary libsvm file.

Input: the raw comma-separated file (60 nucleotides + class in {EI, IE, N}),
either UCI `splice.data` (class first) or the KEEL `splice.dat` (class last).
Rows containing ambiguity codes (D, N, S, R) inside the sequence are dropped,
which leaves the 3175 rows of the usual benchmark version.

Labels: +1 for a junction (EI or IE), -1 for neither (N).
Features: one-hot encoding of each position over A, C, G, T (240 features).
"""
import sys

ALPHABET = "ACGT"
CLASSES = {"EI", "IE", "N"}


def parse(line):
    parts = [p.strip() for p in line.split(",") if p.strip()]
    if not parts:
        return None
    if parts[0] in CLASSES and len(parts) == 3:
        # UCI layout: class, donor name, sequence string
        return parts[0], list(parts[2])
    if parts[-1] in CLASSES and len(parts) == 61:
        return parts[-1], parts[:-1]
    raise ValueError(f"unrecognised row: {line[:40]}...")


def main(src, dst):
    kept = dropped = 0
    with open(src) as fin, open(dst, "w") as fout:
        for line in fin:
            row = parse(line)
            if row is None:
                continue
            cls, seq = row
            if len(seq) != 60 or any(c not in ALPHABET for c in seq):
                dropped += 1
                continue
            label = "-1" if cls == "N" else "+1"
            feats = [
                f"{4 * pos + ALPHABET.index(c) + 1}:1" for pos, c in enumerate(seq)
            ]
            fout.write(label + " " + " ".join(feats) + "\n")
            kept += 1
    print(f"kept {kept} rows, dropped {dropped} ambiguous rows", file=sys.stderr)


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
