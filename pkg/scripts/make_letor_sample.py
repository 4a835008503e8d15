"""Regenerate the packaged Web30K-format sample (200 synthetic queries).

The sample exercises the full ingestion path: 136 features per document,
sparse zero omission, trailing comments, constant columns that the
degenerate-feature filter must drop, and a handful of informative columns
correlated with the relevance grade so contextual policies have signal.

Usage: python scripts/make_letor_sample.py [output.txt.gz]
"""

from __future__ import annotations

import gzip
import sys
from pathlib import Path

import numpy as np

N_QUERIES = 200
N_FEATURES = 136
# exactly constant columns (1-based): one all-zero, two nonzero, plus the
# last index so every row pins the dense width at 136
CONSTANT_ZERO = {6}
CONSTANT_VALUES = {7: 5.0, 100: 3.25, 136: 2.5}
RELEVANCE_WEIGHTS = [0.44, 0.25, 0.16, 0.10, 0.05]


def make_doc_features(rel: int, rng: np.random.Generator) -> np.ndarray:
    x = np.zeros(N_FEATURES)
    r = rel / 4.0
    x[0] = np.clip(r + rng.normal(0, 0.05), 0.0, 1.0)  # strongly informative
    x[1] = np.clip(float(rel >= 2) + rng.normal(0, 0.1), 0.0, 1.0)
    x[2] = r * rng.uniform(0.5, 1.0)
    x[3] = 0.3 * r + 0.7 * rng.random()
    x[4] = 0.3 * r + 0.7 * rng.random()
    for idx in CONSTANT_ZERO:
        x[idx - 1] = 0.0
    for idx, val in CONSTANT_VALUES.items():
        x[idx - 1] = val
    x[9] = rng.uniform(0.0, 1000.0)  # large-scale column for min-max
    x[10] = rng.exponential(2.0)
    noise_cols = [
        j
        for j in range(11, N_FEATURES)
        if (j + 1) not in CONSTANT_ZERO and (j + 1) not in CONSTANT_VALUES
    ]
    values = rng.random(len(noise_cols)) * rng.uniform(0.5, 3.0)
    values[rng.random(len(noise_cols)) < 0.55] = 0.0  # sparse zeros
    x[noise_cols] = values
    return x


def main(out_path: str) -> None:
    rng = np.random.default_rng(20240817)
    lines = []
    for qid in range(1, N_QUERIES + 1):
        n_docs = int(rng.integers(12, 36))
        rels = rng.choice(5, size=n_docs, p=RELEVANCE_WEIGHTS)
        for doc, rel in enumerate(rels):
            x = make_doc_features(int(rel), rng)
            parts = [str(int(rel)), f"qid:{qid}"]
            parts.extend(
                f"{j + 1}:{val:.5g}" for j, val in enumerate(x) if val != 0.0
            )
            line = " ".join(parts)
            if doc % 7 == 0:
                line += f" # docid={qid}-{doc}"
            lines.append(line)
    with gzip.open(out_path, "wt") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"wrote {out_path}: {N_QUERIES} queries, {len(lines)} documents")


if __name__ == "__main__":
    default = Path(__file__).resolve().parents[1] / "src/cascade_bandits/data/web30k_sample.txt.gz"
    main(sys.argv[1] if len(sys.argv) > 1 else str(default))
