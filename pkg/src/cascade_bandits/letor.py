"""SVMLight ranking-file ingestion (Web30K / Istella style).

Lines look like ``<rel> qid:<id> <idx>:<val> ... # comment`` with 1-based,
possibly sparse feature indices. Queries are converted into contextual
bandit instances after min-max normalization, a degenerate-feature filter,
and per-document norm capping.
"""

from __future__ import annotations

import gzip
import json
import warnings
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .envgen import BanditInstance, PriorSpec

__all__ = [
    "LetorQuery",
    "NormalizationStats",
    "parse_svmlight",
    "iter_svmlight",
    "write_svmlight",
    "normalize_and_filter",
    "query_to_instance",
]

STD_FLOOR = 1e-6


@dataclass
class LetorQuery:
    query_id: int
    relevances: np.ndarray  # (n_docs,), integer grades
    features: np.ndarray  # (n_docs, n_features)

    def __len__(self) -> int:
        return len(self.relevances)


@dataclass
class NormalizationStats:
    """Split-level feature statistics plus the surviving column indices."""

    mins: np.ndarray
    maxs: np.ndarray
    means: np.ndarray
    stds: np.ndarray
    kept_features: np.ndarray

    def to_dict(self) -> dict:
        return {
            "version": 1,
            "mins": self.mins.tolist(),
            "maxs": self.maxs.tolist(),
            "means": self.means.tolist(),
            "stds": self.stds.tolist(),
            "kept_features": self.kept_features.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "NormalizationStats":
        return cls(
            np.asarray(doc["mins"], dtype=float),
            np.asarray(doc["maxs"], dtype=float),
            np.asarray(doc["means"], dtype=float),
            np.asarray(doc["stds"], dtype=float),
            np.asarray(doc["kept_features"], dtype=int),
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "NormalizationStats":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _open_text(path):
    path = str(path)
    if path.endswith(".gz"):
        return gzip.open(path, "rt")
    return open(path, "r")


def _parse_line(line: str, lineno: int):
    body = line.split("#", 1)[0].strip()
    if not body:
        return None
    tokens = body.split()
    try:
        rel = int(tokens[0])
        if not tokens[1].startswith("qid:"):
            raise ValueError("second token must be qid:<id>")
        qid = int(tokens[1][4:])
        pairs = []
        for tok in tokens[2:]:
            idx_s, val_s = tok.split(":", 1)
            idx = int(idx_s)
            if idx < 1:
                raise ValueError(f"feature index {idx} must be >= 1")
            pairs.append((idx, float(val_s)))
    except (ValueError, IndexError) as exc:
        raise ValueError(f"malformed SVMLight line {lineno}: {line.rstrip()!r} ({exc})") from None
    return rel, qid, pairs


def iter_svmlight(path, strict: bool = False) -> Iterator[tuple[int, list]]:
    """Yield contiguous (query_id, rows) runs, holding one query in memory.

    Each row is (relevance, [(index, value), ...]). A qid that reappears
    after other queries starts a new run (callers may merge) unless
    ``strict`` is set, in which case it is an error.
    """
    seen: set[int] = set()
    current: int | None = None
    rows: list = []
    with _open_text(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            parsed = _parse_line(line, lineno)
            if parsed is None:
                continue
            rel, qid, pairs = parsed
            if qid != current:
                if rows:
                    yield current, rows
                if strict and qid in seen:
                    raise ValueError(
                        f"line {lineno}: query {qid} reappears non-contiguously (strict mode)"
                    )
                seen.add(qid)
                current, rows = qid, []
            rows.append((rel, pairs))
    if rows:
        yield current, rows


def parse_svmlight(path, strict: bool = False) -> list[LetorQuery]:
    """Parse a ranking file into dense queries, grouped by qid.

    Sparse indices default to 0; every query is widened to the largest
    feature index seen anywhere in the file. Non-contiguous runs of the
    same qid are merged in order of first appearance.
    """
    merged: dict[int, list] = {}
    order: list[int] = []
    for qid, rows in iter_svmlight(path, strict=strict):
        if qid not in merged:
            merged[qid] = []
            order.append(qid)
        merged[qid].extend(rows)
    raw = [(qid, merged[qid]) for qid in order]
    n_features = 0
    for _, rows in raw:
        for _, pairs in rows:
            if pairs:
                n_features = max(n_features, max(idx for idx, _ in pairs))
    queries = []
    for qid, rows in raw:
        rels = np.array([rel for rel, _ in rows], dtype=int)
        X = np.zeros((len(rows), n_features))
        for r, (_, pairs) in enumerate(rows):
            for idx, val in pairs:
                X[r, idx - 1] = val
        queries.append(LetorQuery(qid, rels, X))
    return queries


def write_svmlight(queries: Iterable[LetorQuery], path, sparse: bool = True) -> None:
    """Inverse of parse_svmlight; zero values are omitted when ``sparse``."""
    opener = gzip.open(str(path), "wt") if str(path).endswith(".gz") else open(path, "w")
    with opener as fh:
        for q in queries:
            for rel, row in zip(q.relevances, q.features):
                parts = [str(int(rel)), f"qid:{q.query_id}"]
                for j, val in enumerate(row):
                    if sparse and val == 0.0:
                        continue
                    parts.append(f"{j + 1}:{val:.6g}")
                fh.write(" ".join(parts) + "\n")


def _compute_stats(queries: list[LetorQuery]) -> NormalizationStats:
    X = np.concatenate([q.features for q in queries], axis=0)
    mins, maxs = X.min(axis=0), X.max(axis=0)
    means, stds = X.mean(axis=0), X.std(axis=0)
    span = maxs - mins
    normalized_std = np.where(span > 0, stds / np.where(span > 0, span, 1.0), 0.0)
    kept = np.flatnonzero(normalized_std >= STD_FLOOR)
    return NormalizationStats(mins, maxs, means, stds, kept)


def normalize_and_filter(
    queries: list[LetorQuery], stats: NormalizationStats | None = None
) -> tuple[list[LetorQuery], NormalizationStats]:
    """Min-max normalize, drop degenerate features, cap document norms at 1.

    Statistics are computed over the full input unless ``stats`` is given
    (e.g. train-split statistics reused on a test split), in which case the
    given stats are applied verbatim and returned unchanged. Features whose
    post-normalization standard deviation falls below 1e-6 are dropped;
    each surviving document vector is divided by max(1, ||x||).
    """
    if not queries:
        raise ValueError("no queries to normalize")
    if stats is None:
        stats = _compute_stats(queries)
    if stats.kept_features.size == 0:
        raise ValueError("every feature is degenerate after normalization")
    span = stats.maxs - stats.mins
    safe_span = np.where(span > 0, span, 1.0)
    out = []
    for q in queries:
        Z = (q.features - stats.mins) / safe_span
        Z = Z[:, stats.kept_features]
        norms = np.linalg.norm(Z, axis=1)
        # the tiny margin absorbs float error so capped norms never exceed 1
        scale = np.where(norms > 1.0, norms * (1.0 + 1e-14), 1.0)
        Z = Z / scale[:, None]
        out.append(LetorQuery(q.query_id, q.relevances.copy(), Z))
    return out, stats


def query_to_instance(
    q: LetorQuery, K: int, gamma: float = 0.8
) -> BanditInstance | None:
    """Map a normalized query to a logistic-kind instance.

    Attraction probability is gamma * relevance / 4, so a perfect document
    attracts with probability gamma. Matched Beta priors use the clamped
    probability to stay proper. Queries with fewer than K documents are
    skipped with a warning.
    """
    if not 0.0 < gamma <= 1.0:
        raise ValueError("gamma must lie in (0, 1]")
    n_docs = len(q)
    if n_docs < K:
        warnings.warn(f"query {q.query_id} has {n_docs} < K={K} documents; skipping")
        return None
    means = gamma * q.relevances.astype(float) / 4.0
    clamped = np.clip(means, 0.01, 0.99)
    prior = PriorSpec(10.0 * clamped / (1.0 - clamped), 10.0)
    return BanditInstance(
        "logistic",
        L=n_docs,
        K=K,
        d=q.features.shape[1],
        means=means,
        features=q.features,
        prior=prior,
    )
