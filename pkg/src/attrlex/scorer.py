"""Lexicon-only document classification.

A document's score for label ``l`` is a weighted sum over its token
occurrences of the token's representative attribution under ``l``; the
predicted label is the argmax, with exact ties going to the higher-risk
label. Weights are 1, or the token's TF-IDF weight in the document.
"""

from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .corpus import RiskLabel
from .lexicon import MODES, Lexicon, representative_table, representative_value

SCHEMES = ("four-class", "no-vs-any", "nolow-vs-medhigh")


@dataclass
class TfidfModel:
    n_docs: int
    df: dict[int, int] = field(default_factory=dict)

    def idf(self, token) -> float:
        return math.log((1 + self.n_docs) / (1 + self.df.get(token, 0))) + 1.0

    def to_json(self) -> dict:
        return {"n_docs": self.n_docs, "df": [[t, self.df[t]] for t in sorted(self.df)]}

    @classmethod
    def from_json(cls, payload: dict) -> "TfidfModel":
        return cls(payload["n_docs"], {t: c for t, c in payload["df"]})


@dataclass(frozen=True)
class ScoringConfig:
    mode: str = "mean"
    tfidf: bool = False
    grouping: str = "four-class"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.grouping not in SCHEMES:
            raise ValueError(f"grouping must be one of {SCHEMES}")


def fit_tfidf(documents: Iterable[Sequence]) -> TfidfModel:
    df: Counter = Counter()
    n = 0
    for doc in documents:
        n += 1
        df.update(set(doc))
    if n == 0:
        raise ValueError("cannot fit TF-IDF on an empty corpus")
    return TfidfModel(n, dict(df))


def tfidf_weight(model: TfidfModel, token, doc: Sequence) -> float:
    """``count(token, doc) / len(doc) * (ln((1 + N) / (1 + df)) + 1)``."""
    if len(doc) == 0:
        raise ValueError("document is empty")
    count = sum(1 for t in doc if t == token)
    if count == 0:
        return 0.0
    return count / len(doc) * model.idf(token)


def score_document(lex: Lexicon, tfidf: TfidfModel | None, doc: Sequence[int], config: ScoringConfig = ScoringConfig()) -> np.ndarray:
    """Per-label scores; every occurrence contributes its weight times R."""
    if len(doc) == 0:
        raise ValueError("document is empty")
    counts = Counter(doc)
    scores = np.zeros(lex.n_labels)
    for t, c in counts.items():
        w = 1.0 if not (config.tfidf and tfidf is not None) else c / len(doc) * tfidf.idf(t)
        rep = [representative_value(lex, t, l, config.mode) for l in range(lex.n_labels)]
        scores += c * w * np.asarray(rep)
    return scores


class LexiconScorer:
    """Vectorized :func:`score_document` over a fixed lexicon and id range."""

    def __init__(self, lex: Lexicon, n_ids: int, mode: str = "mean", tfidf: TfidfModel | None = None):
        self.lex = lex
        self.mode = mode
        self.table = representative_table(lex, n_ids, mode)
        self.tfidf = tfidf
        if tfidf is not None:
            self.idf = np.array([tfidf.idf(t) for t in range(n_ids)])

    def score(self, doc: Sequence[int], use_tfidf: bool = False) -> np.ndarray:
        if len(doc) == 0:
            raise ValueError("document is empty")
        ids, counts = np.unique(np.asarray(doc, dtype=np.int64), return_counts=True)
        w = counts.astype(np.float64)
        if use_tfidf:
            if self.tfidf is None:
                raise ValueError("scorer was built without a TF-IDF model")
            w = w * (counts / len(doc)) * self.idf[ids]
        return w @ self.table[ids]


def classify(scores: Sequence[float]) -> int:
    """Argmax; exact ties go to the larger (higher-risk) label index."""
    s = np.asarray(scores, dtype=np.float64)
    if s.size < 2:
        raise ValueError("need at least two label scores")
    if not np.all(np.isfinite(s)):
        raise ValueError("non-finite score")
    return int(s.size - 1 - np.argmax(s[::-1]))


def group_label(label: RiskLabel | int | None, scheme: str) -> int:
    """Collapse a risk label into the scheme's classes (NONE counts as no risk)."""
    if isinstance(label, RiskLabel):
        label = None if label is RiskLabel.NONE else label.numeric()
    if scheme == "four-class":
        if label is None:
            raise ValueError("control label NONE has no four-class value")
        return int(label)
    if scheme == "no-vs-any":
        return 0 if label is None or label == 0 else 1
    if scheme == "nolow-vs-medhigh":
        return 0 if label is None or label <= 1 else 1
    raise ValueError(f"unknown grouping scheme {scheme!r}")


def n_groups(scheme: str, n_labels: int = 4) -> int:
    return n_labels if scheme == "four-class" else 2


PREDICTION_FIELDS = ["doc_id", "true_label", "predicted_label", "grouped_true", "grouped_pred"]


def write_predictions(path, rows: Iterable[tuple[str, int | None, int, np.ndarray]], scheme: str, n_labels: int) -> None:
    """Predictions CSV; `rows` are (doc_id, true label or None, predicted, scores)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(PREDICTION_FIELDS + [f"score_{l}" for l in range(n_labels)])
        for doc_id, truth, pred, scores in rows:
            if scheme == "four-class" and truth is None:
                continue
            writer.writerow(
                [doc_id, "None" if truth is None else truth, pred, group_label(truth, scheme), group_label(pred, scheme)]
                + [repr(float(s)) for s in scores]
            )
