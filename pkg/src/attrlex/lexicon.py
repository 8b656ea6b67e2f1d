"""Per-token, per-label attribution statistics.

A lexicon maps each token id to ``n_labels`` sorted lists of attribution
scores. Which label a score is filed under is the *grouping key*: the
document's ground-truth label (default), its predicted label, or the
attribution target. Sums are recomputed with ``math.fsum`` over the sorted
samples, so they do not depend on insertion order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

GROUPINGS = ("ground-truth", "predicted", "target")
MODES = ("mean", "median")
LEXICON_FORMAT = "attrlex-lexicon"
LEXICON_VERSION = 1


class LexiconError(ValueError):
    pass


@dataclass(frozen=True)
class TokenStats:
    samples: tuple[np.ndarray, ...]

    @property
    def n_labels(self) -> int:
        return len(self.samples)

    def count(self, label: int) -> int:
        return int(self.samples[label].size)

    def total(self, label: int) -> float:
        return math.fsum(self.samples[label])

    def mean(self, label: int) -> float:
        n = self.count(label)
        return self.total(label) / n if n else 0.0

    def median(self, label: int) -> float:
        s = self.samples[label]
        n = s.size
        if n == 0:
            return 0.0
        mid = n // 2
        if n % 2:
            return float(s[mid])
        return float((s[mid - 1] + s[mid]) / 2.0)

    @property
    def total_count(self) -> int:
        return sum(s.size for s in self.samples)


@dataclass
class Lexicon:
    n_labels: int
    grouping: str = "ground-truth"
    provenance: dict = field(default_factory=dict)
    stats: dict[int, TokenStats] = field(default_factory=dict)

    def __post_init__(self):
        if self.grouping not in GROUPINGS:
            raise LexiconError(f"grouping must be one of {GROUPINGS}")

    def __contains__(self, token_id: int) -> bool:
        return token_id in self.stats

    def __len__(self) -> int:
        return len(self.stats)

    @property
    def total_count(self) -> int:
        return sum(s.total_count for s in self.stats.values())

    def token_ids(self) -> list[int]:
        return sorted(self.stats)

    # -- serialization ------------------------------------------------------

    def to_jsonl(self) -> str:
        lines = [
            json.dumps(
                {
                    "format": LEXICON_FORMAT,
                    "version": LEXICON_VERSION,
                    "n_labels": self.n_labels,
                    "grouping": self.grouping,
                    "provenance": self.provenance,
                },
                sort_keys=True,
                separators=(",", ":"),
            )
        ]
        for t in self.token_ids():
            st = self.stats[t]
            per_label = [
                {"count": st.count(l), "sum": st.total(l), "samples": st.samples[l].tolist()}
                for l in range(self.n_labels)
            ]
            lines.append(json.dumps({"token_id": t, "labels": per_label}, separators=(",", ":")))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> "Lexicon":
        lines = [l for l in text.splitlines() if l.strip()]
        if not lines:
            raise LexiconError("empty lexicon file")
        head = json.loads(lines[0])
        if head.get("format") != LEXICON_FORMAT or head.get("version") != LEXICON_VERSION:
            raise LexiconError("not a lexicon file (bad header)")
        lex = cls(head["n_labels"], head["grouping"], head["provenance"])
        for n, line in enumerate(lines[1:], 2):
            row = json.loads(line)
            per_label = row["labels"]
            if len(per_label) != lex.n_labels:
                raise LexiconError(f"line {n}: expected {lex.n_labels} label slots")
            samples = []
            for slot in per_label:
                arr = np.asarray(slot["samples"], dtype=np.float64)
                if arr.size != slot["count"]:
                    raise LexiconError(f"line {n}: count disagrees with samples")
                samples.append(arr)
            lex.stats[int(row["token_id"])] = TokenStats(tuple(samples))
        return lex

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_jsonl())

    @classmethod
    def load(cls, path: str | Path) -> "Lexicon":
        return cls.from_jsonl(Path(path).read_text(encoding="utf-8"))


def _key(record, grouping: str) -> int | None:
    if grouping == "ground-truth":
        return record.ground_truth
    if grouping == "predicted":
        return record.predicted
    return record.target


def aggregate_records(
    records: Iterable,
    n_labels: int,
    grouping: str = "ground-truth",
    provenance: dict | None = None,
) -> Lexicon:
    """Collect every record's score under (token_id, grouping-key label)."""
    if grouping not in GROUPINGS:
        raise LexiconError(f"grouping must be one of {GROUPINGS}")
    buckets: dict[int, list[list[float]]] = {}
    for r in records:
        label = _key(r, grouping)
        if label is None:
            raise LexiconError(f"record {r.doc_id}:{r.position} has no {grouping} label")
        if not 0 <= label < n_labels:
            raise LexiconError(f"label {label} out of range for {n_labels} labels")
        slots = buckets.get(r.token_id)
        if slots is None:
            slots = buckets[r.token_id] = [[] for _ in range(n_labels)]
        slots[label].append(r.score)
    stats = {
        t: TokenStats(tuple(np.sort(np.asarray(s, dtype=np.float64)) for s in slots)) for t, slots in buckets.items()
    }
    return Lexicon(n_labels, grouping, dict(provenance or {}), stats)


def merge(a: Lexicon, b: Lexicon) -> Lexicon:
    """Union of two lexicons built from disjoint record streams."""
    if a.n_labels != b.n_labels:
        raise LexiconError(f"label counts differ: {a.n_labels} vs {b.n_labels}")
    if a.grouping != b.grouping:
        raise LexiconError(f"grouping keys differ: {a.grouping} vs {b.grouping}")
    if a.provenance != b.provenance:
        raise LexiconError("lexicons come from different checkpoints or attribution settings")
    stats = dict(a.stats)
    for t, sb in b.stats.items():
        sa = stats.get(t)
        if sa is None:
            stats[t] = sb
        else:
            stats[t] = TokenStats(tuple(np.sort(np.concatenate([x, y])) for x, y in zip(sa.samples, sb.samples)))
    return Lexicon(a.n_labels, a.grouping, dict(a.provenance), stats)


def representative_value(lex: Lexicon, token_id: int, label: int, mode: str = "mean") -> float:
    """Mean or median score of a token under a label; 0 when unseen."""
    st = lex.stats.get(token_id)
    if st is None:
        return 0.0
    if mode == "mean":
        return st.mean(label)
    if mode == "median":
        return st.median(label)
    raise LexiconError(f"mode must be one of {MODES}")


def representative_table(lex: Lexicon, n_ids: int, mode: str = "mean") -> np.ndarray:
    """Dense ``(n_ids, n_labels)`` table of representative values."""
    table = np.zeros((n_ids, lex.n_labels))
    for t in lex.stats:
        if t < n_ids:
            table[t] = [representative_value(lex, t, l, mode) for l in range(lex.n_labels)]
    return table


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    counts: np.ndarray  # (n_labels, bins)


def histogram_export(lex: Lexicon, token_id: int, bins: int = 20) -> Histogram:
    """Per-label counts over equal-width bins shared by all labels.

    The range is [min, max] of the token's samples across labels; the
    maximum falls in the last bin. A single distinct value gets a unit-wide
    range centred on it.
    """
    if bins < 1:
        raise LexiconError("bins must be >= 1")
    st = lex.stats.get(token_id)
    if st is None or st.total_count == 0:
        raise LexiconError(f"token {token_id} is not in the lexicon")
    allv = np.concatenate(st.samples)
    lo, hi = float(allv.min()), float(allv.max())
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    edges = np.linspace(lo, hi, bins + 1)
    counts = np.stack([np.histogram(s, bins=edges)[0] for s in st.samples])
    return Histogram(edges, counts)


def top_tokens(lex: Lexicon, k: int) -> list[int]:
    """Token ids with the largest total |attribution|, ties by id."""
    mass = [(-math.fsum(np.abs(np.concatenate(st.samples))), t) for t, st in lex.stats.items()]
    return [t for _, t in sorted(mass)[:k]]
