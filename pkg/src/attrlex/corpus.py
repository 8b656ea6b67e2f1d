"""Ingestion of UMD-shaped CSV files and synthetic corpus generation.

Two CSV files describe a corpus: a posts table
(``user_id,post_id,timestamp,subreddit,text``) and a labels table
(``user_id,label``) with labels ``a``-``d`` or ``None`` for control users.
They are inner-joined on ``user_id`` and turned either into one document per
post or one longitudinal document per user.
"""

from __future__ import annotations

import csv
import enum
import json
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

POSTS_HEADER = ["user_id", "post_id", "timestamp", "subreddit", "text"]
LABELS_HEADER = ["user_id", "label"]
DOCUMENT_FIELDS = ["doc_id", "user_id", "label", "split", "text"]
SPLITS = ("train", "val", "test")
LONGITUDINAL_SEPARATOR = "\n\n"


class DataError(ValueError):
    """Raised for malformed input data (bad CSV rows, unknown labels)."""


class RiskLabel(enum.Enum):
    NONE = "None"
    A = "a"
    B = "b"
    C = "c"
    D = "d"

    def numeric(self) -> int:
        if self is RiskLabel.NONE:
            raise ValueError("control label NONE has no numeric risk value")
        return "abcd".index(self.value)

    @classmethod
    def parse(cls, value: str) -> "RiskLabel":
        try:
            return cls(value.strip())
        except ValueError:
            raise DataError(f"unknown label {value.strip()!r}") from None

    @classmethod
    def from_numeric(cls, value: int) -> "RiskLabel":
        if not 0 <= value <= 3:
            raise ValueError(f"numeric risk label out of range: {value}")
        return cls("abcd"[value])

    def to_json(self) -> int | None:
        return None if self is RiskLabel.NONE else self.numeric()

    @classmethod
    def from_json(cls, value: int | None) -> "RiskLabel":
        return cls.NONE if value is None else cls.from_numeric(value)


@dataclass(frozen=True)
class PostRecord:
    user_id: str
    post_id: str
    timestamp: int
    subreddit: str
    text: str


@dataclass(frozen=True)
class LabeledDocument:
    doc_id: str
    user_id: str
    text: str
    label: RiskLabel
    split: str = "train"

    def to_json(self) -> str:
        row = {
            "doc_id": self.doc_id,
            "user_id": self.user_id,
            "label": self.label.to_json(),
            "split": self.split,
            "text": self.text,
        }
        return json.dumps(row, ensure_ascii=False)

    @classmethod
    def from_json(cls, line: str) -> "LabeledDocument":
        row = json.loads(line)
        return cls(
            doc_id=row["doc_id"],
            user_id=row["user_id"],
            text=row["text"],
            label=RiskLabel.from_json(row["label"]),
            split=row["split"],
        )


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------


def _read_csv(path: Path, header: list[str]) -> Iterable[tuple[int, list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            first = next(reader)
        except StopIteration:
            return
        except csv.Error as exc:
            raise DataError(f"{path}:1: {exc}") from None
        if first != header:
            raise DataError(f"{path}:1: expected header {','.join(header)!r}, got {','.join(first)!r}")
        try:
            for row in reader:
                if not row:
                    continue
                if len(row) != len(header):
                    raise DataError(
                        f"{path}:{reader.line_num}: expected {len(header)} fields, got {len(row)}"
                    )
                yield reader.line_num, row
        except csv.Error as exc:
            raise DataError(f"{path}:{reader.line_num}: {exc}") from None


def read_posts(path: str | Path) -> list[PostRecord]:
    path = Path(path)
    posts = []
    seen: set[str] = set()
    for line, (user_id, post_id, ts, subreddit, text) in _read_csv(path, POSTS_HEADER):
        try:
            timestamp = int(ts)
        except ValueError:
            raise DataError(f"{path}:{line}: timestamp {ts!r} is not an integer") from None
        if timestamp < 0:
            raise DataError(f"{path}:{line}: negative timestamp {timestamp}")
        if post_id in seen:
            raise DataError(f"{path}:{line}: duplicate post_id {post_id!r}")
        seen.add(post_id)
        posts.append(PostRecord(user_id, post_id, timestamp, subreddit, text))
    return posts


def read_labels(path: str | Path) -> dict[str, RiskLabel]:
    path = Path(path)
    labels = {}
    for line, (user_id, label) in _read_csv(path, LABELS_HEADER):
        try:
            labels[user_id] = RiskLabel.parse(label)
        except DataError as exc:
            raise DataError(f"{path}:{line}: {exc}") from None
    return labels


def write_posts(path: str | Path, posts: Iterable[PostRecord]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(POSTS_HEADER)
        for p in posts:
            # the csv module cannot round-trip NUL characters
            if "\x00" in p.text or "\x00" in p.user_id:
                raise DataError(f"post {p.post_id!r}: NUL characters cannot be stored in CSV")
            writer.writerow([p.user_id, p.post_id, p.timestamp, p.subreddit, p.text])


def write_labels(path: str | Path, labels: dict[str, RiskLabel]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(LABELS_HEADER)
        for user_id, label in labels.items():
            writer.writerow([user_id, label.value])


def load_and_join(posts_path: str | Path, labels_path: str | Path) -> list[tuple[PostRecord, RiskLabel]]:
    """Inner-join posts with user labels, keeping the posts file order."""
    labels = read_labels(labels_path)
    return [(p, labels[p.user_id]) for p in read_posts(posts_path) if p.user_id in labels]


# ---------------------------------------------------------------------------
# Dataset construction
# ---------------------------------------------------------------------------


def _long_enough(text: str) -> bool:
    # length counted in unicode code points
    return len(text) > 1


def build_post_dataset(
    joined: Iterable[tuple[PostRecord, RiskLabel]],
    subreddit_filter: str | None = None,
    include_control: bool = False,
    split: str = "train",
) -> list[LabeledDocument]:
    """One document per post.

    Control users (label NONE) are dropped unless `include_control` is set,
    which is only meaningful for the binary groupings.
    """
    docs = []
    for post, label in joined:
        if subreddit_filter is not None and post.subreddit != subreddit_filter:
            continue
        if not _long_enough(post.text):
            continue
        if label is RiskLabel.NONE and not include_control:
            continue
        docs.append(LabeledDocument(post.post_id, post.user_id, post.text, label, split))
    return docs


def build_longitudinal_dataset(
    joined: Iterable[tuple[PostRecord, RiskLabel]],
    separator: str = LONGITUDINAL_SEPARATOR,
    include_control: bool = False,
    split: str = "test",
) -> list[LabeledDocument]:
    """One document per user: all posts sorted by (timestamp, post_id) and joined."""
    by_user: dict[str, list[PostRecord]] = defaultdict(list)
    user_label: dict[str, RiskLabel] = {}
    for post, label in joined:
        user_label[post.user_id] = label
        if _long_enough(post.text):
            by_user[post.user_id].append(post)
    docs = []
    for user_id, label in user_label.items():
        posts = by_user.get(user_id)
        if not posts:
            continue
        if label is RiskLabel.NONE and not include_control:
            continue
        posts = sorted(posts, key=lambda p: (p.timestamp, p.post_id))
        text = separator.join(p.text for p in posts)
        docs.append(LabeledDocument(user_id, user_id, text, label, split))
    return docs


def longitudinal_segments(doc: LabeledDocument, separator: str = LONGITUDINAL_SEPARATOR) -> list[tuple[int, int]]:
    """Character spans of the source posts inside a longitudinal document."""
    spans = []
    start = 0
    while True:
        end = doc.text.find(separator, start)
        if end < 0:
            spans.append((start, len(doc.text)))
            return spans
        spans.append((start, end))
        start = end + len(separator)


def write_documents(path: str | Path, docs: Iterable[LabeledDocument]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for doc in docs:
            fh.write(doc.to_json() + "\n")


def read_documents(path: str | Path) -> list[LabeledDocument]:
    path = Path(path)
    docs = []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                docs.append(LabeledDocument.from_json(line))
            except (KeyError, ValueError, TypeError) as exc:
                raise DataError(f"{path}:{n}: {exc}") from None
    return docs


# ---------------------------------------------------------------------------
# Synthetic corpora
# ---------------------------------------------------------------------------

DEFAULT_SIGNALS = (
    ("grateful", "sunny", "weekend", "garden", "recipe", "concert"),
    ("tired", "lonely", "stressed", "worried", "sleepless", "drained"),
    ("worthless", "empty", "numb", "trapped", "burden", "crying"),
    ("hopeless", "goodbye", "pills", "overdose", "ending", "funeral"),
)
DEFAULT_SHARED_RISK = ("alone", "hurt", "pain", "anymore", "nobody", "scared")


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of a synthetic corpus with planted per-class signal tokens.

    Each document of class ``c`` is a sequence of words; every word is a
    signal word with probability ``signal_rate`` and otherwise comes from a
    shared Zipf-distributed background vocabulary. Signal words come from
    ``signals[c]``, except that for risk classes (``c >= 1``) a fraction
    ``shared_fraction`` of them is drawn from ``shared_risk``, a pool common
    to all risk classes. This makes adjacent risk levels confusable while
    "no risk" stays distinct, like real ordinal risk annotations.
    """

    docs_per_class: int = 500
    n_classes: int = 4
    background_size: int = 400
    signals: tuple[tuple[str, ...], ...] = DEFAULT_SIGNALS
    signal_rate: float = 0.5
    shared_risk: tuple[str, ...] = DEFAULT_SHARED_RISK
    shared_fraction: float = 0.5
    length_range: tuple[int, int] = (12, 40)
    split_fractions: tuple[float, float, float] = (0.8, 0.1, 0.1)
    posts_per_user: tuple[int, int] = (3, 12)
    users_per_class: int = 20
    control_users: int = 20
    subreddit: str = "SuicideWatch"
    other_subreddits: tuple[str, ...] = ("AskReddit", "gaming", "cooking")
    zipf_exponent: float = 1.1

    def __post_init__(self):
        # 0 is allowed: it yields class-independent text (a null corpus)
        if not 0.0 <= self.signal_rate < 1.0:
            raise ValueError(f"signal_rate must lie in [0, 1), got {self.signal_rate}")
        if not 0.0 <= self.shared_fraction <= 1.0:
            raise ValueError(f"shared_fraction must lie in [0, 1], got {self.shared_fraction}")
        if self.shared_fraction > 0 and not self.shared_risk:
            raise ValueError("shared_fraction > 0 needs a shared_risk word list")
        if len(self.signals) < self.n_classes:
            raise ValueError("need one signal list per class")
        lo, hi = self.length_range
        if not 1 <= lo <= hi:
            raise ValueError(f"bad length_range {self.length_range}")
        if abs(sum(self.split_fractions) - 1.0) > 1e-9:
            raise ValueError("split_fractions must sum to 1")


def _background_vocab(size: int, rng: np.random.Generator) -> list[str]:
    consonants = "bcdfghjklmnprstvwz"
    vowels = "aeiou"
    words: list[str] = []
    seen: set[str] = set()
    while len(words) < size:
        n_syll = int(rng.integers(1, 4))
        w = "".join(consonants[rng.integers(len(consonants))] + vowels[rng.integers(len(vowels))] for _ in range(n_syll))
        if w not in seen:
            seen.add(w)
            words.append(w)
    return words


class _TextSampler:
    def __init__(self, spec: SynthSpec, rng: np.random.Generator):
        self.spec = spec
        self.rng = rng
        self.background = _background_vocab(spec.background_size, rng)
        ranks = np.arange(1, spec.background_size + 1, dtype=np.float64)
        weights = ranks ** -spec.zipf_exponent
        self.bg_p = weights / weights.sum()

    def text(self, label: int | None, signal_rate: float | None = None) -> str:
        spec, rng = self.spec, self.rng
        rate = spec.signal_rate if signal_rate is None else signal_rate
        n = int(rng.integers(spec.length_range[0], spec.length_range[1] + 1))
        is_signal = rng.random(n) < rate if label is not None else np.zeros(n, dtype=bool)
        bg = rng.choice(len(self.background), size=n, p=self.bg_p)
        words = []
        for i in range(n):
            if is_signal[i]:
                shared = label >= 1 and rng.random() < spec.shared_fraction
                sig = spec.shared_risk if shared else spec.signals[label]
                words.append(sig[rng.integers(len(sig))])
            else:
                words.append(self.background[bg[i]])
        return " ".join(words)


def _split_counts(n: int, fractions: Sequence[float]) -> list[int]:
    counts = [int(round(n * f)) for f in fractions[:-1]]
    counts.append(n - sum(counts))
    return counts


def generate_synthetic_corpus(
    spec: SynthSpec, seed: int
) -> tuple[list[LabeledDocument], list[LabeledDocument], list[LabeledDocument]]:
    """Per-post synthetic corpus, split into (train, val, test).

    Every document belongs to its own synthetic user, so the splits are
    disjoint by user. Splits are stratified by class.
    """
    rng = np.random.default_rng(seed)
    sampler = _TextSampler(spec, rng)
    splits: dict[str, list[LabeledDocument]] = {s: [] for s in SPLITS}
    for c in range(spec.n_classes):
        counts = _split_counts(spec.docs_per_class, spec.split_fractions)
        i = 0
        for split, k in zip(SPLITS, counts):
            for _ in range(k):
                uid = f"s{seed}c{c}u{i:05d}"
                splits[split].append(
                    LabeledDocument(f"{uid}p0", uid, sampler.text(c), RiskLabel.from_numeric(c), split)
                )
                i += 1
    out = []
    for split in SPLITS:
        docs = splits[split]
        order = rng.permutation(len(docs))
        out.append([docs[j] for j in order])
    return out[0], out[1], out[2]


def generate_synthetic_posts(spec: SynthSpec, seed: int) -> tuple[list[PostRecord], dict[str, RiskLabel]]:
    """Raw UMD-shaped posts and labels tables for the longitudinal path.

    Users of class ``c`` post on ``spec.subreddit`` with class-``c`` signal and
    elsewhere with background text only; control users never carry signal.
    Posts are emitted in shuffled order so that consumers must sort by time.
    """
    rng = np.random.default_rng(seed)
    sampler = _TextSampler(spec, rng)
    posts: list[PostRecord] = []
    labels: dict[str, RiskLabel] = {}
    users: list[tuple[str, int | None]] = []
    for c in range(spec.n_classes):
        users += [(f"s{seed}L{c}u{i:04d}", c) for i in range(spec.users_per_class)]
    users += [(f"s{seed}Lnu{i:04d}", None) for i in range(spec.control_users)]
    n_post = 0
    for uid, c in users:
        labels[uid] = RiskLabel.NONE if c is None else RiskLabel.from_numeric(c)
        k = int(rng.integers(spec.posts_per_user[0], spec.posts_per_user[1] + 1))
        for _ in range(k):
            on_topic = c is not None and rng.random() < 0.5
            sub = spec.subreddit if on_topic else spec.other_subreddits[rng.integers(len(spec.other_subreddits))]
            text = sampler.text(c if on_topic else None)
            ts = int(rng.integers(1_420_070_400, 1_451_606_400))
            posts.append(PostRecord(uid, f"p{seed}_{n_post:06d}", ts, sub, text))
            n_post += 1
    order = rng.permutation(len(posts))
    return [posts[i] for i in order], labels
