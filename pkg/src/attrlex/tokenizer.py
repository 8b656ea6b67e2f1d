"""Byte-level BPE tokenizer and sliding-window planning.

Tokens are byte strings. Ids ``0..255`` are the single bytes, id ``256 + r``
is the token produced by the merge of rank ``r``. Two special ids follow the
byte tokens: ``pad_id`` and a reserved ``unk_id`` (byte-level encoding never
emits it). There is no pre-tokenization: merges may span whitespace.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

N_BYTES = 256


@dataclass(frozen=True)
class BpeVocab:
    merges: tuple[tuple[bytes, bytes], ...] = ()
    tokens: tuple[bytes, ...] = field(init=False, repr=False)
    token_ids: dict = field(init=False, repr=False, compare=False)
    merge_ranks: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        tokens = [bytes([b]) for b in range(N_BYTES)]
        ids = {t: i for i, t in enumerate(tokens)}
        ranks = {}
        for rank, (left, right) in enumerate(self.merges):
            if left not in ids or right not in ids:
                raise ValueError(f"merge {rank} uses an operand that is not yet defined")
            key = (ids[left], ids[right])
            if key in ranks:
                raise ValueError(f"merge {rank} duplicates an earlier merge")
            new = left + right
            if new in ids:
                raise ValueError(f"merge {rank} recreates existing token {new!r}")
            ranks[key] = (rank, N_BYTES + rank)
            ids[new] = N_BYTES + rank
            tokens.append(new)
        object.__setattr__(self, "tokens", tuple(tokens))
        object.__setattr__(self, "token_ids", ids)
        object.__setattr__(self, "merge_ranks", ranks)

    @property
    def size(self) -> int:
        """Number of byte tokens (base bytes plus merges), excluding specials."""
        return len(self.tokens)

    @property
    def pad_id(self) -> int:
        return self.size

    @property
    def unk_id(self) -> int:
        return self.size + 1

    @property
    def n_ids(self) -> int:
        """Embedding rows a model needs: byte tokens plus the two specials."""
        return self.size + 2

    def to_json(self) -> str:
        payload = {
            "vocab_size": self.size,
            "merges": [[left.hex(), right.hex()] for left, right in self.merges],
        }
        return json.dumps(payload, indent=None, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "BpeVocab":
        payload = json.loads(text)
        vocab = cls(tuple((bytes.fromhex(a), bytes.fromhex(b)) for a, b in payload["merges"]))
        if vocab.size != payload["vocab_size"]:
            raise ValueError(f"vocab_size {payload['vocab_size']} disagrees with {len(vocab.merges)} merges")
        return vocab

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "BpeVocab":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


@dataclass(frozen=True)
class TokenSequence:
    ids: list[int]
    offsets: list[tuple[int, int]]

    def __len__(self) -> int:
        return len(self.ids)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


class _PairIndex:
    """Linked token list over the whole corpus with a pair -> positions index."""

    def __init__(self, corpus: Iterable[bytes]):
        tok: list[int] = []
        nxt: list[int] = []
        prv: list[int] = []
        for data in corpus:
            base = len(tok)
            n = len(data)
            tok.extend(data)
            nxt.extend(range(base + 1, base + n + 1))
            prv.extend(range(base - 1, base + n - 1))
            if n:
                nxt[-1] = -1
                prv[base] = -1
        self.tok, self.nxt, self.prv = tok, nxt, prv
        self.alive = [True] * len(tok)
        self.where: dict[tuple[int, int], set[int]] = {}
        for i, j in enumerate(nxt):
            if j >= 0:
                self.where.setdefault((tok[i], tok[j]), set()).add(i)

    def _drop(self, i: int) -> tuple[int, int] | None:
        j = self.nxt[i] if i >= 0 else -1
        if j < 0:
            return None
        pair = (self.tok[i], self.tok[j])
        self.where[pair].discard(i)
        return pair

    def _add(self, i: int) -> tuple[int, int] | None:
        j = self.nxt[i] if i >= 0 else -1
        if j < 0:
            return None
        pair = (self.tok[i], self.tok[j])
        self.where.setdefault(pair, set()).add(i)
        return pair

    def merge(self, pair: tuple[int, int], new_id: int) -> set[tuple[int, int]]:
        """Merge every occurrence of `pair` left to right; return touched pairs."""
        a, b = pair
        touched: set[tuple[int, int]] = set()
        for i in sorted(self.where.get(pair, ())):
            j = self.nxt[i]
            if not self.alive[i] or j < 0 or self.tok[i] != a or self.tok[j] != b:
                continue
            p = self.prv[i]
            for q in (p, i, j):
                t = self._drop(q)
                if t is not None:
                    touched.add(t)
            self.tok[i] = new_id
            self.alive[j] = False
            k = self.nxt[j]
            self.nxt[i] = k
            if k >= 0:
                self.prv[k] = i
            for q in (p, i):
                t = self._add(q)
                if t is not None:
                    touched.add(t)
        self.where.pop(pair, None)
        touched.discard(pair)
        return touched


def train_bpe(corpus: Sequence[str], vocab_size: int) -> BpeVocab:
    """Learn merges until `vocab_size` byte tokens exist or no pair repeats.

    The most frequent adjacent pair (overlapping occurrences counted) wins;
    ties go to the lexicographically smaller concatenated byte string, then
    to the smaller left operand. A pair whose concatenation is already a token
    (reachable through another split) is never merged, so every token has a
    unique byte string and the vocab file round-trips.
    """
    if vocab_size < N_BYTES + 1:
        raise ValueError(f"vocab_size must be at least {N_BYTES + 1}, got {vocab_size}")
    if not corpus:
        raise ValueError("cannot train a tokenizer on an empty corpus")
    index = _PairIndex(text.encode("utf-8") for text in corpus)
    tokens = [bytes([b]) for b in range(N_BYTES)]

    def entry(pair):
        count = len(index.where.get(pair, ()))
        return (-count, tokens[pair[0]] + tokens[pair[1]], tokens[pair[0]], pair)

    heap = [entry(pair) for pair in index.where]
    heapq.heapify(heap)
    merges: list[tuple[bytes, bytes]] = []
    known = set(tokens)
    while len(tokens) < vocab_size and heap:
        neg, concat, _, pair = heapq.heappop(heap)
        count = len(index.where.get(pair, ()))
        if count != -neg:
            # stale entry; a fresh one was pushed when the count changed
            continue
        if count < 2:
            break
        if concat in known:
            continue
        known.add(concat)
        left, right = tokens[pair[0]], tokens[pair[1]]
        new_id = len(tokens)
        merges.append((left, right))
        tokens.append(left + right)
        for t in index.merge(pair, new_id):
            if index.where.get(t) and tokens[t[0]] + tokens[t[1]] not in known:
                heapq.heappush(heap, entry(t))
    return BpeVocab(tuple(merges))


# ---------------------------------------------------------------------------
# Encoding / decoding
# ---------------------------------------------------------------------------


def encode(vocab: BpeVocab, text: str) -> TokenSequence:
    """Apply merges in rank order (leftmost first within a rank)."""
    data = text.encode("utf-8")
    n = len(data)
    tok = list(data)
    start = list(range(n))
    end = list(range(1, n + 1))
    nxt = list(range(1, n + 1))
    prv = list(range(-1, n - 1))
    if n:
        nxt[-1] = -1
    alive = [True] * n
    ranks = vocab.merge_ranks
    heap = []
    for i in range(n - 1):
        r = ranks.get((tok[i], tok[i + 1]))
        if r is not None:
            heap.append((r[0], i, r[1]))
    heapq.heapify(heap)
    while heap:
        rank, i, new_id = heapq.heappop(heap)
        if not alive[i]:
            continue
        j = nxt[i]
        if j < 0:
            continue
        r = ranks.get((tok[i], tok[j]))
        if r is None or r[0] != rank:
            continue
        # merges create ids of higher rank than any operand, so new pairs
        # never jump ahead of the rank being processed
        tok[i] = new_id
        end[i] = end[j]
        alive[j] = False
        k = nxt[j]
        nxt[i] = k
        if k >= 0:
            prv[k] = i
            r = ranks.get((tok[i], tok[k]))
            if r is not None:
                heapq.heappush(heap, (r[0], i, r[1]))
        p = prv[i]
        if p >= 0:
            r = ranks.get((tok[p], tok[i]))
            if r is not None:
                heapq.heappush(heap, (r[0], p, r[1]))
    ids, offsets = [], []
    i = 0 if n else -1
    while i >= 0:
        ids.append(tok[i])
        offsets.append((start[i], end[i]))
        i = nxt[i]
    return TokenSequence(ids, offsets)


def decode(vocab: BpeVocab, ids: Iterable[int]) -> bytes:
    out = []
    for t in ids:
        if not 0 <= t < vocab.size:
            raise ValueError(f"token id {t} out of range for vocabulary of size {vocab.size}")
        out.append(vocab.tokens[t])
    return b"".join(out)


def decode_text(vocab: BpeVocab, ids: Iterable[int]) -> str:
    return decode(vocab, ids).decode("utf-8")


def token_text(vocab: BpeVocab, token_id: int) -> str:
    """Printable form of one token (invalid UTF-8 fragments are escaped)."""
    if token_id == vocab.pad_id:
        return "<pad>"
    if token_id == vocab.unk_id:
        return "<unk>"
    return vocab.tokens[token_id].decode("utf-8", errors="backslashreplace")


# ---------------------------------------------------------------------------
# Sliding windows
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WindowPlan:
    length: int
    stride: int
    windows: list[tuple[int, int]]


def sliding_windows(n: int, length: int = 512, stride: int = 256) -> WindowPlan:
    """Half-open token windows of `length` covering ``[0, n)``.

    Windows start at multiples of `stride` while they end before `n`; a
    final window ``[n - length, n)`` closes the tail.
    """
    if length < 1:
        raise ValueError(f"window length must be >= 1, got {length}")
    if not 1 <= stride <= length:
        raise ValueError(f"stride must satisfy 1 <= stride <= length, got stride={stride}, length={length}")
    if n < 0:
        raise ValueError(f"token count must be >= 0, got {n}")
    if n <= length:
        return WindowPlan(length, stride, [(0, n)])
    windows = []
    s = 0
    while s + length < n:
        windows.append((s, s + length))
        s += stride
    if windows[-1][1] < n:
        windows.append((n - length, n))
    return WindowPlan(length, stride, windows)
