"""Integrated gradients at the embedding layer, per token and per corpus.

For a target function ``F`` (the pre-softmax logit of a target label) and a
baseline embedding matrix ``E'``, the attribution of token position ``p`` is

    a_p = sum_j (E - E')_{pj} * mean_{k=1..m} dF/dE_{pj} (E' + alpha_k (E - E'))

with ``alpha_k = (k - 1/2) / m`` (midpoint rule, the default) or
``alpha_k = k / m`` (right-endpoint rule). The sum of all ``a_p`` approaches
``F(E) - F(E')`` as ``m`` grows (completeness); the midpoint rule gets there
at O(1/m^2) instead of O(1/m).
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Iterable, Iterator, Sequence

import numpy as np

from .model import ModelParams, backward, forward
from .tokenizer import sliding_windows
from .training import batch_document_logits

BASELINES = ("pad", "zero")
TARGET_RULES = ("predicted", "ground-truth", "all-labels")
OUTPUTS = ("logit", "probability")
RULES = ("midpoint", "right")
DUMP_HEADER = ["doc_id", "position", "token_id", "ground_truth", "predicted", "target", "score"]

# floats held by one interpolation chunk; bounds memory for long windows
_CHUNK_BUDGET = 1 << 22


@dataclass(frozen=True)
class IgConfig:
    steps: int = 64
    baseline: str = "pad"
    target_rule: str = "predicted"
    output: str = "logit"
    rule: str = "midpoint"

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError(f"integration steps must be >= 1, got {self.steps}")
        if self.baseline not in BASELINES:
            raise ValueError(f"baseline must be one of {BASELINES}")
        if self.target_rule not in TARGET_RULES:
            raise ValueError(f"target_rule must be one of {TARGET_RULES}")
        if self.output not in OUTPUTS:
            raise ValueError(f"output must be one of {OUTPUTS}")
        if self.rule not in RULES:
            raise ValueError(f"rule must be one of {RULES}")


@dataclass(frozen=True)
class AttributionRecord:
    doc_id: str
    position: int
    token_id: int
    ground_truth: int | None
    predicted: int
    target: int
    score: float


@dataclass(frozen=True)
class IgResult:
    scores: np.ndarray
    residual: float
    f_input: float
    f_baseline: float


# ---------------------------------------------------------------------------
# Models seen through their embedding layer
# ---------------------------------------------------------------------------


class EncoderClassifier:
    """The transformer classifier exposed as a function of its embeddings."""

    def __init__(self, params: ModelParams, pad_id: int):
        self.params = params
        self.pad_id = pad_id

    @property
    def n_labels(self) -> int:
        return self.params.wc.shape[1]

    def embed(self, ids) -> np.ndarray:
        return self.params.embedding[np.asarray(ids)]

    def baseline(self, n_tokens: int, kind: str) -> np.ndarray:
        d = self.params.embedding.shape[1]
        if kind == "zero":
            return np.zeros((n_tokens, d))
        return np.repeat(self.params.embedding[self.pad_id][None], n_tokens, axis=0)

    def logits(self, emb: np.ndarray) -> np.ndarray:
        return forward(self.params, embeddings=emb)[0]

    def target_grad(self, emb: np.ndarray, target: int, output: str = "logit"):
        """F and dF/dE for a batch ``(B, T, d)`` of embedding matrices."""
        logits, cache = forward(self.params, embeddings=emb)
        dlogits, f = _target_cotangent(logits, target, output)
        _, demb = backward(self.params, cache, dlogits)
        return f, demb


class LinearTokenModel:
    """Identity encoder with a linear head over summed token embeddings.

    ``logits = sum_p E_p @ weight + bias``. Its gradient is constant, so
    integrated gradients are exact for every step count.
    """

    def __init__(self, embedding: np.ndarray, weight: np.ndarray, bias: np.ndarray | None = None, pad_id: int = 0):
        self.embedding = np.asarray(embedding, dtype=np.float64)
        self.weight = np.asarray(weight, dtype=np.float64)
        self.bias = np.zeros(self.weight.shape[1]) if bias is None else np.asarray(bias, dtype=np.float64)
        self.pad_id = pad_id

    @property
    def n_labels(self) -> int:
        return self.weight.shape[1]

    def embed(self, ids) -> np.ndarray:
        return self.embedding[np.asarray(ids)]

    def baseline(self, n_tokens: int, kind: str) -> np.ndarray:
        if kind == "zero":
            return np.zeros((n_tokens, self.embedding.shape[1]))
        return np.repeat(self.embedding[self.pad_id][None], n_tokens, axis=0)

    def logits(self, emb: np.ndarray) -> np.ndarray:
        return np.asarray(emb).sum(axis=-2) @ self.weight + self.bias

    def target_grad(self, emb: np.ndarray, target: int, output: str = "logit"):
        logits = self.logits(emb)
        dlogits, f = _target_cotangent(logits, target, output)
        demb = np.broadcast_to((dlogits @ self.weight.T)[:, None, :], emb.shape)
        return f, np.array(demb)


def _target_cotangent(logits: np.ndarray, target: int, output: str):
    if output == "logit":
        dlogits = np.zeros_like(logits)
        dlogits[:, target] = 1.0
        return dlogits, logits[:, target]
    shifted = logits - logits.max(axis=1, keepdims=True)
    p = np.exp(shifted)
    p /= p.sum(axis=1, keepdims=True)
    pt = p[:, target]
    dlogits = -pt[:, None] * p
    dlogits[:, target] += pt
    return dlogits, pt


# ---------------------------------------------------------------------------
# Integrated gradients
# ---------------------------------------------------------------------------


def integrated_gradients_embedding(
    model,
    ids: Sequence[int],
    target: int,
    config: IgConfig = IgConfig(),
    baseline: np.ndarray | None = None,
) -> IgResult:
    """Per-position attributions toward `target` for one token window."""
    if config.steps < 1:
        raise ValueError("integration steps must be >= 1")
    emb = model.embed(ids)
    base = model.baseline(len(ids), config.baseline) if baseline is None else np.asarray(baseline, dtype=np.float64)
    return integrated_gradients(model, emb, base, target, config.steps, config.output, config.rule)


def integrated_gradients(
    model, emb: np.ndarray, base: np.ndarray, target: int, steps: int, output: str = "logit", rule: str = "midpoint"
) -> IgResult:
    if steps < 1:
        raise ValueError("integration steps must be >= 1")
    t, d = emb.shape
    diff = emb - base
    offset = 0.5 if rule == "midpoint" else 0.0
    alphas = (np.arange(1, steps + 1, dtype=np.float64) - offset) / steps
    chunk = max(1, _CHUNK_BUDGET // max(1, t * (t + 4 * d)))
    grad_sum = np.zeros_like(emb)
    for start in range(0, steps, chunk):
        a = alphas[start : start + chunk]
        path = base[None] + a[:, None, None] * diff[None]
        _, g = model.target_grad(path, target, output)
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite gradient along the integration path")
        grad_sum += g.sum(axis=0)
    per_dim = diff * (grad_sum / steps)
    scores = per_dim.sum(axis=1)
    f_ends, _ = model.target_grad(np.stack([emb, base]), target, output)
    f_in, f_base = float(f_ends[0]), float(f_ends[1])
    residual = abs(float(scores.sum()) - (f_in - f_base))
    return IgResult(scores, residual, f_in, f_base)


def completeness_tolerance(result: IgResult, rel: float = 1e-3) -> float:
    return rel * (abs(result.f_input) + abs(result.f_baseline) + 1.0)


# ---------------------------------------------------------------------------
# Corpus attribution
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TokenizedDocument:
    doc_id: str
    ids: list[int]
    label: int | None


def _targets(rule: str, predicted: int, truth: int | None, n_labels: int) -> list[int]:
    if rule == "predicted":
        return [predicted]
    if rule == "ground-truth":
        if truth is None:
            raise ValueError("ground-truth targeting needs a numeric label on every document")
        return [truth]
    return list(range(n_labels))


def predict_document(model, ids: Sequence[int], window: int, stride: int) -> np.ndarray:
    """Mean of window logits for one document."""
    plan = sliding_windows(len(ids), window, stride)
    return np.mean([model.logits(model.embed(ids[a:b])[None])[0] for a, b in plan.windows], axis=0)


def attribute_document(
    model, doc: TokenizedDocument, config: IgConfig, window: int = 512, stride: int = 256, predicted: int | None = None
) -> list[AttributionRecord]:
    """Attribution records of one document, ordered by (position, target).

    Long documents are attributed window by window; a position covered by
    several windows gets the mean of its window scores.
    """
    n = len(doc.ids)
    if n == 0:
        return []
    if predicted is None:
        predicted = int(np.argmax(predict_document(model, doc.ids, window, stride)))
    plan = sliding_windows(n, window, stride)
    coverage = np.zeros(n)
    for a, b in plan.windows:
        coverage[a:b] += 1
    targets = _targets(config.target_rule, predicted, doc.label, model.n_labels)
    per_target = {}
    for target in targets:
        total = np.zeros(n)
        for a, b in plan.windows:
            total[a:b] += integrated_gradients_embedding(model, doc.ids[a:b], target, config).scores
        per_target[target] = total / coverage
    records = []
    for p in range(n):
        for target in targets:
            records.append(
                AttributionRecord(doc.doc_id, p, int(doc.ids[p]), doc.label, predicted, target, float(per_target[target][p]))
            )
    return records


def attribute_corpus(
    model,
    docs: Iterable[TokenizedDocument],
    config: IgConfig = IgConfig(),
    window: int = 512,
    stride: int = 256,
    workers: int = 1,
) -> Iterator[AttributionRecord]:
    """Stream attribution records in (doc_id, position, target) order."""
    docs = sorted((d for d in docs if len(d.ids) > 0), key=lambda d: d.doc_id)
    predicted = _predict_all(model, docs, window, stride)

    def one(i):
        return attribute_document(model, docs[i], config, window, stride, predicted[i])

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            for recs in pool.map(one, range(len(docs))):
                yield from recs
    else:
        for i in range(len(docs)):
            yield from one(i)


def _predict_all(model, docs, window, stride) -> list[int]:
    if isinstance(model, EncoderClassifier):
        logits = batch_document_logits(model.params, [d.ids for d in docs], model.pad_id, window, stride, "mean")
        return [int(i) for i in logits.argmax(axis=1)]
    return [int(np.argmax(predict_document(model, d.ids, window, stride))) for d in docs]


def completeness_report(
    model,
    docs: Sequence[TokenizedDocument],
    steps_list: Sequence[int],
    config: IgConfig = IgConfig(),
    window: int = 512,
    stride: int = 256,
) -> list[tuple[int, float]]:
    """Mean completeness residual over the sample windows for each step count."""
    docs = [d for d in docs if len(d.ids) > 0]
    if not docs:
        raise ValueError("no sample")
    if not steps_list:
        raise ValueError("empty steps list")
    if list(steps_list) != sorted(steps_list):
        raise ValueError("steps list must be ascending")
    jobs = []
    for d in docs:
        predicted = int(np.argmax(predict_document(model, d.ids, window, stride)))
        for target in _targets(config.target_rule, predicted, d.label, model.n_labels):
            for a, b in sliding_windows(len(d.ids), window, stride).windows:
                jobs.append((d.ids[a:b], target))
    table = []
    for m in steps_list:
        cfg = replace(config, steps=m)
        res = [integrated_gradients_embedding(model, ids, target, cfg).residual for ids, target in jobs]
        table.append((int(m), float(np.mean(res))))
    return table


# ---------------------------------------------------------------------------
# CSV dump
# ---------------------------------------------------------------------------


def _label_str(label: int | None) -> str:
    return "None" if label is None else str(label)


def write_attributions(path_or_file, records: Iterable[AttributionRecord]) -> int:
    """Write the attribution dump; returns the number of records."""
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, "w", newline="", encoding="utf-8") if own else path_or_file
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(DUMP_HEADER)
        n = 0
        for r in records:
            writer.writerow(
                [r.doc_id, r.position, r.token_id, _label_str(r.ground_truth), r.predicted, r.target, repr(r.score)]
            )
            n += 1
        return n
    finally:
        if own:
            fh.close()


def read_attributions(path_or_file) -> Iterator[AttributionRecord]:
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, newline="", encoding="utf-8") if own else path_or_file
    try:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != DUMP_HEADER:
            raise ValueError(f"unexpected attribution dump header {header!r}")
        for row in reader:
            doc_id, pos, tok, gt, pred, target, score = row
            yield AttributionRecord(
                doc_id, int(pos), int(tok), None if gt == "None" else int(gt), int(pred), int(target), float(score)
            )
    finally:
        if own:
            fh.close()


def records_to_csv(records: Iterable[AttributionRecord]) -> str:
    buf = io.StringIO()
    write_attributions(buf, records)
    return buf.getvalue()
