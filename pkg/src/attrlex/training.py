"""Training loop with periodic validation checkpoints, and windowed inference."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .model import ModelConfig, ModelParams, backward, cross_entropy, forward
from .optim import AdamWConfig, OptimizerState, adamw_step
from .tokenizer import sliding_windows

logger = logging.getLogger(__name__)

AGGREGATIONS = ("mean", "max")


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.01
    batch_size: int = 16
    epochs: int = 5
    checkpoint_every: int = 10
    seed: int = 0
    window: int = 512
    stride: int = 256
    d_model: int = 64
    d_hidden: int = 128
    aggregation: str = "mean"

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1 or self.checkpoint_every < 1:
            raise ValueError("batch_size and checkpoint_every must be >= 1")
        if self.aggregation not in AGGREGATIONS:
            raise ValueError(f"aggregation must be one of {AGGREGATIONS}")
        self.optimizer()  # validates lr / betas

    def optimizer(self) -> AdamWConfig:
        return AdamWConfig(self.lr, tuple(self.betas), self.eps, self.weight_decay)


@dataclass
class TrainResult:
    params: ModelParams
    best_step: int
    best_val_accuracy: float
    history: list[tuple[int, float]] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)


def pad_batch(seqs: Sequence[Sequence[int]], pad_id: int) -> tuple[np.ndarray, np.ndarray]:
    t = max(len(s) for s in seqs)
    ids = np.full((len(seqs), t), pad_id, dtype=np.int64)
    mask = np.zeros((len(seqs), t))
    for i, s in enumerate(seqs):
        ids[i, : len(s)] = s
        mask[i, : len(s)] = 1.0
    return ids, mask


def window_examples(seqs: Sequence[Sequence[int]], labels: Sequence[int], window: int, stride: int):
    """Split each sequence into sliding windows, each inheriting its label."""
    out_ids, out_labels = [], []
    for seq, label in zip(seqs, labels):
        if len(seq) == 0:
            continue
        for a, b in sliding_windows(len(seq), window, stride).windows:
            out_ids.append(list(seq[a:b]))
            out_labels.append(label)
    return out_ids, out_labels


def document_logits(
    params: ModelParams,
    seq: Sequence[int],
    pad_id: int,
    window: int = 512,
    stride: int = 256,
    aggregation: str = "mean",
) -> np.ndarray:
    """Logits for one document, aggregating its windows by mean or max."""
    if len(seq) == 0:
        raise ValueError("cannot classify an empty token sequence")
    plan = sliding_windows(len(seq), window, stride)
    ids, mask = pad_batch([seq[a:b] for a, b in plan.windows], pad_id)
    logits, _ = forward(params, ids=ids, mask=mask)
    if aggregation == "mean":
        return logits.mean(axis=0)
    if aggregation == "max":
        return logits.max(axis=0)
    raise ValueError(f"unknown aggregation {aggregation!r}")


def batch_document_logits(params, seqs, pad_id, window=512, stride=256, aggregation="mean", batch_size=64):
    """Document logits for many sequences, batching short documents together."""
    out = np.zeros((len(seqs), params.wc.shape[1]))
    short = [i for i, s in enumerate(seqs) if 0 < len(s) <= window]
    for start in range(0, len(short), batch_size):
        idx = short[start : start + batch_size]
        ids, mask = pad_batch([seqs[i] for i in idx], pad_id)
        out[idx] = forward(params, ids=ids, mask=mask)[0]
    for i, s in enumerate(seqs):
        if len(s) > window:
            out[i] = document_logits(params, s, pad_id, window, stride, aggregation)
        elif len(s) == 0:
            raise ValueError(f"document {i} has no tokens")
    return out


def accuracy(params, seqs, labels, pad_id, config: TrainConfig) -> float:
    if not seqs:
        return 0.0
    logits = batch_document_logits(params, seqs, pad_id, config.window, config.stride, config.aggregation)
    return float(np.mean(logits.argmax(axis=1) == np.asarray(labels)))


def select_checkpoint(history: Sequence[tuple[int, float]]) -> int:
    """Index of the best validation accuracy; ties go to the earliest."""
    if not history:
        raise ValueError("no checkpoints")
    best = 0
    for i, (_, acc) in enumerate(history):
        if acc > history[best][1]:
            best = i
    return best


def train(
    train_seqs: Sequence[Sequence[int]],
    train_labels: Sequence[int],
    val_seqs: Sequence[Sequence[int]],
    val_labels: Sequence[int],
    vocab_size: int,
    pad_id: int,
    config: TrainConfig = TrainConfig(),
    n_labels: int = 4,
) -> TrainResult:
    """Train from a seeded init; return the best-validation checkpoint.

    A checkpoint is taken every ``config.checkpoint_every`` optimizer steps
    and after the final step. Validation accuracy is per document, from the
    aggregated window logits.
    """
    ex_ids, ex_labels = window_examples(train_seqs, train_labels, config.window, config.stride)
    if not ex_ids:
        raise ValueError("empty training set")
    params = ModelParams.init(ModelConfig(vocab_size, config.d_model, config.d_hidden, n_labels), config.seed)
    state = OptimizerState.zeros(params)
    opt = config.optimizer()
    rng = np.random.default_rng(config.seed)
    labels_arr = np.asarray(ex_labels)

    history: list[tuple[int, float]] = []
    losses: list[float] = []
    best_params, best_acc, best_step = None, -1.0, -1
    step = 0

    def checkpoint():
        nonlocal best_params, best_acc, best_step
        acc = accuracy(params, val_seqs, val_labels, pad_id, config)
        history.append((step, acc))
        logger.info("step %d val_accuracy %.4f", step, acc)
        if acc > best_acc:
            best_params, best_acc, best_step = params.copy(), acc, step

    for epoch in range(config.epochs):
        order = rng.permutation(len(ex_ids))
        for start in range(0, len(order), config.batch_size):
            idx = order[start : start + config.batch_size]
            ids, mask = pad_batch([ex_ids[i] for i in idx], pad_id)
            logits, cache = forward(params, ids=ids, mask=mask)
            loss, dlogits = cross_entropy(logits, labels_arr[idx])
            grads, _ = backward(params, cache, dlogits)
            adamw_step(params, grads, state, opt)
            losses.append(loss)
            step += 1
            if step % config.checkpoint_every == 0:
                checkpoint()
        logger.info("epoch %d done, last loss %.4f", epoch + 1, losses[-1])
    if not history or history[-1][0] != step:
        checkpoint()
    return TrainResult(best_params, best_step, best_acc, history, losses)


def config_dict(config: TrainConfig) -> dict:
    d = asdict(config)
    d["betas"] = list(config.betas)
    return d
