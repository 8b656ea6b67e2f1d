"""Confusion matrices, macro recall/F1 and the lexicon evaluation protocol."""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .lexicon import Lexicon
from .scorer import SCHEMES, LexiconScorer, TfidfModel, classify, group_label, n_groups

REPORT_FIELDS = ["dataset", "scheme", "mode", "tfidf", "recall_macro", "f1_macro", "wall_ms"]
# row order inside each (dataset, scheme) block
PROTOCOL_ROWS = (("median", False), ("median", True), ("mean", False), ("mean", True))


def confusion(truths: Sequence[int], preds: Sequence[int], n_labels: int | None = None) -> np.ndarray:
    """Counts with rows = truth, columns = prediction."""
    if len(truths) != len(preds):
        raise ValueError(f"length mismatch: {len(truths)} truths vs {len(preds)} predictions")
    if n_labels is None:
        n_labels = max([*truths, *preds], default=-1) + 1
    cm = np.zeros((n_labels, n_labels), dtype=np.int64)
    for t, p in zip(truths, preds):
        if not (0 <= t < n_labels and 0 <= p < n_labels):
            raise ValueError(f"label out of range for {n_labels} classes")
        cm[t, p] += 1
    return cm


@dataclass(frozen=True)
class Metrics:
    recall_macro: float
    f1_macro: float
    recall: np.ndarray
    precision: np.ndarray
    f1: np.ndarray


def macro_metrics(cm: np.ndarray) -> Metrics:
    """Per-class recall/precision/F1 (0 on zero denominators) and their macro means."""
    cm = np.asarray(cm)
    diag = np.diag(cm).astype(np.float64)
    rows = cm.sum(axis=1)
    cols = cm.sum(axis=0)
    recall = np.divide(diag, rows, out=np.zeros_like(diag), where=rows > 0)
    precision = np.divide(diag, cols, out=np.zeros_like(diag), where=cols > 0)
    denom = precision + recall
    f1 = np.divide(2 * precision * recall, denom, out=np.zeros_like(diag), where=denom > 0)
    if cm.shape[0] == 0:
        return Metrics(0.0, 0.0, recall, precision, f1)
    return Metrics(float(recall.mean()), float(f1.mean()), recall, precision, f1)


@dataclass(frozen=True)
class EvalDocument:
    doc_id: str
    ids: list[int]
    label: int | None  # None for control users


@dataclass(frozen=True)
class ReportRow:
    dataset: str
    scheme: str
    mode: str
    tfidf: bool
    recall_macro: float
    f1_macro: float
    wall_ms: float | None
    metrics: Metrics
    confusion: np.ndarray


def _predict(scorer: LexiconScorer, docs: Sequence[EvalDocument], use_tfidf: bool) -> list[int]:
    return [classify(scorer.score(d.ids, use_tfidf)) for d in docs]


def evaluate_protocol(
    lexicon: Lexicon,
    tfidf: TfidfModel | None,
    datasets: Mapping[str, Sequence[EvalDocument]],
    n_ids: int,
    schemes: Sequence[str] = SCHEMES,
    timing_runs: int = 0,
) -> list[ReportRow]:
    """Four rows (median, median+tfidf, mean, mean+tfidf) per (dataset, scheme).

    Four-class predictions are made once per row setting and grouped post
    hoc for the binary schemes. Control documents (label None) are left out
    of the four-class scheme. With ``timing_runs > 0`` each row also carries
    the median wall-clock of that many runs of table building plus scoring.
    """
    scorers = {mode: LexiconScorer(lexicon, n_ids, mode, tfidf) for mode in ("mean", "median")}
    rows = []
    for name, docs in datasets.items():
        docs = [d for d in docs if d.ids]
        preds = {}
        timings = {}
        for mode, use in PROTOCOL_ROWS:
            if use and tfidf is None:
                raise ValueError("TF-IDF rows requested without a TF-IDF model")
            preds[mode, use] = _predict(scorers[mode], docs, use)
            timings[mode, use] = _time_scoring(lexicon, tfidf, docs, n_ids, mode, use, timing_runs)
        for scheme in schemes:
            keep = [i for i, d in enumerate(docs) if scheme != "four-class" or d.label is not None]
            truths = [group_label(docs[i].label, scheme) for i in keep]
            k = n_groups(scheme, lexicon.n_labels)
            for mode, use in PROTOCOL_ROWS:
                grouped = [group_label(preds[mode, use][i], scheme) for i in keep]
                cm = confusion(truths, grouped, k)
                m = macro_metrics(cm)
                rows.append(ReportRow(name, scheme, mode, use, m.recall_macro, m.f1_macro, timings[mode, use], m, cm))
    return rows


def _time_scoring(lexicon, tfidf, docs, n_ids, mode, use, runs) -> float | None:
    if runs <= 0:
        return None
    times = []
    for _ in range(runs):
        t0 = time.perf_counter()
        scorer = LexiconScorer(lexicon, n_ids, mode, tfidf)
        _predict(scorer, docs, use)
        times.append((time.perf_counter() - t0) * 1000.0)
    return float(np.median(times))


def _fmt(x: float) -> str:
    return f"{x:.4f}"


def report_rows(rows: Sequence[ReportRow]) -> list[list[str]]:
    out = []
    for r in rows:
        wall = "" if r.wall_ms is None else f"{r.wall_ms:.3f}"
        out.append([r.dataset, r.scheme, r.mode, str(r.tfidf).lower(), _fmt(r.recall_macro), _fmt(r.f1_macro), wall])
    return out


def report_csv(rows: Sequence[ReportRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_FIELDS)
    writer.writerows(report_rows(rows))
    return buf.getvalue()


def report_text(rows: Sequence[ReportRow]) -> str:
    """Aligned plain-text table of the report, with per-class values."""
    table = [REPORT_FIELDS] + report_rows(rows)
    widths = [max(len(r[i]) for r in table) for i in range(len(REPORT_FIELDS))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in table]
    lines.append("")
    lines.append("per-class recall / F1")
    for r in rows:
        rec = " ".join(_fmt(x) for x in r.metrics.recall)
        f1 = " ".join(_fmt(x) for x in r.metrics.f1)
        tag = f"{r.dataset}/{r.scheme}/{r.mode}{'+tfidf' if r.tfidf else ''}"
        lines.append(f"{tag}: recall [{rec}] f1 [{f1}]")
    return "\n".join(lines) + "\n"
