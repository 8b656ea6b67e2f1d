"""Static HTML report: attribution-highlighted documents and token histograms.

The page is self-contained: inline CSS and SVG, no executable scripts and
no external resources. The attribution rows of the sampled documents (as
strings, exactly as in the CSV dump) and the histogram counts are embedded
as JSON blocks so the page can be checked against the dump and the lexicon.
"""

from __future__ import annotations

import codecs
import json
from collections import defaultdict
from html import escape
from typing import Mapping, Sequence

import numpy as np

from .attribution import DUMP_HEADER, AttributionRecord
from .lexicon import Lexicon, histogram_export, top_tokens
from .tokenizer import BpeVocab, token_text

CLIP_QUANTILE = 99.0
LABEL_NAMES = ("a: no risk", "b: low", "c: moderate", "d: severe")

_CSS = """
body { font-family: sans-serif; margin: 2em; color: #222; }
.doc { border: 1px solid #ccc; padding: 0.6em; margin-bottom: 1em; line-height: 1.9; }
.doc h3 { margin: 0 0 0.3em 0; font-size: 1em; }
.tok { white-space: pre-wrap; border-radius: 2px; }
.legend span { padding: 0 0.6em; margin-right: 0.4em; }
.hist { display: inline-block; margin: 0 1.2em 1.2em 0; vertical-align: top; }
.hist h4 { margin: 0.2em 0; font-size: 0.9em; }
table.meta td { padding: 0 0.8em 0 0; }
"""


class ProvenanceError(ValueError):
    pass


def intensities(scores: Sequence[float], quantile: float = CLIP_QUANTILE) -> np.ndarray:
    """Scores scaled to [-1, 1], clipped at a percentile of |score|."""
    s = np.asarray(scores, dtype=np.float64)
    if s.size == 0:
        return s
    clip = float(np.percentile(np.abs(s), quantile))
    if clip <= 0.0:
        return np.zeros_like(s)
    return np.clip(s / clip, -1.0, 1.0)


def _color(x: float) -> str:
    # green for support of the target label, red against it
    if x == 0.0:
        return "rgba(0,0,0,0)"
    alpha = round(abs(x) * 0.8, 3)
    return f"rgba(0,160,60,{alpha})" if x > 0 else f"rgba(220,30,30,{alpha})"


def _label_name(label: int | None) -> str:
    if label is None:
        return "None (control)"
    return LABEL_NAMES[label] if label < len(LABEL_NAMES) else str(label)


def _render_document(doc_id: str, text: str, recs: Sequence[AttributionRecord], offsets) -> str:
    data = text.encode("utf-8")
    inten = intensities([r.score for r in recs])
    # a token may end inside a multi-byte character; the rest of that
    # character is shown in the following span
    decoder = codecs.getincrementaldecoder("utf-8")(errors="replace")
    spans = []
    for i, (r, x, (a, b)) in enumerate(zip(recs, inten, offsets)):
        piece = decoder.decode(data[a:b], final=i == len(recs) - 1)
        spans.append(
            f'<span class="tok" data-intensity="{x:.4f}" title="{r.score:.6g}" '
            f'style="background-color:{_color(float(x))}">{escape(piece)}</span>'
        )
    head = recs[0] if recs else None
    pred = _label_name(head.predicted) if head else "-"
    truth = _label_name(head.ground_truth) if head else "-"
    target = _label_name(head.target) if head else "-"
    return (
        f'<div class="doc" id="doc-{escape(doc_id)}"><h3>{escape(doc_id)}</h3>'
        f'<table class="meta"><tr><td>predicted: <b>{escape(pred)}</b></td>'
        f"<td>ground truth: {escape(truth)}</td><td>attribution target: {escape(target)}</td></tr></table>"
        f"<div>{''.join(spans)}</div></div>"
    )


def _svg_histogram(edges: np.ndarray, counts: np.ndarray, width: int = 220, height: int = 90) -> str:
    peak = max(int(counts.max()), 1)
    bins = counts.size
    bw = width / bins
    bars = []
    for i, c in enumerate(counts):
        h = height * int(c) / peak
        bars.append(
            f'<rect x="{i * bw:.2f}" y="{height - h:.2f}" width="{max(bw - 1, 0.5):.2f}" '
            f'height="{h:.2f}" fill="#4a7ab5" data-count="{int(c)}"/>'
        )
    axis = (
        f'<text x="0" y="{height + 12}" font-size="9">{edges[0]:.3g}</text>'
        f'<text x="{width}" y="{height + 12}" font-size="9" text-anchor="end">{edges[-1]:.3g}</text>'
    )
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height + 16}">'
        f'<line x1="0" y1="{height}" x2="{width}" y2="{height}" stroke="#888"/>{"".join(bars)}{axis}</svg>'
    )


def _legend() -> str:
    stops = [-1.0, -0.5, 0.0, 0.5, 1.0]
    cells = "".join(f'<span style="background-color:{_color(x)}">{x:+.1f}</span>' for x in stops)
    return f'<p class="legend">attribution intensity (clipped at p{CLIP_QUANTILE:g} of |score| per document): {cells}</p>'


def render_report(
    records: Sequence[AttributionRecord],
    lexicon: Lexicon,
    documents: Mapping[str, str],
    vocab: BpeVocab,
    offsets: Mapping[str, Sequence[tuple[int, int]]],
    provenance: dict | None = None,
    top_k: int = 8,
    bins: int = 20,
    max_docs: int = 10,
    title: str = "Token attribution report",
) -> str:
    """Render the report for the documents in `documents` (doc_id -> text).

    `offsets` gives each document's token byte offsets. When `provenance` is
    given it must equal the lexicon's.
    """
    if provenance is not None and provenance != lexicon.provenance:
        raise ProvenanceError("attribution dump and lexicon come from different runs")
    by_doc: dict[str, list[AttributionRecord]] = defaultdict(list)
    for r in records:
        if r.doc_id in documents and r.target == r.predicted:
            by_doc[r.doc_id].append(r)
    doc_ids = sorted(by_doc)[:max_docs]

    parts = [
        "<!DOCTYPE html>",
        '<html lang="en"><head><meta charset="utf-8">',
        f"<title>{escape(title)}</title><style>{_CSS}</style></head><body>",
        f"<h1>{escape(title)}</h1>",
        "<h2>Documents</h2>",
        _legend(),
    ]
    embedded_rows = []
    for doc_id in doc_ids:
        recs = sorted(by_doc[doc_id], key=lambda r: r.position)
        parts.append(_render_document(doc_id, documents[doc_id], recs, offsets[doc_id]))
        embedded_rows += [
            [r.doc_id, str(r.position), str(r.token_id), str(r.ground_truth), str(r.predicted), str(r.target), repr(r.score)]
            for r in recs
        ]

    parts.append(f"<h2>Attribution histograms (top {top_k} tokens by total |attribution|)</h2>")
    hist_data = []
    for t in top_tokens(lexicon, top_k):
        h = histogram_export(lexicon, t, bins)
        name = token_text(vocab, t)
        parts.append(f"<h3>token {t}: <code>{escape(repr(name))}</code></h3><div>")
        for label in range(lexicon.n_labels):
            n = int(h.counts[label].sum())
            if n == 0:
                continue
            parts.append(
                f'<div class="hist" data-token="{t}" data-label="{label}"><h4>{escape(_label_name(label))} (n={n})</h4>'
                f"{_svg_histogram(h.edges, h.counts[label])}</div>"
            )
        parts.append("</div>")
        hist_data.append({"token_id": t, "edges": h.edges.tolist(), "counts": h.counts.tolist()})

    parts.append(_json_block("attribution-data", {"header": DUMP_HEADER, "rows": embedded_rows}))
    parts.append(_json_block("histogram-data", hist_data))
    parts.append("</body></html>")
    return "\n".join(parts) + "\n"


def _json_block(element_id: str, payload) -> str:
    text = json.dumps(payload, separators=(",", ":")).replace("</", "<\\/")
    return f'<script type="application/json" id="{element_id}">{text}</script>'


def extract_json_block(html: str, element_id: str):
    """Read back one embedded JSON block from a rendered report."""
    marker = f'<script type="application/json" id="{element_id}">'
    start = html.index(marker) + len(marker)
    end = html.index("</script>", start)
    return json.loads(html[start:end].replace("<\\/", "</"))
