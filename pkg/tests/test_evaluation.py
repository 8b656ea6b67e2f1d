import numpy as np
import pytest

from attrlex.attribution import AttributionRecord
from attrlex.evaluation import (
    REPORT_FIELDS,
    EvalDocument,
    confusion,
    evaluate_protocol,
    macro_metrics,
    report_csv,
    report_text,
)
from attrlex.lexicon import aggregate_records
from attrlex.scorer import fit_tfidf


def test_confusion_hand_example():
    cm = confusion([0, 0, 1, 1], [0, 1, 1, 1], 2)
    assert cm.tolist() == [[1, 1], [0, 2]]
    m = macro_metrics(cm)
    assert m.recall_macro == 0.75
    assert m.f1_macro == pytest.approx((0.6666666666666666 + 0.8) / 2, abs=1e-15)
    assert round(m.f1_macro, 4) == 0.7333


def test_zero_denominators():
    m = macro_metrics(confusion([0, 0], [0, 0], 3))
    assert m.recall.tolist() == [1.0, 0.0, 0.0]
    assert m.f1.tolist() == [1.0, 0.0, 0.0]


def test_label_out_of_range():
    with pytest.raises(ValueError):
        confusion([0, 2], [0, 1], 2)


def test_length_mismatch():
    with pytest.raises(ValueError):
        confusion([0], [0, 1])


def test_perfect_predictions():
    m = macro_metrics(confusion([0, 1, 2, 3], [0, 1, 2, 3]))
    assert m.recall_macro == 1.0 and m.f1_macro == 1.0


def _fixture():
    records = []
    for label in range(4):
        for k in range(3):
            records.append(AttributionRecord(f"d{label}{k}", k, 10 + label, label, label, label, 1.0 + 0.1 * k))
            records.append(AttributionRecord(f"d{label}{k}", k, 20, label, label, label, 0.01 * label))
    lex = aggregate_records(records, 4)
    docs = [EvalDocument(f"t{l}", [10 + l, 20, 20], l) for l in range(4)]
    docs.append(EvalDocument("ctrl", [20, 30], None))
    return lex, fit_tfidf([d.ids for d in docs[:4]]), docs


def test_protocol_shape_and_order():
    lex, tf, docs = _fixture()
    rows = evaluate_protocol(lex, tf, {"test": docs, "longitudinal": docs[:2]}, 40)
    assert len(rows) == 24
    assert [(r.dataset, r.scheme) for r in rows[:4]] == [("test", "four-class")] * 4
    assert [(r.mode, r.tfidf) for r in rows[:4]] == [("median", False), ("median", True), ("mean", False), ("mean", True)]
    assert all(r.wall_ms is None for r in rows)


def test_protocol_values():
    lex, tf, docs = _fixture()
    rows = evaluate_protocol(lex, tf, {"test": docs}, 40)
    four = [r for r in rows if r.scheme == "four-class"]
    # controls are skipped in four-class; every risk document is classified right
    assert all(r.confusion.sum() == 4 and r.recall_macro == 1.0 for r in four)
    binary = [r for r in rows if r.scheme == "no-vs-any"]
    assert all(r.confusion.sum() == 5 for r in binary)


def test_symmetric_samples_make_mean_and_median_agree():
    lex, tf, docs = _fixture()
    # two samples per slot: mean == median
    records = [
        AttributionRecord("x", 0, 10 + l, l, l, l, s) for l in range(4) for s in (0.5 + l, 1.5 + l)
    ]
    lex = aggregate_records(records, 4)
    rows = evaluate_protocol(lex, tf, {"test": docs}, 40)
    by = {(r.scheme, r.mode, r.tfidf): r for r in rows}
    for scheme in ("four-class", "no-vs-any", "nolow-vs-medhigh"):
        for use in (False, True):
            assert np.array_equal(by[scheme, "mean", use].confusion, by[scheme, "median", use].confusion)


def test_timing_opt_in():
    lex, tf, docs = _fixture()
    rows = evaluate_protocol(lex, tf, {"test": docs}, 40, timing_runs=2)
    assert all(r.wall_ms is not None and r.wall_ms >= 0 for r in rows)


def test_report_formats():
    lex, tf, docs = _fixture()
    rows = evaluate_protocol(lex, tf, {"test": docs}, 40)
    csv_text = report_csv(rows)
    lines = csv_text.splitlines()
    assert lines[0] == ",".join(REPORT_FIELDS)
    assert len(lines) == 13
    assert lines[1] == "test,four-class,median,false,1.0000,1.0000,"
    text = report_text(rows)
    assert "per-class recall / F1" in text
    assert "test/four-class/mean+tfidf" in text
