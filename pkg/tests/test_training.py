import numpy as np
import pytest

from attrlex.model import cross_entropy, forward
from attrlex.training import (
    TrainConfig,
    batch_document_logits,
    document_logits,
    pad_batch,
    select_checkpoint,
    train,
    window_examples,
)


def test_select_checkpoint():
    assert select_checkpoint([(10, 0.5), (20, 0.7), (30, 0.6)]) == 1


def test_select_checkpoint_tie_goes_to_earliest():
    assert select_checkpoint([(10, 0.6), (20, 0.8), (30, 0.8)]) == 1


def test_pad_batch():
    ids, mask = pad_batch([[1, 2, 3], [4]], pad_id=9)
    assert ids.tolist() == [[1, 2, 3], [4, 9, 9]]
    assert mask.tolist() == [[1, 1, 1], [1, 0, 0]]


def test_window_examples_inherit_label():
    ids, labels = window_examples([list(range(10)), [1, 2]], [2, 0], window=4, stride=4)
    assert labels == [2, 2, 2, 0]
    assert ids[-2] == [6, 7, 8, 9]


@pytest.mark.parametrize("config", [{"epochs": 0}, {"lr": -1.0}, {"betas": (0.9, 1.0)}, {"aggregation": "sum"}])
def test_bad_config(config):
    with pytest.raises(ValueError):
        TrainConfig(**config)


def test_empty_training_set():
    with pytest.raises(ValueError, match="empty training set"):
        train([], [], [[1]], [0], 10, 9, TrainConfig())


def test_single_example_is_memorized():
    config = TrainConfig(epochs=200, batch_size=1, checkpoint_every=50)
    result = train([[3, 1, 4, 1, 5]], [2], [[3, 1, 4, 1, 5]], [2], 10, 9, config)
    assert len(result.losses) == 200
    assert result.losses[-1] < 0.01
    # accuracy saturates early, so the earliest perfect checkpoint is kept
    assert result.best_step == 50 and result.best_val_accuracy == 1.0


def test_deterministic(tiny_setup):
    vocab = tiny_setup["vocab"]
    docs = tiny_setup["train"][:40]
    seqs = [[b for b in d.text.encode()][:20] for d in docs]
    labels = [d.label.numeric() for d in docs]
    config = TrainConfig(epochs=1, d_model=8, d_hidden=8, batch_size=8, seed=4)
    a = train(seqs, labels, seqs, labels, vocab.n_ids, vocab.pad_id, config)
    b = train(seqs, labels, seqs, labels, vocab.n_ids, vocab.pad_id, config)
    assert a.history == b.history and a.losses == b.losses
    assert all(np.array_equal(x, getattr(b.params, n)) for n, x in a.params.items())


def test_tiny_model_learns(tiny_setup):
    result = tiny_setup["result"]
    assert result.best_val_accuracy >= 0.9
    assert result.history[select_checkpoint(result.history)][0] == result.best_step
    assert result.losses[-1] < result.losses[0]


def test_document_logits_aggregation(tiny_setup):
    params = tiny_setup["result"].params
    pad = tiny_setup["vocab"].pad_id
    seq = list(range(1, 30))
    mean = document_logits(params, seq, pad, window=8, stride=4, aggregation="mean")
    mx = document_logits(params, seq, pad, window=8, stride=4, aggregation="max")
    windows = [forward(params, ids=seq[a:b])[0] for a, b in [(0, 8), (4, 12), (8, 16), (12, 20), (16, 24), (20, 28), (21, 29)]]
    np.testing.assert_allclose(mean, np.mean(windows, axis=0), atol=1e-12)
    np.testing.assert_allclose(mx, np.max(windows, axis=0), atol=1e-12)
    batched = batch_document_logits(params, [seq, seq[:5]], pad, window=8, stride=4)
    np.testing.assert_allclose(batched[0], mean, atol=1e-12)
    np.testing.assert_allclose(batched[1], forward(params, ids=seq[:5])[0], atol=1e-12)
