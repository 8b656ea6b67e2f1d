import numpy as np
import pytest

from attrlex.attribution import EncoderClassifier
from attrlex.corpus import SynthSpec, generate_synthetic_corpus
from attrlex.tokenizer import encode, train_bpe
from attrlex.training import TrainConfig, train

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def tiny_setup():
    """A small corpus, tokenizer and trained model shared by unit tests."""
    spec = SynthSpec(docs_per_class=40, length_range=(6, 14), background_size=60)
    train_docs, val_docs, test_docs = generate_synthetic_corpus(spec, seed=3)
    vocab = train_bpe([d.text for d in train_docs], 400)

    def enc(docs):
        return [encode(vocab, d.text).ids for d in docs], [d.label.numeric() for d in docs]

    tr, trl = enc(train_docs)
    va, val = enc(val_docs)
    config = TrainConfig(epochs=3, d_model=16, d_hidden=24, batch_size=8, seed=1)
    result = train(tr, trl, va, val, vocab.n_ids, vocab.pad_id, config)
    return {
        "spec": spec,
        "train": train_docs,
        "val": val_docs,
        "test": test_docs,
        "vocab": vocab,
        "result": result,
        "model": EncoderClassifier(result.params, vocab.pad_id),
        "config": config,
    }
