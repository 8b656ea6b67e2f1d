"""
Training the encoder classifier
===============================

Generate a small synthetic corpus with planted per-class signal words, train
the one-block numpy transformer with AdamW, and keep the checkpoint with the
best validation accuracy.
"""

import numpy as np

from attrlex.corpus import SynthSpec, generate_synthetic_corpus
from attrlex.tokenizer import encode, train_bpe
from attrlex.training import TrainConfig, batch_document_logits, train

spec = SynthSpec(docs_per_class=120)
train_docs, val_docs, test_docs = generate_synthetic_corpus(spec, seed=1)
print(len(train_docs), "train /", len(val_docs), "val /", len(test_docs), "test")
print("a class-3 document:", next(d.text for d in train_docs if d.label.numeric() == 3)[:90], "...")

vocab = train_bpe([d.text for d in train_docs], 600)


def tokenized(docs):
    return [encode(vocab, d.text).ids for d in docs], [d.label.numeric() for d in docs]


(tr, trl), (va, val), (te, tel) = tokenized(train_docs), tokenized(val_docs), tokenized(test_docs)

config = TrainConfig(epochs=3, d_model=32, d_hidden=64, seed=1)
result = train(tr, trl, va, val, vocab.n_ids, vocab.pad_id, config)

# one (step, val accuracy) pair per checkpoint
for step, acc in result.history[::5]:
    print(f"step {step:4d}  val accuracy {acc:.3f}")
print("selected step", result.best_step, "with val accuracy", result.best_val_accuracy)

logits = batch_document_logits(result.params, te, vocab.pad_id)
print("test accuracy:", np.mean(logits.argmax(axis=1) == np.array(tel)))
