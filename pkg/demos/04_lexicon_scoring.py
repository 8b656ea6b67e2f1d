"""
From attributions to a lexicon classifier
=========================================

Attribute a trained model over its training set, aggregate the scores per
token and label, then classify new documents by summing representative
values, with or without TF-IDF weights. No model runs at scoring time.
"""

from attrlex.attribution import EncoderClassifier, IgConfig, TokenizedDocument, attribute_corpus
from attrlex.corpus import SynthSpec, generate_synthetic_corpus
from attrlex.evaluation import EvalDocument, evaluate_protocol, report_text
from attrlex.lexicon import aggregate_records, top_tokens
from attrlex.scorer import fit_tfidf
from attrlex.tokenizer import encode, token_text, train_bpe
from attrlex.training import TrainConfig, train

train_docs, val_docs, test_docs = generate_synthetic_corpus(SynthSpec(docs_per_class=100), seed=2)
vocab = train_bpe([d.text for d in train_docs], 500)
ids = {d.doc_id: encode(vocab, d.text).ids for d in train_docs + val_docs + test_docs}

result = train(
    [ids[d.doc_id] for d in train_docs], [d.label.numeric() for d in train_docs],
    [ids[d.doc_id] for d in val_docs], [d.label.numeric() for d in val_docs],
    vocab.n_ids, vocab.pad_id, TrainConfig(epochs=3, d_model=32, d_hidden=64, seed=2),
)
model = EncoderClassifier(result.params, vocab.pad_id)

docs = [TokenizedDocument(d.doc_id, ids[d.doc_id], d.label.numeric()) for d in train_docs]
records = list(attribute_corpus(model, docs, IgConfig(steps=32)))
lexicon = aggregate_records(records, 4)
print(len(records), "attribution records,", len(lexicon), "tokens in the lexicon")

for t in top_tokens(lexicon, 6):
    st = lexicon.stats[t]
    means = " ".join(f"{st.mean(l):+.3f}" for l in range(4))
    print(f"{token_text(vocab, t)!r:>14}  mean per label: {means}")

tfidf = fit_tfidf(ids[d.doc_id] for d in train_docs)
test = [EvalDocument(d.doc_id, ids[d.doc_id], d.label.numeric()) for d in test_docs]
rows = evaluate_protocol(lexicon, tfidf, {"test": test}, vocab.n_ids)
print(report_text(rows))
