"""
Byte-level BPE and sliding windows
==================================

Train a small byte-level BPE vocabulary, look at how it splits text, and
plan the overlapping windows a 512-token classifier uses on long inputs.
"""

from attrlex.tokenizer import decode_text, encode, sliding_windows, token_text, train_bpe

corpus = [
    "i feel so alone tonight and nobody listens",
    "the game last night was great, the team played well",
    "i can't sleep, everything feels pointless anymore",
]

# 256 byte tokens plus 80 learned merges
vocab = train_bpe(corpus * 5, 336)
print("vocabulary size:", vocab.size, "| pad id:", vocab.pad_id)
print("first merges:", [(a + b).decode() for a, b in vocab.merges[:8]])

# Merges may cross spaces: there is no whitespace pre-tokenization.
seq = encode(vocab, "nobody listens anymore ☕")
print([token_text(vocab, t) for t in seq.ids])
print("byte offsets:", seq.offsets)
assert decode_text(vocab, seq.ids) == "nobody listens anymore ☕"

# A 1000-token document becomes three windows; the last one is pulled back
# so it still holds 512 tokens.
print(sliding_windows(1000, 512, 256).windows)
