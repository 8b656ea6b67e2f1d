"""
Longitudinal user histories
===========================

Concatenate each user's posts in timestamp order and classify very long
histories with the lexicon scorer, which has no context-length limit.
"""

from collections import Counter

from attrlex.corpus import (
    SynthSpec,
    build_longitudinal_dataset,
    build_post_dataset,
    generate_synthetic_posts,
    longitudinal_segments,
)

posts, labels = generate_synthetic_posts(SynthSpec(users_per_class=2, control_users=1), seed=4)
joined = [(p, labels[p.user_id]) for p in posts]
print(len(posts), "posts from", len(labels), "users:", Counter(l.value for l in labels.values()))

# per-post documents: only the topical subreddit
per_post = build_post_dataset(joined, subreddit_filter="SuicideWatch")
print(len(per_post), "on-topic posts")

# one document per user, posts joined by a blank line in time order
users = build_longitudinal_dataset(joined, include_control=True)
doc = users[0]
spans = longitudinal_segments(doc)
stamp = {p.text: p.timestamp for p in posts if p.user_id == doc.user_id}
print(doc.user_id, doc.label.value, "->", len(spans), "posts, timestamps", [stamp[doc.text[a:b]] for a, b in spans])
