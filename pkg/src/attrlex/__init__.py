"""Attribution-lexicon text screening.

Train a small classifier, attribute its predictions to tokens with
integrated gradients, aggregate the attributions into a per-token per-label
lexicon and classify documents of any length with the lexicon alone.
"""

from .attribution import (
    AttributionRecord,
    EncoderClassifier,
    IgConfig,
    LinearTokenModel,
    TokenizedDocument,
    attribute_corpus,
    completeness_report,
    integrated_gradients_embedding,
)
from .corpus import (
    LabeledDocument,
    PostRecord,
    RiskLabel,
    SynthSpec,
    build_longitudinal_dataset,
    build_post_dataset,
    generate_synthetic_corpus,
    generate_synthetic_posts,
    load_and_join,
)
from .evaluation import confusion, evaluate_protocol, macro_metrics
from .lexicon import Lexicon, aggregate_records, histogram_export, merge, representative_value
from .model import ModelConfig, ModelParams, forward, loss_and_grads
from .optim import AdamWConfig, OptimizerState, adamw_step
from .scorer import ScoringConfig, TfidfModel, classify, fit_tfidf, group_label, score_document, tfidf_weight
from .tokenizer import BpeVocab, TokenSequence, decode, encode, sliding_windows, train_bpe
from .training import TrainConfig, train

__version__ = "0.1.0"
