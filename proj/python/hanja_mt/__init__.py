"""Hanja restoration and Hanja-to-Korean translation."""

from ._core import (
    Error,
    NotFoundError,
    Tokenizer,
    Translator,
    Vocab,
    __version__,
    bleu,
    bundled_corpus,
    chrf,
    hits_at_k,
    lcs_length,
    mask_ngram,
    nmf,
    reference_model_config,
    parameter_count,
    prepare_corpus,
    rouge_l,
    topics,
    train,
)

__all__ = [
    "Error",
    "NotFoundError",
    "Tokenizer",
    "Translator",
    "Vocab",
    "__version__",
    "bleu",
    "bundled_corpus",
    "chrf",
    "hits_at_k",
    "lcs_length",
    "mask_ngram",
    "nmf",
    "reference_model_config",
    "parameter_count",
    "prepare_corpus",
    "rouge_l",
    "topics",
    "train",
]
