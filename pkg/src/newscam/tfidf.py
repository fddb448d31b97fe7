"""TF-IDF vectorizer over the top-K most frequent n-gram terms."""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .tokenization import basic_tokenize, english_stopwords, ngrams, remove_stopwords


@dataclass(frozen=True)
class TfidfConfig:
    max_features: int = 300
    ngram: int = 1
    stopword_removal: bool = True

    def __post_init__(self):
        if self.max_features < 1:
            raise ValueError("max_features must be positive")
        if self.ngram not in (1, 2):
            raise ValueError("ngram must be 1 or 2")


@dataclass(frozen=True)
class TfidfModel:
    terms: tuple[str, ...]
    idf: np.ndarray
    config: TfidfConfig

    @property
    def index(self) -> dict[str, int]:
        return {t: i for i, t in enumerate(self.terms)}

    def to_json(self) -> dict:
        return {
            "terms": list(self.terms),
            "idf": [float(x) for x in self.idf],
            "config": {
                "max_features": self.config.max_features,
                "ngram": self.config.ngram,
                "stopword_removal": self.config.stopword_removal,
            },
        }

    @classmethod
    def from_json(cls, obj: dict) -> TfidfModel:
        return cls(tuple(obj["terms"]), np.asarray(obj["idf"], dtype=np.float64),
                   TfidfConfig(**obj["config"]))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_json(), indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> TfidfModel:
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def analyze(text: str, config: TfidfConfig, stoplist=None) -> list[str]:
    tokens = basic_tokenize(text, lowercase=True)
    if config.stopword_removal:
        tokens = remove_stopwords(tokens, english_stopwords() if stoplist is None else stoplist)
    return ngrams(tokens, config.ngram)


def fit(texts, config: TfidfConfig = TfidfConfig(), stoplist=None) -> TfidfModel:
    """Select the ``max_features`` most frequent terms and compute smoothed IDF.

    Frequency is the raw count over the whole training set; ties are broken
    lexicographically. ``idf = ln((1 + N) / (1 + df)) + 1``.
    """
    texts = list(texts)
    if not texts:
        raise ValueError("cannot fit TF-IDF on an empty training set")
    if stoplist is None and config.stopword_removal:
        stoplist = english_stopwords()
    counts = Counter()
    df = Counter()
    for text in texts:
        c = Counter(analyze(text, config, stoplist))
        counts.update(c)
        df.update(c.keys())
    if not counts:
        raise ValueError("empty vocabulary after tokenization and filtering")
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:config.max_features]
    terms = tuple(sorted(t for t, _ in ranked))
    n = len(texts)
    idf = np.array([math.log((1 + n) / (1 + df[t])) + 1.0 for t in terms])
    return TfidfModel(terms, idf, config)


def transform(model: TfidfModel, texts, stoplist=None) -> np.ndarray:
    """L2-normalised tf*idf rows, one per text; all-zero rows stay zero."""
    if isinstance(texts, str):
        texts = [texts]
    if stoplist is None and model.config.stopword_removal:
        stoplist = english_stopwords()
    index = model.index
    out = np.zeros((len(texts), len(model.terms)))
    for row, text in enumerate(texts):
        for term, count in Counter(analyze(text, model.config, stoplist)).items():
            j = index.get(term)
            if j is not None:
                out[row, j] = count * model.idf[j]
    norms = np.linalg.norm(out, axis=1)
    nz = norms > 0
    out[nz] /= norms[nz, None]
    return out
