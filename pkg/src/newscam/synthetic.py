"""Synthetic fixtures for desk-scale checks: keyword corpora, toy vocabularies, blobs."""

from __future__ import annotations

import csv
import string
from pathlib import Path

import numpy as np

from .corpus import FAKE, REAL, Corpus, Document
from .tokenization import CLS, PAD, SEP, UNK, WordPieceVocab


def _words(rng, n, length, taken):
    out = []
    while len(out) < n:
        w = "".join(rng.choice(list(string.ascii_lowercase), size=length))
        if w not in taken:
            taken.add(w)
            out.append(w)
    return out


def keyword_corpus(n_per_class: int = 500, seed: int = 0, n_keywords: int = 10,
                   n_shared: int = 40, doc_len: tuple[int, int] = (20, 40),
                   keyword_share: float = 0.8):
    """Two classes drawing keywords from disjoint word lists, plus shared filler.

    Returns ``(corpus, words)`` where ``words`` is every word used, in a fixed order.
    """
    rng = np.random.default_rng(seed)
    taken = set()
    fake_words = _words(rng, n_keywords, 6, taken)
    real_words = _words(rng, n_keywords, 6, taken)
    shared = _words(rng, n_shared, 5, taken)
    docs = []
    for label, own in ((REAL, real_words), (FAKE, fake_words)):
        for _ in range(n_per_class):
            n = int(rng.integers(doc_len[0], doc_len[1] + 1))
            pick_own = rng.random(n) < keyword_share
            words = [own[rng.integers(len(own))] if k else shared[rng.integers(len(shared))]
                     for k in pick_own]
            docs.append(Document(" ".join(words) + ".", label))
    return Corpus(tuple(docs), ("synthetic",)), real_words + fake_words + shared


def toy_vocab(words) -> WordPieceVocab:
    """Specials, punctuation, single letters and their ``##`` forms, then ``words``."""
    tokens = [PAD, UNK, CLS, SEP]
    tokens += list(string.punctuation)
    tokens += list(string.ascii_lowercase) + list(string.digits)
    tokens += ["##" + c for c in string.ascii_lowercase + string.digits]
    seen = set(tokens)
    tokens += [w for w in words if not (w in seen or seen.add(w))]
    return WordPieceVocab.from_tokens(tokens)


def blobs(n_per_class: int, dim: int, separation: float = 8.0, noise: float = 1.0,
          seed: int = 0):
    """Two Gaussian clouds at ``+/- separation/2`` along a random unit direction."""
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(dim)
    u /= np.linalg.norm(u)
    Z = rng.standard_normal((2 * n_per_class, dim)) * noise
    y = np.repeat([0, 1], n_per_class)
    Z += np.where(y[:, None] == 1, 1, -1) * (separation / 2) * u
    order = rng.permutation(len(y))
    return Z[order], y[order]


def write_csv(path, texts, extra_columns: bool = True):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["title", "text", "subject", "date"] if extra_columns else ["text"])
        for i, t in enumerate(texts):
            w.writerow([f"title {i}", t, "news", "2016-01-01"] if extra_columns else [t])
