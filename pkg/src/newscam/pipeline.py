"""Representation backends: TF-IDF, pooled static embeddings, pooled encoder output."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import tfidf
from .embeddings import EmbeddingTable, TokenMatrix, embed_sequence, gap_pool
from .encoder import EncoderWeights, forward
from .tokenization import (
    WordPieceVocab,
    basic_tokenize,
    encode,
    encoded_tokens,
    wordpiece_tokenize,
)


@dataclass
class RepresentationStats:
    documents: int = 0
    empty_documents: int = 0
    tokens: int = 0
    skipped_tokens: int = 0
    truncated_documents: int = 0

    def to_json(self) -> dict:
        return dict(self.__dict__)


@dataclass
class TfidfBackend:
    config: tfidf.TfidfConfig
    model: tfidf.TfidfModel | None = None
    stats: RepresentationStats = field(default_factory=RepresentationStats)
    name = "tfidf"

    def fit(self, texts):
        self.model = tfidf.fit(texts, self.config)
        return self

    def represent(self, texts) -> np.ndarray:
        if self.model is None:
            raise RuntimeError("TF-IDF backend must be fitted on the training set first")
        Z = tfidf.transform(self.model, list(texts))
        self.stats.documents += len(Z)
        self.stats.empty_documents += int(np.sum(~Z.any(axis=1)))
        return Z


@dataclass
class StaticBackend:
    """Mean of per-token vectors; out-of-vocabulary tokens are skipped."""

    table: EmbeddingTable
    vocab: WordPieceVocab | None = None  # set to tokenize with WordPiece
    lowercase: bool = True
    stats: RepresentationStats = field(default_factory=RepresentationStats)
    name = "static"

    def fit(self, texts):
        return self

    def tokenize(self, text: str) -> list[str]:
        if self.vocab is not None:
            return wordpiece_tokenize(text, self.vocab)
        return basic_tokenize(text, lowercase=self.lowercase)

    def token_matrix(self, text: str) -> TokenMatrix:
        return embed_sequence(self.tokenize(text), self.table)

    def represent(self, texts) -> np.ndarray:
        out = []
        for text in texts:
            m = self.token_matrix(text)
            self.stats.documents += 1
            self.stats.tokens += len(m.rows) + m.skipped
            self.stats.skipped_tokens += m.skipped
            self.stats.empty_documents += m.is_empty
            out.append(gap_pool(m))
        return np.array(out).reshape(len(out), self.table.dim)


@dataclass
class BertBackend:
    """Encoder output averaged over content positions ([CLS]/[SEP]/pads excluded)."""

    weights: EncoderWeights
    vocab: WordPieceVocab
    max_length: int = 512
    workers: int = 1
    stats: RepresentationStats = field(default_factory=RepresentationStats)
    name = "bert"

    def fit(self, texts):
        return self

    def encode_text(self, text: str):
        pieces = wordpiece_tokenize(text, self.vocab)
        return encode(pieces, self.vocab, self.max_length), len(pieces)

    def token_matrix(self, text: str) -> TokenMatrix:
        enc, _ = self.encode_text(text)
        out = forward(enc, self.weights)
        specials = {self.vocab.cls_id, self.vocab.sep_id, self.vocab.pad_id}
        content = np.array([bool(m) and i not in specials
                            for i, m in zip(enc.input_ids, enc.attention_mask)], dtype=np.int8)
        return TokenMatrix(out.rows, content, tuple(encoded_tokens(enc, self.vocab)))

    def represent(self, texts) -> np.ndarray:
        texts = list(texts)
        if self.workers > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                matrices = list(pool.map(self.token_matrix, texts))
        else:
            matrices = [self.token_matrix(t) for t in texts]
        out = []
        for text, m in zip(texts, matrices):
            self.stats.documents += 1
            self.stats.tokens += int(m.mask.sum())
            self.stats.empty_documents += m.is_empty
            self.stats.truncated_documents += self.encode_text(text)[1] > self.max_length - 2
            out.append(gap_pool(m))
        return np.array(out).reshape(len(out), self.weights.config.hidden)
