"""Static word-embedding tables and global average pooling."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)


class EmbeddingFormatError(ValueError):
    pass


@dataclass(frozen=True)
class EmbeddingTable:
    tokens: tuple[str, ...]
    vectors: np.ndarray  # (V, D)
    index: dict[str, int] = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        if self.vectors.ndim != 2 or self.vectors.shape[0] != len(self.tokens):
            raise ValueError("vectors must be (len(tokens), dim)")
        if self.index is None:
            index = {}
            for i, t in enumerate(self.tokens):
                index.setdefault(t, i)
            object.__setattr__(self, "index", index)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self.index

    def vector_of(self, token: str) -> np.ndarray:
        return self.vectors[self.index[token]]


def _parse_header(parts):
    if len(parts) != 2:
        return None
    try:
        count, dim = int(parts[0]), int(parts[1])
    except ValueError:
        return None
    return (count, dim) if count >= 0 and dim > 0 else None


def load_embeddings(path, dtype=np.float64) -> EmbeddingTable:
    """Read a text embedding file: optional ``count dim`` header, then ``token v1 .. vD``.

    Fields are separated by single spaces. A first line consisting of exactly two
    integers is taken as the header. Later duplicates of a token are ignored.
    """
    tokens = []
    rows = []
    seen = set()
    dim = None
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            parts = line.rstrip(" ").split(" ")
            if lineno == 1:
                header = _parse_header(parts)
                if header is not None:
                    dim = header[1]
                    continue
            if dim is None:
                dim = len(parts) - 1
                if dim < 1:
                    raise EmbeddingFormatError(f"{path}:{lineno}: no vector values")
            if len(parts) - 1 != dim:
                raise EmbeddingFormatError(
                    f"{path}:{lineno}: expected {dim} values, got {len(parts) - 1}")
            token = parts[0]
            if token in seen:
                continue
            try:
                vec = [float(x) for x in parts[1:]]
            except ValueError as exc:
                raise EmbeddingFormatError(f"{path}:{lineno}: {exc}") from None
            seen.add(token)
            tokens.append(token)
            rows.append(vec)
    if dim is None:
        raise EmbeddingFormatError(f"{path}: no embeddings found")
    vectors = np.asarray(rows, dtype=dtype).reshape(len(rows), dim)
    return EmbeddingTable(tuple(tokens), vectors)


def save_embeddings(table: EmbeddingTable, path, header: bool = True):
    # repr() round-trips float64 exactly
    with Path(path).open("w", encoding="utf-8") as fh:
        if header:
            fh.write(f"{len(table)} {table.dim}\n")
        for tok, vec in zip(table.tokens, table.vectors):
            fh.write(tok + " " + " ".join(repr(float(x)) for x in vec) + "\n")


@dataclass(frozen=True)
class TokenMatrix:
    """Per-token vectors before pooling (L x D) and a 0/1 mask over rows."""

    rows: np.ndarray
    mask: np.ndarray
    tokens: tuple[str, ...] = ()
    skipped: int = 0

    def __post_init__(self):
        if len(self.rows) != len(self.mask):
            raise ValueError("rows and mask differ in length")

    @property
    def is_empty(self) -> bool:
        return not np.any(self.mask)


def embed_sequence(tokens, table: EmbeddingTable) -> TokenMatrix:
    """Look up each token; out-of-vocabulary tokens are skipped and counted."""
    known = [t for t in tokens if t in table.index]
    idx = [table.index[t] for t in known]
    rows = table.vectors[idx] if idx else np.zeros((0, table.dim), dtype=table.vectors.dtype)
    return TokenMatrix(rows, np.ones(len(known), dtype=np.int8), tuple(known),
                       skipped=len(tokens) - len(known))


def gap_pool(m: TokenMatrix) -> np.ndarray:
    """Mean over masked-in rows; a zero vector (with a logged warning) if none."""
    mask = np.asarray(m.mask, dtype=bool)
    dim = m.rows.shape[1] if m.rows.ndim == 2 else 0
    if not mask.any():
        logger.warning("gap_pool: no masked-in rows, returning zero vector")
        return np.zeros(dim)
    return m.rows[mask].mean(axis=0)


def table_from_matrix(tokens, matrix) -> EmbeddingTable:
    return EmbeddingTable(tuple(tokens), np.asarray(matrix, dtype=np.float64))
