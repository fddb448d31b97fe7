"""CSV ingestion, dateline cleaning and seeded train/test splitting."""

from __future__ import annotations

import csv
import json
import logging
import math
import sys
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

FAKE = 0
REAL = 1
LABEL_NAMES = {FAKE: "fake", REAL: "real"}

REUTERS_MARKER = "(Reuters) -"

# Kaggle articles routinely exceed the csv module's 128 KiB default.
csv.field_size_limit(min(sys.maxsize, 2**31 - 1))


class CorpusFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Document:
    text: str
    label: int

    def __post_init__(self):
        if self.label not in (FAKE, REAL):
            raise ValueError(f"label must be 0 (fake) or 1 (real), got {self.label!r}")


@dataclass(frozen=True)
class Corpus:
    documents: tuple[Document, ...] = ()
    provenance: tuple[str, ...] = ()
    dropped: int = 0

    def __len__(self):
        return len(self.documents)

    def __iter__(self):
        return iter(self.documents)

    def __getitem__(self, i):
        return self.documents[i]

    @property
    def texts(self) -> list[str]:
        return [d.text for d in self.documents]

    @property
    def labels(self) -> np.ndarray:
        return np.array([d.label for d in self.documents], dtype=np.int64)

    def __add__(self, other: Corpus) -> Corpus:
        return Corpus(
            self.documents + other.documents,
            self.provenance + other.provenance,
            self.dropped + other.dropped,
        )


@dataclass(frozen=True)
class SplitCorpus:
    train: Corpus
    test: Corpus
    seed: int
    train_fraction: float
    train_indices: tuple[int, ...] = field(default=(), repr=False)
    test_indices: tuple[int, ...] = field(default=(), repr=False)

    def manifest(self, **extra) -> dict:
        """JSON-ready description of the split; ``extra`` keys are merged in."""
        out = {
            "seed": self.seed,
            "train_fraction": self.train_fraction,
            "n_train": len(self.train_indices),
            "n_test": len(self.test_indices),
            "train_indices": list(self.train_indices),
            "test_indices": list(self.test_indices),
        }
        out.update(extra)
        return out


def load_csv(path, label: int) -> Corpus:
    """Read one labelled CSV file, one Document per data row.

    Only the ``text`` column is used. Rows whose text is empty or blank are
    dropped and counted in ``Corpus.dropped``.
    """
    path = Path(path)
    docs = []
    dropped = 0
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or "text" not in reader.fieldnames:
                raise CorpusFormatError(f"{path}: no 'text' column in header")
            for row in reader:
                text = row["text"]
                if text is None or not text.strip():
                    dropped += 1
                    continue
                docs.append(Document(text, label))
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc}") from exc
    if dropped:
        logger.info("%s: dropped %d rows with empty text", path.name, dropped)
    return Corpus(tuple(docs), (path.name,), dropped)


def clean_reuters_prefix(doc: Document) -> Document:
    """Strip everything up to and including the first ``(Reuters) -``."""
    pos = doc.text.find(REUTERS_MARKER)
    if pos < 0:
        return doc
    return replace(doc, text=doc.text[pos + len(REUTERS_MARKER):].lstrip())


def clean_corpus(corpus: Corpus) -> Corpus:
    """Apply ``clean_reuters_prefix`` to every document, dropping any left empty."""
    kept = []
    for doc in corpus:
        doc = clean_reuters_prefix(doc)
        if doc.text.strip():
            kept.append(doc)
    dropped = len(corpus) - len(kept)
    if dropped:
        logger.info("dropped %d documents left empty by cleaning", dropped)
    return Corpus(tuple(kept), corpus.provenance, corpus.dropped + dropped)


def train_size(n: int, train_fraction: float) -> int:
    # half-up rounding; Python's round() is banker's rounding
    return int(math.floor(train_fraction * n + 0.5))


def split(corpus: Corpus, train_fraction: float = 0.8, seed: int = 0) -> SplitCorpus:
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    if seed < 0:
        raise ValueError("seed must be non-negative")
    n = len(corpus)
    if n < 2:
        raise ValueError(f"need at least 2 documents to split, got {n}")
    order = np.random.default_rng(seed).permutation(n)
    k = train_size(n, train_fraction)
    train_idx = tuple(int(i) for i in order[:k])
    test_idx = tuple(int(i) for i in order[k:])
    return SplitCorpus(
        train=subset(corpus, train_idx),
        test=subset(corpus, test_idx),
        seed=seed,
        train_fraction=train_fraction,
        train_indices=train_idx,
        test_indices=test_idx,
    )


def subset(corpus: Corpus, indices) -> Corpus:
    return Corpus(tuple(corpus.documents[i] for i in indices), corpus.provenance)


def class_counts(corpus: Corpus) -> dict[int, int]:
    return dict(sorted(Counter(d.label for d in corpus).items()))


def load_real_fake(real_csv, fake_csv) -> Corpus:
    """Load both files in fixed order (real first), cleaning only the real one."""
    real = clean_corpus(load_csv(real_csv, REAL))
    fake = load_csv(fake_csv, FAKE)
    return real + fake


def write_manifest(split_corpus: SplitCorpus, path, **extra) -> dict:
    manifest = split_corpus.manifest(**extra)
    Path(path).write_text(json.dumps(manifest, indent=1) + "\n", encoding="utf-8")
    return manifest


def load_split(manifest_path) -> tuple[SplitCorpus, dict]:
    """Rebuild a split from a manifest written by ``write_manifest``.

    The manifest must carry the ``real_csv``/``fake_csv`` paths it was made
    from; relative paths resolve against the manifest's directory.
    """
    manifest_path = Path(manifest_path)
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    try:
        real_csv = manifest_path.parent / manifest["real_csv"]
        fake_csv = manifest_path.parent / manifest["fake_csv"]
        train_idx = tuple(manifest["train_indices"])
        test_idx = tuple(manifest["test_indices"])
    except KeyError as exc:
        raise CorpusFormatError(f"{manifest_path}: manifest missing {exc}") from None
    corpus = load_real_fake(real_csv, fake_csv)
    if len(train_idx) + len(test_idx) != len(corpus):
        raise CorpusFormatError(
            f"{manifest_path}: manifest covers {len(train_idx) + len(test_idx)} documents "
            f"but the CSV files now yield {len(corpus)}"
        )
    sc = SplitCorpus(
        subset(corpus, train_idx),
        subset(corpus, test_idx),
        manifest["seed"],
        manifest["train_fraction"],
        train_idx,
        test_idx,
    )
    return sc, manifest
