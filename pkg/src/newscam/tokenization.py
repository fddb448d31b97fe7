"""Word-level tokenizer, stop words, n-grams and WordPiece."""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

CLS = "[CLS]"
SEP = "[SEP]"
UNK = "[UNK]"
PAD = "[PAD]"
SPECIAL_TOKENS = frozenset({CLS, SEP, UNK, PAD})
# [UNK] stands in for a real word, so it still counts as content
NON_CONTENT_TOKENS = frozenset({CLS, SEP, PAD})
MAX_WORD_CHARS = 100


def _is_punctuation(ch: str) -> bool:
    cp = ord(ch)
    # ASCII symbols like $ ^ ` are not Unicode "P*" but are still split off
    if 33 <= cp <= 47 or 58 <= cp <= 64 or 91 <= cp <= 96 or 123 <= cp <= 126:
        return True
    return unicodedata.category(ch).startswith("P")


def basic_tokenize(text: str, lowercase: bool = True) -> list[str]:
    """Split into alphanumeric runs and single punctuation characters.

    Whitespace separates tokens and is discarded. Any other character (symbols,
    control characters) is treated as a separator as well.

    >>> basic_tokenize("Trump's bill!")
    ['trump', "'", 's', 'bill', '!']
    """
    if lowercase:
        text = text.lower()
    tokens = []
    run = []
    for ch in text:
        if ch.isalnum():
            run.append(ch)
            continue
        if run:
            tokens.append("".join(run))
            run = []
        if _is_punctuation(ch):
            tokens.append(ch)
    if run:
        tokens.append("".join(run))
    return tokens


def load_wordlist(path) -> frozenset[str]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return frozenset(w.strip() for w in lines if w.strip())


def english_stopwords() -> frozenset[str]:
    data = resources.files("newscam").joinpath("data/stopwords_en.txt").read_text("utf-8")
    return frozenset(w for w in data.split() if w)


def remove_stopwords(tokens: list[str], stoplist) -> list[str]:
    return [t for t in tokens if t not in stoplist]


def ngrams(tokens: list[str], n: int) -> list[str]:
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if n == 1:
        return list(tokens)
    return [" ".join(tokens[i:i + n]) for i in range(len(tokens) - n + 1)]


@dataclass(frozen=True)
class WordPieceVocab:
    tokens: tuple[str, ...]
    id_of: dict[str, int] = field(repr=False, compare=False)

    @classmethod
    def from_tokens(cls, tokens) -> WordPieceVocab:
        tokens = tuple(tokens)
        id_of = {}
        for i, tok in enumerate(tokens):
            if not tok:
                raise ValueError(f"empty token at line {i + 1}")
            if tok in id_of:
                raise ValueError(f"duplicate token {tok!r} at line {i + 1}")
            id_of[tok] = i
        missing = [s for s in (CLS, SEP, UNK, PAD) if s not in id_of]
        if missing:
            raise ValueError(f"vocabulary lacks special tokens: {', '.join(missing)}")
        return cls(tokens, id_of)

    @classmethod
    def load(cls, path) -> WordPieceVocab:
        # one token per line, line number is the id
        text = Path(path).read_text(encoding="utf-8")
        lines = text.split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        return cls.from_tokens(line.rstrip("\r") for line in lines)

    def save(self, path):
        Path(path).write_text("".join(t + "\n" for t in self.tokens), encoding="utf-8")

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, tok):
        return tok in self.id_of

    @property
    def cls_id(self):
        return self.id_of[CLS]

    @property
    def sep_id(self):
        return self.id_of[SEP]

    @property
    def unk_id(self):
        return self.id_of[UNK]

    @property
    def pad_id(self):
        return self.id_of[PAD]


def wordpiece_word(word: str, vocab: WordPieceVocab) -> list[str]:
    """Greedy longest-match-first segmentation of a single word."""
    if len(word) > MAX_WORD_CHARS:
        return [UNK]
    pieces = []
    start = 0
    while start < len(word):
        end = len(word)
        piece = None
        while start < end:
            sub = word[start:end]
            if start > 0:
                sub = "##" + sub
            if sub in vocab.id_of:
                piece = sub
                break
            end -= 1
        if piece is None:
            return [UNK]
        pieces.append(piece)
        start = end
    return pieces


def wordpiece_tokenize(text: str, vocab: WordPieceVocab) -> list[str]:
    out = []
    for word in basic_tokenize(text, lowercase=True):
        out.extend(wordpiece_word(word, vocab))
    return out


@dataclass(frozen=True)
class EncodedSequence:
    input_ids: tuple[int, ...]
    segment_ids: tuple[int, ...]
    attention_mask: tuple[int, ...]

    def __len__(self):
        return len(self.input_ids)


def encode(tokens: list[str], vocab: WordPieceVocab, max_length: int = 512,
           pad_to: int | None = None) -> EncodedSequence:
    """``[CLS] tokens [SEP]``, truncated to ``max_length``, optionally padded.

    Tokens missing from the vocabulary map to ``[UNK]``.
    """
    if max_length < 3:
        raise ValueError("max_length must be at least 3")
    body = [vocab.id_of.get(t, vocab.unk_id) for t in tokens[:max_length - 2]]
    ids = [vocab.cls_id, *body, vocab.sep_id]
    mask = [1] * len(ids)
    if pad_to is not None:
        if pad_to > max_length:
            raise ValueError(f"pad_to={pad_to} exceeds max_length={max_length}")
        n_pad = max(0, pad_to - len(ids))
        ids += [vocab.pad_id] * n_pad
        mask += [0] * n_pad
    return EncodedSequence(tuple(ids), (0,) * len(ids), tuple(mask))


def encoded_tokens(encoded: EncodedSequence, vocab: WordPieceVocab) -> list[str]:
    return [vocab.tokens[i] for i in encoded.input_ids]
