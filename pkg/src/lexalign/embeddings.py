"""Word embedding sets stored in word2vec text format.

Rows are assumed to be ordered by descending corpus frequency, so a
word's row index doubles as its frequency rank. Loading keeps that
order; nothing here ever re-sorts the vocabulary.
"""

import gzip
import io
import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError


@dataclass(frozen=True, eq=False)
class Vocabulary:
    """Ordered token list where position encodes frequency rank."""

    words: tuple[str, ...]
    index: dict[str, int]

    @classmethod
    def from_words(cls, words) -> "Vocabulary":
        index: dict[str, int] = {}
        for i, word in enumerate(words):
            if word in index:
                raise DataError(f"duplicate token {word!r} in vocabulary")
            index[word] = i
        return cls(tuple(index), index)

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word: str) -> bool:
        return word in self.index

    def rank(self, word: str) -> int | None:
        """Frequency rank of ``word`` (its row index), or None if absent."""
        return self.index.get(word)


@dataclass(eq=False)
class EmbeddingSet:
    """A vocabulary plus its row-per-word matrix of float64 vectors."""

    vocab: Vocabulary
    matrix: np.ndarray
    normalized: bool = False

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[1])

    def __len__(self) -> int:
        return len(self.vocab)

    def lookup(self, word: str) -> np.ndarray | None:
        """Vector for ``word``, or None when the word is out of vocabulary."""
        row = self.vocab.index.get(word)
        if row is None:
            return None
        return self.matrix[row]


def _open_text(path: str):
    if str(path).endswith(".gz"):
        return io.TextIOWrapper(gzip.open(path, "rb"), encoding="utf-8", errors="strict")
    return open(path, encoding="utf-8", errors="strict")


def _looks_like_header(tokens: list[str]) -> bool:
    if len(tokens) != 2:
        return False
    try:
        int(tokens[0]), int(tokens[1])
    except ValueError:
        return False
    return True


def load_word2vec_text(path: str, limit: int | None = None) -> EmbeddingSet:
    """Load a word2vec-style text file into an EmbeddingSet.

    Every line is ``word v1 v2 ... vd`` separated by single spaces. An
    optional first line holding two integers (a ``count dim`` header) is
    detected and skipped without being checked against the body. Files
    ending in ``.gz`` are decompressed transparently.

    Args:
        path: file to read, UTF-8, optionally gzip-compressed.
        limit: keep at most this many rows (the most frequent words),
            None for all.

    Raises:
        DataError: unreadable file, invalid UTF-8, inconsistent row
            width, duplicate words, or unparseable numbers; messages name
            the offending line (and column for number parses).
    """
    if limit is not None and limit < 1:
        raise ValueError(f"limit must be positive, got {limit}")
    words: list[str] = []
    index: dict[str, int] = {}
    rows: list[list[float]] = []
    dim: int | None = None
    try:
        with _open_text(path) as handle:
            for lineno, line in enumerate(handle, start=1):
                line = line.rstrip("\r\n")
                if not line:
                    continue
                tokens = line.split(" ")
                if lineno == 1 and _looks_like_header(tokens):
                    continue
                word, values = tokens[0], tokens[1:]
                if dim is None:
                    if not values:
                        raise DataError(f"{path}: line {lineno}: no vector values")
                    dim = len(values)
                elif len(values) != dim:
                    raise DataError(
                        f"{path}: line {lineno}: expected {dim} values, found {len(values)}"
                    )
                if word in index:
                    raise DataError(f"{path}: line {lineno}: duplicate word {word!r}")
                parsed = []
                for col, token in enumerate(values, start=1):
                    try:
                        value = float(token)
                    except ValueError:
                        raise DataError(
                            f"{path}: line {lineno}: column {col}: "
                            f"cannot parse {token!r} as a number"
                        ) from None
                    if not math.isfinite(value):
                        raise DataError(
                            f"{path}: line {lineno}: column {col}: non-finite value {token!r}"
                        )
                    parsed.append(value)
                index[word] = len(words)
                words.append(word)
                rows.append(parsed)
                if limit is not None and len(words) >= limit:
                    break
    except OSError as exc:
        raise DataError(f"cannot read embeddings from {path}: {exc}") from exc
    except UnicodeDecodeError as exc:
        raise DataError(f"{path}: not valid UTF-8: {exc}") from exc
    if not words:
        raise DataError(f"{path}: no embedding rows found")
    matrix = np.array(rows, dtype=np.float64)
    return EmbeddingSet(Vocabulary(tuple(words), index), matrix)


def save_word2vec_text(embeddings: EmbeddingSet, path: str) -> None:
    """Write an EmbeddingSet back out as word2vec text with a header line.

    Values are printed with shortest round-trip precision, so loading
    the result reproduces the matrix exactly.
    """
    matrix = embeddings.matrix
    out = gzip.open(path, "wt", encoding="utf-8") if str(path).endswith(".gz") else open(
        path, "w", encoding="utf-8"
    )
    with out:
        out.write(f"{len(embeddings)} {embeddings.dim}\n")
        for word, row in zip(embeddings.vocab.words, matrix):
            out.write(word)
            for value in row:
                out.write(" " + repr(float(value)))
            out.write("\n")


def normalize_rows(embeddings: EmbeddingSet) -> EmbeddingSet:
    """Scale every vector to unit L2 norm; idempotent.

    Raises:
        DataError: naming the word whose vector is all zeros.
    """
    if embeddings.normalized:
        return embeddings
    norms = np.linalg.norm(embeddings.matrix, axis=1)
    zero = np.where(norms == 0.0)[0]
    if zero.size:
        word = embeddings.vocab.words[int(zero[0])]
        raise DataError(f"cannot normalize zero vector for word {word!r}")
    return EmbeddingSet(embeddings.vocab, embeddings.matrix / norms[:, None], normalized=True)
