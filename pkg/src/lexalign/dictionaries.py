"""Training dictionaries: expert TSV files, shared-string pairs, phrase pairs.

A dictionary is just an ordered list of (source token, target token)
pairs. Resolving one against a pair of normalized embedding sets yields
the paired matrices the aligners are fitted on; pairs with a side
missing from its vocabulary are dropped and counted.
"""

import logging
import re
from dataclasses import dataclass
from itertools import islice

import numpy as np

from .embeddings import EmbeddingSet, Vocabulary
from .errors import DataError

logger = logging.getLogger(__name__)

PROVENANCES = ("expert", "pseudo", "custom")

_ASCII_WS = re.compile(r"[ \t\r\n\f\v]+")


@dataclass(eq=False)
class WordDictionary:
    """Ordered (source, target) token pairs; sources may repeat."""

    pairs: tuple[tuple[str, str], ...]
    provenance: str = "custom"

    def __post_init__(self) -> None:
        if self.provenance not in PROVENANCES:
            raise ValueError(
                f"provenance must be one of {PROVENANCES}, got {self.provenance!r}"
            )

    def __len__(self) -> int:
        return len(self.pairs)


@dataclass(eq=False)
class PairedMatrices:
    """Row-aligned source/target matrices for the pairs that resolved.

    Every row is unit norm because resolution reads from normalized
    embedding sets. ``pairs`` keeps the surviving token pairs in order.
    """

    x: np.ndarray
    y: np.ndarray
    pairs: tuple[tuple[str, str], ...]
    n_dropped: int = 0

    @property
    def n(self) -> int:
        return int(self.x.shape[0])


@dataclass(eq=False)
class PhrasePairs:
    """Line-aligned tokenized sentences in two languages."""

    source_sentences: list[list[str]]
    target_sentences: list[list[str]]

    @property
    def count(self) -> int:
        return len(self.source_sentences)

    def __len__(self) -> int:
        return len(self.source_sentences)


def load_tsv_dictionary(path: str) -> WordDictionary:
    """Read ``source<TAB>target`` lines into an expert dictionary.

    Each line must contain exactly one tab and two non-empty fields.
    Repeated source tokens are kept: a source may have several valid
    translations.
    """
    pairs: list[tuple[str, str]] = []
    try:
        with open(path, encoding="utf-8", errors="strict") as handle:
            for lineno, line in enumerate(handle, start=1):
                line = line.rstrip("\r\n")
                if line.count("\t") != 1:
                    raise DataError(
                        f"{path}: line {lineno}: expected exactly one tab, "
                        f"found {line.count(chr(9))}"
                    )
                source, target = line.split("\t")
                if not source or not target:
                    raise DataError(f"{path}: line {lineno}: empty field")
                pairs.append((source, target))
    except OSError as exc:
        raise DataError(f"cannot read dictionary from {path}: {exc}") from exc
    except UnicodeDecodeError as exc:
        raise DataError(f"{path}: not valid UTF-8: {exc}") from exc
    if not pairs:
        raise DataError(f"{path}: dictionary is empty")
    return WordDictionary(tuple(pairs), provenance="expert")


def build_pseudo_dictionary(
    src_vocab: Vocabulary,
    tgt_vocab: Vocabulary,
    max_pairs: int | None = None,
) -> WordDictionary:
    """Pair every token spelled identically in both vocabularies.

    Matching is byte-identical: no case folding, no accent stripping.
    Pairs come out ordered by source frequency rank. ``max_pairs`` caps
    the list after ordering.
    """
    pairs = tuple(
        (word, word) for word in src_vocab.words if word in tgt_vocab.index
    )
    if not pairs:
        raise DataError("no identically spelled tokens shared by the two vocabularies")
    if max_pairs is not None:
        pairs = pairs[:max_pairs]
    logger.info("pseudo dictionary: %d shared tokens", len(pairs))
    return WordDictionary(pairs, provenance="pseudo")


def resolve(
    dictionary: WordDictionary,
    src: EmbeddingSet,
    tgt: EmbeddingSet,
) -> PairedMatrices:
    """Turn token pairs into row-aligned unit-norm matrices.

    Requires both embedding sets to be normalized. Pairs with either
    side out of vocabulary are dropped; counts go to the log. Order of
    the surviving pairs follows the dictionary.
    """
    if not src.normalized or not tgt.normalized:
        raise ValueError("resolve requires normalized embedding sets on both sides")
    kept: list[tuple[str, str]] = []
    x_rows: list[int] = []
    y_rows: list[int] = []
    miss_src = miss_tgt = 0
    for source, target in dictionary.pairs:
        i = src.vocab.index.get(source)
        j = tgt.vocab.index.get(target)
        if i is None:
            miss_src += 1
            continue
        if j is None:
            miss_tgt += 1
            continue
        kept.append((source, target))
        x_rows.append(i)
        y_rows.append(j)
    dropped = miss_src + miss_tgt
    logger.info(
        "resolved %d/%d dictionary pairs (%d source misses, %d target misses)",
        len(kept), len(dictionary.pairs), miss_src, miss_tgt,
    )
    if not kept:
        raise DataError(
            f"no dictionary pair survived resolution: {len(dictionary.pairs)} pairs, "
            f"{miss_src} missing sources, {miss_tgt} missing targets"
        )
    return PairedMatrices(
        x=src.matrix[x_rows],
        y=tgt.matrix[y_rows],
        pairs=tuple(kept),
        n_dropped=dropped,
    )


def sentence_vector(tokens, embeddings: EmbeddingSet) -> np.ndarray | None:
    """Unit-normalized sum of the in-vocabulary token vectors.

    Returns None when no token is in vocabulary or the sum's norm falls
    below 1e-10 (mutually cancelling vectors carry no signal).
    """
    if not embeddings.normalized:
        raise ValueError("sentence_vector requires a normalized embedding set")
    total = None
    for token in tokens:
        row = embeddings.vocab.index.get(token)
        if row is None:
            continue
        vec = embeddings.matrix[row]
        total = vec.copy() if total is None else total + vec
    if total is None:
        return None
    norm = float(np.linalg.norm(total))
    if norm < 1e-10:
        return None
    return total / norm


def _tokenize(line: str) -> list[str]:
    return [token for token in _ASCII_WS.split(line.lower()) if token]


def load_aligned_corpus(
    src_path: str,
    tgt_path: str,
    max_pairs: int | None = None,
    skip: int = 0,
) -> PhrasePairs:
    """Read two line-aligned text files into tokenized sentence pairs.

    Line i of one file translates line i of the other. Tokenization is
    lowercasing plus splitting on ASCII whitespace. Reading stops at the
    shorter file; ``skip`` leading pairs are discarded before up to
    ``max_pairs`` are kept.
    """
    if skip < 0:
        raise ValueError(f"skip must be non-negative, got {skip}")
    if max_pairs is not None and max_pairs < 1:
        raise ValueError(f"max_pairs must be positive, got {max_pairs}")
    source: list[list[str]] = []
    target: list[list[str]] = []
    try:
        with open(src_path, encoding="utf-8", errors="strict") as sf, open(
            tgt_path, encoding="utf-8", errors="strict"
        ) as tf:
            paired = islice(zip(sf, tf), skip, None)
            for src_line, tgt_line in paired:
                source.append(_tokenize(src_line))
                target.append(_tokenize(tgt_line))
                if max_pairs is not None and len(source) >= max_pairs:
                    break
    except OSError as exc:
        raise DataError(f"cannot read aligned corpus: {exc}") from exc
    except UnicodeDecodeError as exc:
        raise DataError(f"aligned corpus is not valid UTF-8: {exc}") from exc
    if not source:
        raise DataError(
            f"no aligned sentence pairs read from {src_path} and {tgt_path}"
            f" (skip={skip})"
        )
    return PhrasePairs(source, target)


def build_phrase_matrices(
    pairs: PhrasePairs,
    src: EmbeddingSet,
    tgt: EmbeddingSet,
) -> PairedMatrices:
    """Sentence-vector both sides of each pair, dropping pairs with a missing side.

    Surviving pairs keep corpus order; their whitespace-joined texts are
    recorded so duplicates stay identifiable.
    """
    kept: list[tuple[str, str]] = []
    x_rows: list[np.ndarray] = []
    y_rows: list[np.ndarray] = []
    dropped = 0
    for src_tokens, tgt_tokens in zip(pairs.source_sentences, pairs.target_sentences):
        sv = sentence_vector(src_tokens, src)
        tv = sentence_vector(tgt_tokens, tgt)
        if sv is None or tv is None:
            dropped += 1
            continue
        kept.append((" ".join(src_tokens), " ".join(tgt_tokens)))
        x_rows.append(sv)
        y_rows.append(tv)
    logger.info("phrase matrices: kept %d/%d pairs", len(kept), pairs.count)
    if not kept:
        raise DataError(
            f"all {pairs.count} sentence pairs dropped: no in-vocabulary tokens"
        )
    return PairedMatrices(
        x=np.array(x_rows, dtype=np.float64),
        y=np.array(y_rows, dtype=np.float64),
        pairs=tuple(kept),
        n_dropped=dropped,
    )
