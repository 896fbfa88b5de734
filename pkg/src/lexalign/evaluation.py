"""Precision@k scoring for word translation and sentence retrieval.

Word test sets are TSV pairs like dictionaries; lines sharing a source
token merge into one entry with several valid targets. Entries fall
into frequency bins by the source token's vocabulary rank. Reports are
plain JSON with a fixed field order, so identical runs write identical
bytes; a one-line TSV summary supports aggregation across runs.
"""

import json
import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import retrieval
from ._version import __version__
from .alignment import map_description
from .dictionaries import PhrasePairs, sentence_vector
from .embeddings import EmbeddingSet, Vocabulary
from .errors import DataError, NumericalError
from .retrieval import RetrievalConfig, query_sample_rng

logger = logging.getLogger(__name__)

REPORT_FORMAT_VERSION = 1

BIN_LABELS = ("0-5k", "5-20k", "20-50k", "50-100k", "100-200k")
_BIN_EDGES = (5000, 20000, 50000, 100000)


def bin_for_rank(rank: int) -> str:
    """Frequency bin label for a source vocabulary rank."""
    if rank < 0:
        raise ValueError(f"rank must be non-negative, got {rank}")
    return BIN_LABELS[int(np.searchsorted(_BIN_EDGES, rank, side="right"))]


@dataclass(frozen=True)
class TestEntry:
    """One evaluation item: a source token and every target accepted for it."""

    source: str
    targets: frozenset[str]
    bin: str | None  # None marks a source token absent from the vocabulary
    rank: int | None


@dataclass(eq=False)
class TestSet:
    entries: list[TestEntry]
    bins: tuple[str, ...] = BIN_LABELS

    @property
    def evaluable(self) -> list[TestEntry]:
        return [e for e in self.entries if e.bin is not None]

    @property
    def skipped(self) -> list[TestEntry]:
        return [e for e in self.entries if e.bin is None]


def load_test_set(path: str, src_vocab: Vocabulary) -> TestSet:
    """Read a TSV test dictionary and merge lines by source token.

    Each source token yields exactly one entry whose target set is the
    union of its lines. Source tokens missing from ``src_vocab`` are
    kept but marked skipped; they never enter precision denominators.
    """
    merged: dict[str, set[str]] = {}
    order: list[str] = []
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
                if source not in merged:
                    merged[source] = set()
                    order.append(source)
                merged[source].add(target)
    except OSError as exc:
        raise DataError(f"cannot read test set from {path}: {exc}") from exc
    except UnicodeDecodeError as exc:
        raise DataError(f"{path}: not valid UTF-8: {exc}") from exc
    if not merged:
        raise DataError(f"{path}: test set is empty")
    entries = []
    for source in order:
        rank = src_vocab.rank(source)
        label = None if rank is None else bin_for_rank(rank)
        entries.append(TestEntry(source, frozenset(merged[source]), label, rank))
    if all(e.bin is None for e in entries):
        raise DataError(f"{path}: every source token is out of vocabulary")
    return TestSet(entries)


@dataclass
class BinReport:
    count: int
    precision: dict[int, float]


@dataclass
class EvaluationReport:
    """Everything one evaluation run produced, in emission order."""

    task: str
    map_kind: str
    method: str
    beta: float
    n_s: int
    seed: int
    rank: int | None
    ks: tuple[int, ...]
    n_entries: int
    n_evaluated: int
    n_skipped_source_oov: int
    n_target_oov: int
    n_candidates: int
    precision: dict[int, float]
    precision_known_targets: dict[int, float]
    bins: dict[str, BinReport] = field(default_factory=dict)
    software_version: str = __version__
    format_version: int = REPORT_FORMAT_VERSION

    def to_dict(self) -> dict:
        return {
            "format_version": self.format_version,
            "software_version": self.software_version,
            "task": self.task,
            "map_kind": self.map_kind,
            "method": self.method,
            "beta": self.beta,
            "n_s": self.n_s,
            "seed": self.seed,
            "rank": self.rank,
            "ks": list(self.ks),
            "n_entries": self.n_entries,
            "n_evaluated": self.n_evaluated,
            "n_skipped_source_oov": self.n_skipped_source_oov,
            "n_target_oov": self.n_target_oov,
            "n_candidates": self.n_candidates,
            "precision": {str(k): v for k, v in self.precision.items()},
            "precision_known_targets": {
                str(k): v for k, v in self.precision_known_targets.items()
            },
            "bins": {
                label: {
                    "count": b.count,
                    "precision": {str(k): v for k, v in b.precision.items()},
                }
                for label, b in self.bins.items()
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EvaluationReport":
        if data.get("format_version") != REPORT_FORMAT_VERSION:
            raise DataError(
                f"unsupported report format version {data.get('format_version')!r}"
            )
        return cls(
            task=data["task"],
            map_kind=data["map_kind"],
            method=data["method"],
            beta=data["beta"],
            n_s=data["n_s"],
            seed=data["seed"],
            rank=data["rank"],
            ks=tuple(data["ks"]),
            n_entries=data["n_entries"],
            n_evaluated=data["n_evaluated"],
            n_skipped_source_oov=data["n_skipped_source_oov"],
            n_target_oov=data["n_target_oov"],
            n_candidates=data["n_candidates"],
            precision={int(k): v for k, v in data["precision"].items()},
            precision_known_targets={
                int(k): v for k, v in data["precision_known_targets"].items()
            },
            bins={
                label: BinReport(
                    count=b["count"],
                    precision={int(k): v for k, v in b["precision"].items()},
                )
                for label, b in data["bins"].items()
            },
            software_version=data["software_version"],
        )


def emit_report(report: EvaluationReport, path: str) -> None:
    """Write a report as stable, machine-parseable JSON."""
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(report.to_dict(), handle, indent=2)
        handle.write("\n")


def load_report(path: str) -> EvaluationReport:
    try:
        with open(path, encoding="utf-8") as handle:
            data = json.load(handle)
    except OSError as exc:
        raise DataError(f"cannot read report from {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: not a JSON report: {exc}") from exc
    return EvaluationReport.from_dict(data)


def tsv_summary(report: EvaluationReport) -> tuple[str, str]:
    """One flat (header, row) pair for cross-run result tables."""
    columns = [
        ("task", report.task),
        ("map", report.map_kind),
        ("method", report.method),
        ("beta", repr(report.beta)),
        ("n_s", str(report.n_s)),
        ("seed", str(report.seed)),
        ("rank", "" if report.rank is None else str(report.rank)),
        ("n_evaluated", str(report.n_evaluated)),
        ("n_candidates", str(report.n_candidates)),
    ]
    for k in report.ks:
        columns.append((f"p@{k}", repr(report.precision[k])))
    header = "\t".join(name for name, _ in columns)
    row = "\t".join(value for _, value in columns)
    return header, row


def _require_normalized(embeddings: EmbeddingSet, side: str) -> None:
    if not embeddings.normalized:
        raise ValueError(f"{side} embeddings must be normalized before evaluation")


def _unit(matrix: np.ndarray, name: str) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1)
    zero = np.where(norms == 0.0)[0]
    if zero.size:
        raise NumericalError(f"{name} row {int(zero[0])} has zero norm in shared space")
    return matrix / norms[:, None]


def _first_hit_positions(
    query_rows,
    src_shared: np.ndarray,
    tgt_shared: np.ndarray,
    valid_rows,
    config: RetrievalConfig,
    kmax: int,
    n_jobs: int,
) -> np.ndarray:
    """Position of the first valid target in each query's ranking, or kmax."""
    rank = retrieval.batch_ranker(src_shared, tgt_shared, config)

    def one(i: int) -> int:
        top = rank(int(query_rows[i]), kmax)
        ok = valid_rows[i]
        for position, row in enumerate(top):
            if int(row) in ok:
                return position
        return kmax

    n = len(query_rows)
    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            return np.fromiter(pool.map(one, range(n)), dtype=np.int64, count=n)
    return np.fromiter(map(one, range(n)), dtype=np.int64, count=n)


def _precision(first_hit: np.ndarray, ks) -> dict[int, float]:
    n = len(first_hit)
    if n == 0:
        return {k: 0.0 for k in ks}
    return {k: float(np.count_nonzero(first_hit < k)) / n for k in ks}


def evaluate_words(
    src_emb: EmbeddingSet,
    tgt_emb: EmbeddingSet,
    aligner,
    config: RetrievalConfig,
    test_set: TestSet,
    ks=(1, 5, 10),
    n_jobs: int = 1,
) -> EvaluationReport:
    """Precision@k of translating test entries against the full target vocabulary.

    Every evaluable entry is ranked against all target rows; a hit at k
    means some valid target token sits in the top k. Entries whose
    source token is out of vocabulary are skipped. Entries where every
    valid target is out of vocabulary stay in the denominator as misses
    (the conservative convention); ``precision_known_targets`` reports
    the other convention, excluding them.
    """
    _require_normalized(src_emb, "source")
    _require_normalized(tgt_emb, "target")
    ks = tuple(sorted(set(int(k) for k in ks)))
    if not ks or ks[0] < 1:
        raise ValueError(f"ks must be positive integers, got {ks}")
    entries = test_set.evaluable
    if not entries:
        raise DataError("no evaluable test entries")
    kmax = ks[-1]
    src_shared = _unit(aligner.transform(src_emb.matrix), "source")
    tgt_shared = _unit(aligner.transform_target(tgt_emb.matrix), "target")
    query_rows = [src_emb.vocab.index[e.source] for e in entries]
    valid_rows = []
    for e in entries:
        rows = {tgt_emb.vocab.index[t] for t in e.targets if t in tgt_emb.vocab.index}
        valid_rows.append(rows)
    first_hit = _first_hit_positions(
        query_rows, src_shared, tgt_shared, valid_rows, config, kmax, n_jobs
    )

    known = np.array([bool(rows) for rows in valid_rows])
    bins: dict[str, BinReport] = {}
    labels = np.array([e.bin for e in entries])
    for label in test_set.bins:
        mask = labels == label
        if mask.any():
            bins[label] = BinReport(
                count=int(mask.sum()), precision=_precision(first_hit[mask], ks)
            )
    kind, rank = map_description(aligner)
    report = EvaluationReport(
        task="words",
        map_kind=kind,
        method=config.method,
        beta=config.beta,
        n_s=config.n_s,
        seed=config.seed,
        rank=rank,
        ks=ks,
        n_entries=len(test_set.entries),
        n_evaluated=len(entries),
        n_skipped_source_oov=len(test_set.skipped),
        n_target_oov=int((~known).sum()),
        n_candidates=len(tgt_emb),
        precision=_precision(first_hit, ks),
        precision_known_targets=_precision(first_hit[known], ks),
        bins=bins,
    )
    logger.info("evaluated %d entries: p@1 %.4f", len(entries), report.precision[ks[0]])
    return report


def evaluate_sentence_retrieval(
    src_emb: EmbeddingSet,
    tgt_emb: EmbeddingSet,
    aligner,
    config: RetrievalConfig,
    pool: PhrasePairs,
    n_queries: int,
    ks=(1, 5, 10),
    n_jobs: int = 1,
) -> EvaluationReport:
    """Precision@k of finding a sentence's translation in an aligned pool.

    Both sides of every pool pair become sentence vectors; pairs with a
    side that yields none are dropped. ``n_queries`` source sentences
    are sampled by seed and ranked against every surviving target
    sentence. A retrieval counts as a hit when it returns the aligned
    mate or any target with the identical token sequence, so duplicated
    sentences cannot spuriously fail.
    """
    _require_normalized(src_emb, "source")
    _require_normalized(tgt_emb, "target")
    ks = tuple(sorted(set(int(k) for k in ks)))
    if not ks or ks[0] < 1:
        raise ValueError(f"ks must be positive integers, got {ks}")
    if n_queries < 1:
        raise ValueError(f"n_queries must be positive, got {n_queries}")
    kmax = ks[-1]
    src_vecs: list[np.ndarray] = []
    tgt_vecs: list[np.ndarray] = []
    tgt_tokens: list[tuple[str, ...]] = []
    dropped = 0
    for src_tokens, tokens in zip(pool.source_sentences, pool.target_sentences):
        sv = sentence_vector(src_tokens, src_emb)
        tv = sentence_vector(tokens, tgt_emb)
        if sv is None or tv is None:
            dropped += 1
            continue
        src_vecs.append(sv)
        tgt_vecs.append(tv)
        tgt_tokens.append(tuple(tokens))
    if not src_vecs:
        raise DataError(f"all {pool.count} sentence pairs dropped from the pool")
    n_kept = len(src_vecs)
    if n_queries > n_kept:
        warnings.warn(
            f"n_queries={n_queries} exceeds the {n_kept} usable pairs; clamping",
            stacklevel=2,
        )
        n_queries = n_kept
    src_shared = _unit(aligner.transform(np.array(src_vecs)), "source")
    tgt_shared = _unit(aligner.transform_target(np.array(tgt_vecs)), "target")
    by_tokens: dict[tuple[str, ...], list[int]] = {}
    for i, tokens in enumerate(tgt_tokens):
        by_tokens.setdefault(tokens, []).append(i)
    rng = query_sample_rng(config)
    query_rows = np.sort(rng.choice(n_kept, size=n_queries, replace=False))
    valid_rows = [set(by_tokens[tgt_tokens[int(q)]]) for q in query_rows]
    first_hit = _first_hit_positions(
        query_rows, src_shared, tgt_shared, valid_rows, config, kmax, n_jobs
    )
    kind, rank = map_description(aligner)
    report = EvaluationReport(
        task="sentences",
        map_kind=kind,
        method=config.method,
        beta=config.beta,
        n_s=config.n_s,
        seed=config.seed,
        rank=rank,
        ks=ks,
        n_entries=pool.count,
        n_evaluated=int(n_queries),
        n_skipped_source_oov=dropped,
        n_target_oov=0,
        n_candidates=n_kept,
        precision=_precision(first_hit, ks),
        precision_known_targets=_precision(first_hit, ks),
        bins={},
    )
    logger.info(
        "sentence retrieval over %d candidates, %d queries: p@1 %.4f",
        n_kept, n_queries, report.precision[ks[0]],
    )
    return report
