"""Translation retrieval over a shared embedding space.

Scores are cosine similarities between unit vectors that the alignment
step has already placed in one space. Three ranking methods:

* ``nn``: raw similarity.
* ``softmax``: per query j, ``exp(beta * s_ij)`` normalized over every
  target i. Monotone in similarity, so it ranks exactly like ``nn`` but
  yields calibrated confidences.
* ``inverted_softmax``: the numerator is the same, but the denominator
  for target i sums ``exp(beta * s_in)`` over a sample of *source*
  vectors n. Targets that are similar to everything (hubs) acquire a
  large denominator and stop crowding out the right answers. The
  per-query normalizing constant cancels in ranking and is omitted.

Randomness: every stream is derived from ``config.seed`` through a seed
sequence, so parallel and serial evaluation agree bit for bit. Stream
tags: (seed, 0) for the shared denominator sample when
``global_sample`` is set, (seed, 1, query_index) for per-query
denominator samples, (seed, 2) for evaluation query sampling.
"""

import logging
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import logsumexp

from .errors import NumericalError
from .linalg import check_matrix, check_unit_rows, check_vector

logger = logging.getLogger(__name__)

METHODS = ("nn", "softmax", "inverted_softmax")

_STREAM_GLOBAL_SAMPLE = 0
_STREAM_QUERY_SAMPLE = 1
_STREAM_QUERY_SET = 2

# targets are scored against the denominator sample in blocks this tall,
# which bounds peak memory without changing any per-row result
_CHUNK_ROWS = 8192


@dataclass(frozen=True)
class RetrievalConfig:
    """Knobs shared by the retrieval methods.

    beta is the inverse temperature of the two softmax methods; n_s is
    the number of source vectors sampled into the inverted-softmax
    denominator; seed feeds every derived random stream; beta_max caps
    beta fitting. global_sample swaps the per-query denominator samples
    for one sample shared by all queries.
    """

    method: str = "nn"
    beta: float = 30.0
    n_s: int = 1500
    seed: int = 42
    beta_max: float = 200.0
    global_sample: bool = False

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if not self.beta_max > 0:
            raise ValueError(f"beta_max must be positive, got {self.beta_max}")
        if not 0 < self.beta <= self.beta_max:
            raise ValueError(
                f"beta must be in (0, {self.beta_max}], got {self.beta}"
            )
        if self.n_s < 1:
            raise ValueError(f"n_s must be at least 1, got {self.n_s}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed}")


class ScoredCandidates(NamedTuple):
    """Target indices with their scores, best first; ties by ascending index."""

    indices: np.ndarray
    scores: np.ndarray


class FittedBeta(NamedTuple):
    """Result of fit_beta: the maximizer, whether it hit the cap, and the objective."""

    beta: float
    diverged: bool
    objective: float


def _descending(scores: np.ndarray) -> np.ndarray:
    # stable sort on the negated scores keeps equal entries in index order
    return np.argsort(-scores, kind="stable")


def similarity_scores(query: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Dot product of a unit query against unit target rows.

    Both sides must already be unit norm: scores are then cosines in
    [-1, 1] up to rounding.
    """
    query = check_vector(query, "query")
    targets = check_matrix(targets, "targets")
    norm = float(np.linalg.norm(query))
    if norm == 0.0:
        raise NumericalError("query vector has zero norm")
    if abs(norm - 1.0) > 1e-6:
        raise ValueError(f"query must be unit norm, got norm {norm:.6g}")
    check_unit_rows(targets, "targets")
    return targets @ query


def retrieve_nn(query: np.ndarray, targets: np.ndarray, top_k: int = 10) -> ScoredCandidates:
    """Top candidates by raw similarity."""
    if top_k < 1:
        raise ValueError(f"top_k must be positive, got {top_k}")
    scores = similarity_scores(query, targets)
    if top_k > len(scores):
        warnings.warn(
            f"top_k={top_k} exceeds the {len(scores)} available targets; clamping",
            stacklevel=2,
        )
        top_k = len(scores)
    order = _descending(scores)[:top_k]
    return ScoredCandidates(order, scores[order])


def _sample_indices(n_sources: int, query_index: int, config: RetrievalConfig) -> np.ndarray:
    """Denominator sample: n_s distinct source rows, always including the query."""
    if config.n_s >= n_sources:
        return np.arange(n_sources)
    if config.global_sample:
        rng = np.random.default_rng([config.seed, _STREAM_GLOBAL_SAMPLE])
    else:
        rng = np.random.default_rng([config.seed, _STREAM_QUERY_SAMPLE, query_index])
    picked = rng.choice(n_sources, size=config.n_s, replace=False)
    if not (picked == query_index).any():
        picked = np.append(picked, query_index)
    return picked


def _check_query_index(query_index: int, sources: np.ndarray) -> None:
    if not 0 <= query_index < sources.shape[0]:
        raise IndexError(
            f"query index {query_index} out of range for {sources.shape[0]} sources"
        )


def softmax_confidence(
    query_index: int,
    sources: np.ndarray,
    targets: np.ndarray,
    config: RetrievalConfig,
) -> np.ndarray:
    """Probability of each target given source ``query_index``.

    ``exp(beta * s_ij)`` normalized over all targets i, computed with
    max subtraction so large beta cannot overflow.
    """
    if config.method != "softmax":
        raise ValueError(f"config.method must be 'softmax', got {config.method!r}")
    sources = check_matrix(sources, "sources")
    targets = check_matrix(targets, "targets")
    _check_query_index(query_index, sources)
    z = config.beta * (targets @ sources[query_index])
    z -= z.max()
    p = np.exp(z)
    p /= p.sum()
    return p


def _inverted_log_scores(
    query_index: int,
    sources: np.ndarray,
    targets: np.ndarray,
    config: RetrievalConfig,
) -> np.ndarray:
    """Log of the inverted-softmax score for every target; ranking-equivalent."""
    sample = _sample_indices(sources.shape[0], query_index, config)
    beta = config.beta
    numerator = beta * (targets @ sources[query_index])
    block = sources[sample].T
    log_den = np.empty(targets.shape[0])
    for start in range(0, targets.shape[0], _CHUNK_ROWS):
        stop = start + _CHUNK_ROWS
        log_den[start:stop] = logsumexp(beta * (targets[start:stop] @ block), axis=1)
    return numerator - log_den


def inverted_softmax_scores(
    query_index: int,
    sources: np.ndarray,
    targets: np.ndarray,
    config: RetrievalConfig,
) -> np.ndarray:
    """Hub-corrected score of each target for source ``query_index``.

    Per target i the score is ``exp(beta * s_iq)`` divided by the sum of
    ``exp(beta * s_in)`` over a seeded sample of ``n_s`` source rows n.
    The sample always contains the query row itself, which also bounds
    every score by 1. The per-query normalizing constant is omitted:
    it scales all of a query's scores equally and cannot change their
    order. When ``n_s`` reaches the source count the whole vocabulary is
    used and no sampling happens.
    """
    if config.method != "inverted_softmax":
        raise ValueError(
            f"config.method must be 'inverted_softmax', got {config.method!r}"
        )
    sources = check_matrix(sources, "sources")
    targets = check_matrix(targets, "targets")
    _check_query_index(query_index, sources)
    return np.exp(_inverted_log_scores(query_index, sources, targets, config))


def top_indices(
    query_index: int,
    sources: np.ndarray,
    targets: np.ndarray,
    config: RetrievalConfig,
    top_k: int,
) -> np.ndarray:
    """Indices of the best ``top_k`` targets under ``config.method``.

    Shared by rank selection and evaluation; works on already projected
    unit rows and skips per-call validation.
    """
    if config.method == "inverted_softmax":
        scores = _inverted_log_scores(query_index, sources, targets, config)
    else:
        # softmax is monotone in similarity, so both rank identically
        scores = targets @ sources[query_index]
    return _descending(scores)[:top_k]


def batch_ranker(sources, targets, config: RetrievalConfig):
    """Build a ``rank(query_index, top_k)`` callable for many queries.

    Ranks exactly like ``top_indices`` on every query, but hoists work
    that queries share. With ``global_sample`` set, the inverted-softmax
    denominator over the shared sample is computed once up front; each
    query then costs a single similarity pass, which is what makes the
    method affordable over candidate pools in the hundreds of thousands.
    The returned callable is pure and safe to call from several threads.
    """
    if config.method != "inverted_softmax":

        def rank(query_index: int, top_k: int) -> np.ndarray:
            return _descending(targets @ sources[query_index])[:top_k]

        return rank

    n_sources = sources.shape[0]
    if not config.global_sample or config.n_s >= n_sources:

        def rank(query_index: int, top_k: int) -> np.ndarray:
            scores = _inverted_log_scores(query_index, sources, targets, config)
            return _descending(scores)[:top_k]

        return rank

    rng = np.random.default_rng([config.seed, _STREAM_GLOBAL_SAMPLE])
    sample = rng.choice(n_sources, size=config.n_s, replace=False)
    member = np.zeros(n_sources, dtype=bool)
    member[sample] = True
    beta = config.beta
    block = sources[sample].T
    base = np.empty(targets.shape[0])
    for start in range(0, targets.shape[0], _CHUNK_ROWS):
        stop = start + _CHUNK_ROWS
        base[start:stop] = logsumexp(beta * (targets[start:stop] @ block), axis=1)

    def rank(query_index: int, top_k: int) -> np.ndarray:
        numerator = beta * (targets @ sources[query_index])
        if member[query_index]:
            log_den = base
        else:
            # the appended query column is exactly the numerator term
            log_den = np.logaddexp(base, numerator)
        return _descending(numerator - log_den)[:top_k]

    return rank


def query_sample_rng(config: RetrievalConfig) -> np.random.Generator:
    """Generator for sampling evaluation query indices.

    Derived from the seed on its own stream, so it never collides with
    the denominator samples.
    """
    return np.random.default_rng([config.seed, _STREAM_QUERY_SET])


def fit_beta(aligner, X, y, config: RetrievalConfig) -> FittedBeta:
    """Fit the inverse temperature on a training dictionary.

    Maximizes the summed log-probability of each pair's target given its
    source over beta in (0, beta_max], by golden-section search; the
    objective is concave in beta, so the search converges to the
    maximum. Candidate targets (and, for the inverted method,
    denominator sources) are restricted to the dictionary's own rows.
    A maximizer within tolerance of beta_max is reported as diverged,
    which happens exactly when the dictionary is separable enough that
    more confidence is always better.
    """
    if config.method not in ("softmax", "inverted_softmax"):
        raise ValueError(
            f"beta fitting needs a softmax method, got {config.method!r}"
        )
    X = check_matrix(X, "source matrix")
    y = check_matrix(y, "target matrix")
    if X.shape[0] < 2:
        raise ValueError("need at least two dictionary pairs to fit beta")
    src_shared = aligner.transform(X)
    tgt_shared = aligner.transform_target(y)
    src_shared = src_shared / np.linalg.norm(src_shared, axis=1)[:, None]
    tgt_shared = tgt_shared / np.linalg.norm(tgt_shared, axis=1)[:, None]
    sims = tgt_shared @ src_shared.T
    if not np.isfinite(sims).all():
        raise NumericalError("non-finite similarities while fitting beta")
    diag = float(np.trace(sims))
    axis = 0 if config.method == "softmax" else 1

    def objective(beta: float) -> float:
        value = beta * diag - float(logsumexp(beta * sims, axis=axis).sum())
        if not np.isfinite(value):
            raise NumericalError(f"objective not finite at beta={beta}")
        return value

    lo, hi = 1e-6, float(config.beta_max)
    xtol = 1e-4
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = objective(c), objective(d)
    while b - a > xtol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = objective(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = objective(d)
    beta = (a + b) / 2.0
    f_beta = objective(beta)
    f_hi = objective(hi)
    # a concave objective with an interior maximum is strictly lower at
    # the cap; anything else (monotone growth, or a plateau below float
    # resolution) means more confidence never hurts
    if hi - beta <= 10 * xtol or f_hi >= f_beta:
        logger.info("beta search hit the cap %.6g; flagging as diverged", hi)
        return FittedBeta(hi, True, f_hi)
    return FittedBeta(float(beta), False, f_beta)


def hub_counts(
    sources: np.ndarray,
    targets: np.ndarray,
    aligner=None,
    config: RetrievalConfig | None = None,
) -> np.ndarray:
    """How many sampled sources retrieve each target first.

    With no config (or method ``nn``/``softmax``) the count is over
    nearest neighbours; an ``inverted_softmax`` config recounts under
    hub correction, where the denominator draws from the same source
    sample. Targets with large counts are hubs. Counts always sum to
    the number of sources.
    """
    sources = check_matrix(sources, "sources")
    targets = check_matrix(targets, "targets")
    if aligner is not None:
        sources = aligner.transform(sources)
        targets = aligner.transform_target(targets)
        sources = sources / np.linalg.norm(sources, axis=1)[:, None]
        targets = targets / np.linalg.norm(targets, axis=1)[:, None]
    n_targets = targets.shape[0]
    if config is not None and config.method == "inverted_softmax":
        first = np.empty(sources.shape[0], dtype=np.int64)
        for j in range(sources.shape[0]):
            scores = _inverted_log_scores(j, sources, targets, config)
            first[j] = int(_descending(scores)[0])
    else:
        sims = sources @ targets.T
        first = np.argmax(sims, axis=1)
    return np.bincount(first, minlength=n_targets)
