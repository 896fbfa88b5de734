"""Offline alignment of two independently trained word embedding spaces.

Fit an orthogonal, least-squares, or CCA map from a dictionary of
paired words (expert, identically spelled, or phrase-level), retrieve
translations by nearest neighbour, softmax, or inverted softmax, and
score precision@k on word and sentence tasks. The ``lexalign`` command
exposes the same pipeline from the shell.
"""

from ._version import __version__
from .alignment import (
    CcaAligner,
    LeastSquaresAligner,
    ProcrustesAligner,
    default_rank_candidates,
    load_map,
    map_description,
    save_map,
    select_rank,
)
from .dictionaries import (
    PairedMatrices,
    PhrasePairs,
    WordDictionary,
    build_phrase_matrices,
    build_pseudo_dictionary,
    load_aligned_corpus,
    load_tsv_dictionary,
    resolve,
    sentence_vector,
)
from .embeddings import (
    EmbeddingSet,
    Vocabulary,
    load_word2vec_text,
    normalize_rows,
    save_word2vec_text,
)
from .errors import DataError, LexalignError, NumericalError, ShapeError
from .evaluation import (
    BIN_LABELS,
    EvaluationReport,
    TestEntry,
    TestSet,
    bin_for_rank,
    emit_report,
    evaluate_sentence_retrieval,
    evaluate_words,
    load_report,
    load_test_set,
    tsv_summary,
)
from .linalg import SvdResult, column_mean_center, matmul, svd
from .retrieval import (
    FittedBeta,
    RetrievalConfig,
    ScoredCandidates,
    batch_ranker,
    fit_beta,
    hub_counts,
    inverted_softmax_scores,
    query_sample_rng,
    retrieve_nn,
    similarity_scores,
    softmax_confidence,
    top_indices,
)

__all__ = [
    "__version__",
    "BIN_LABELS",
    "CcaAligner",
    "DataError",
    "EmbeddingSet",
    "EvaluationReport",
    "FittedBeta",
    "LeastSquaresAligner",
    "LexalignError",
    "NumericalError",
    "PairedMatrices",
    "PhrasePairs",
    "ProcrustesAligner",
    "RetrievalConfig",
    "ScoredCandidates",
    "ShapeError",
    "SvdResult",
    "TestEntry",
    "TestSet",
    "Vocabulary",
    "WordDictionary",
    "batch_ranker",
    "bin_for_rank",
    "build_phrase_matrices",
    "build_pseudo_dictionary",
    "column_mean_center",
    "default_rank_candidates",
    "emit_report",
    "evaluate_sentence_retrieval",
    "evaluate_words",
    "fit_beta",
    "hub_counts",
    "inverted_softmax_scores",
    "load_aligned_corpus",
    "load_map",
    "load_report",
    "load_test_set",
    "load_tsv_dictionary",
    "load_word2vec_text",
    "map_description",
    "matmul",
    "normalize_rows",
    "resolve",
    "query_sample_rng",
    "retrieve_nn",
    "save_map",
    "save_word2vec_text",
    "select_rank",
    "sentence_vector",
    "similarity_scores",
    "softmax_confidence",
    "top_indices",
    "svd",
    "tsv_summary",
]
