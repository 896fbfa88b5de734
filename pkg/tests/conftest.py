"""Shared synthetic constructions used across the test modules."""

import numpy as np
import pytest

import lexalign as lx


def unit(v):
    v = np.asarray(v, dtype=np.float64)
    if v.ndim == 1:
        return v / np.linalg.norm(v)
    return v / np.linalg.norm(v, axis=1)[:, None]


def random_orthogonal(d, rng):
    """Haar-distributed orthogonal matrix via sign-fixed QR."""
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))[None, :]


def random_unit_rows(n, d, rng):
    return unit(rng.standard_normal((n, d)))


def hub_instance():
    """Three queries, their slightly perturbed translations, and one hub.

    Sources sit at equal angles around the first axis. Each true
    translation is its source pushed away from that axis just far
    enough that the axis-aligned hub becomes every source's nearest
    neighbour, while the inverted softmax still separates the three.
    Returns (sources, targets, hub row index); translation i lives in
    target row i.
    """
    axis = np.array([1.0, 0.0, 0.0])
    spread = np.array([
        [0.0, 1.0, 0.0],
        [0.0, -0.5, np.sqrt(3.0) / 2.0],
        [0.0, -0.5, -np.sqrt(3.0) / 2.0],
    ])
    sources = unit(axis + 0.5 * spread)
    # direction orthogonal to each source, pointing away from the axis
    toward_axis = axis - (sources @ axis)[:, None] * sources
    away = -unit(toward_axis)
    true_targets = unit(sources + 0.55 * away)
    targets = np.vstack([true_targets, axis])
    return sources, targets, len(true_targets)


def identity_aligner(d):
    """Procrustes aligner whose fitted map is the identity."""
    basis = np.eye(d)
    return lx.ProcrustesAligner().fit(basis, basis)


def corrupted_task(seed=7, vocab=2000, d=50, n_train=500, corrupt_frac=0.3, noise=0.1):
    """Synthetic bilingual task with a known rotation and a corrupted dictionary.

    Returns (source matrix, target matrix, rotation, train pair indices
    with corruption, held-out pair indices). Pair i translates to
    target row i; corrupted training pairs point at a wrong row.
    """
    rng = np.random.default_rng(seed)
    x = random_unit_rows(vocab, d, rng)
    rotation = random_orthogonal(d, rng)
    y = unit(x @ rotation.T + noise * rng.standard_normal((vocab, d)))
    train = np.arange(n_train)
    tgt_rows = train.copy()
    n_bad = int(corrupt_frac * n_train)
    bad = rng.choice(n_train, size=n_bad, replace=False)
    for i in bad:
        wrong = int(rng.integers(vocab))
        while wrong == i:
            wrong = int(rng.integers(vocab))
        tgt_rows[i] = wrong
    heldout = np.arange(n_train, vocab)
    return x, y, rotation, (train, tgt_rows), heldout


def toy_embeddings(words, matrix, normalized=True):
    emb = lx.EmbeddingSet(lx.Vocabulary.from_words(words), np.asarray(matrix, float))
    return lx.normalize_rows(emb) if normalized else emb


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
