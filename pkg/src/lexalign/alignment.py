"""Estimators that map a source embedding space onto a target space.

Three fitting strategies share one sklearn-style interface: ``fit`` on
row-aligned dictionary matrices, then ``transform`` source vectors and
``transform_target`` target vectors into a common comparison space.

* ProcrustesAligner: the best orthogonal map, from one SVD of the
  target-source cross-covariance. Supports keeping only the leading
  shared directions (rank reduction).
* LeastSquaresAligner: the unconstrained linear map minimizing squared
  reconstruction error.
* CcaAligner: whitens both sides, then aligns the whitened coordinates;
  equivalent to canonical correlation analysis on the dictionary.
"""

import json
import logging
import math

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import retrieval
from .errors import DataError, NumericalError, ShapeError
from .linalg import check_matrix, check_unit_rows, column_mean_center, svd

logger = logging.getLogger(__name__)

MAP_FORMAT = "lexalign-map"
MAP_FORMAT_VERSION = 1


def _as_pair(X, y) -> tuple[np.ndarray, np.ndarray]:
    X = check_matrix(X, "source matrix")
    y = check_matrix(y, "target matrix")
    if X.shape != y.shape:
        raise ShapeError(
            f"paired matrices must have equal shapes, got {X.shape[0]}x{X.shape[1]}"
            f" and {y.shape[0]}x{y.shape[1]}"
        )
    if X.shape[0] < 1:
        raise ValueError("need at least one dictionary pair")
    return X, y


def _project(vectors, basis: np.ndarray, rank: int, renormalize: bool) -> np.ndarray:
    arr = np.asarray(vectors, dtype=np.float64)
    single = arr.ndim == 1
    mat = check_matrix(arr[None, :] if single else arr, "vectors")
    if mat.shape[1] != basis.shape[0]:
        raise ShapeError(
            f"vectors have dimension {mat.shape[1]}, map expects {basis.shape[0]}"
        )
    out = mat @ basis[:, :rank]
    if renormalize and rank < basis.shape[1]:
        norms = np.linalg.norm(out, axis=1)
        zero = np.where(norms == 0.0)[0]
        if zero.size:
            raise NumericalError(
                f"row {int(zero[0])} projects to the zero vector at rank {rank}"
            )
        out = out / norms[:, None]
    return out[0] if single else out


class ProcrustesAligner(BaseEstimator):
    """Orthogonal source-to-target map from one SVD.

    Fitting maximizes the total cosine similarity of the dictionary
    pairs over all orthogonal maps: with the SVD
    ``target.T @ source = u @ diag(sigma) @ v.T`` the optimum is
    ``u @ v.T``. The comparison space applies ``v`` to source rows and
    ``u`` to target rows, so dot products there equal similarities under
    the fitted map. Reflections are allowed; no determinant correction
    is applied.

    Parameters
    ----------
    rank : int or None
        Number of leading shared directions to keep when transforming.
        None keeps all. Directions are ordered by singular value, so
        truncation drops the least-correlated ones; truncated outputs
        are L2-renormalized row-wise.

    Attributes
    ----------
    u_, sigma_, v_ : SVD factors of the cross-covariance.
    d_ : embedding dimension.
    rank_ : retained rank actually used by transforms.
    """

    def __init__(self, rank: int | None = None):
        self.rank = rank

    def fit(self, X, y):
        X, y = _as_pair(X, y)
        check_unit_rows(X, "source matrix")
        check_unit_rows(y, "target matrix")
        d = X.shape[1]
        if self.rank is not None and not 1 <= self.rank <= d:
            raise ValueError(f"rank must be in [1, {d}], got {self.rank}")
        self.u_, self.sigma_, self.v_ = svd(y.T @ X)
        self.d_ = d
        self.rank_ = d if self.rank is None else int(self.rank)
        return self

    def transform(self, X, renormalize: bool = True) -> np.ndarray:
        """Map source vectors into the comparison space."""
        check_is_fitted(self, "v_")
        return _project(X, self.v_, self.rank_, renormalize)

    def transform_target(self, y, renormalize: bool = True) -> np.ndarray:
        """Map target vectors into the comparison space."""
        check_is_fitted(self, "u_")
        return _project(y, self.u_, self.rank_, renormalize)

    def with_rank(self, k: int) -> "ProcrustesAligner":
        """Copy of this fitted aligner truncated to the leading ``k`` directions.

        The SVD factors are shared, not refitted.
        """
        check_is_fitted(self, "v_")
        if not 1 <= k <= self.d_:
            raise ValueError(f"rank must be in [1, {self.d_}], got {k}")
        other = ProcrustesAligner(rank=k)
        other.u_, other.sigma_, other.v_ = self.u_, self.sigma_, self.v_
        other.d_ = self.d_
        other.rank_ = k
        return other

    @property
    def rotation_(self) -> np.ndarray:
        """The fitted orthogonal map as a d x d matrix (applied as O @ x)."""
        check_is_fitted(self, "v_")
        return self.u_ @ self.v_.T


class LeastSquaresAligner(BaseEstimator):
    """Unconstrained linear map minimizing total squared reconstruction error.

    Solved with an SVD-based least-squares solver, so rank-deficient
    dictionaries get the minimum-norm solution. Transformed source
    vectors are deliberately not renormalized; retrieval works on cosine
    similarity and normalizes queries itself.
    """

    def fit(self, X, y):
        X, y = _as_pair(X, y)
        coef, _, _, _ = np.linalg.lstsq(X, y, rcond=None)
        self.w_ = np.ascontiguousarray(coef.T)
        self.d_ = X.shape[1]
        self.rank_ = None
        return self

    def transform(self, X) -> np.ndarray:
        """Apply the linear map to source vectors (no renormalization)."""
        check_is_fitted(self, "w_")
        arr = np.asarray(X, dtype=np.float64)
        single = arr.ndim == 1
        mat = check_matrix(arr[None, :] if single else arr, "vectors")
        if mat.shape[1] != self.d_:
            raise ShapeError(
                f"vectors have dimension {mat.shape[1]}, map expects {self.d_}"
            )
        out = mat @ self.w_.T
        return out[0] if single else out

    def transform_target(self, y) -> np.ndarray:
        """Target vectors already live in the comparison space; returned as-is."""
        check_is_fitted(self, "w_")
        arr = np.asarray(y, dtype=np.float64)
        single = arr.ndim == 1
        mat = check_matrix(arr[None, :] if single else arr, "vectors")
        if mat.shape[1] != self.d_:
            raise ShapeError(
                f"vectors have dimension {mat.shape[1]}, map expects {self.d_}"
            )
        return arr


class CcaAligner(BaseEstimator):
    """Align both spaces through whitened dictionary coordinates.

    Fitting centers each dictionary matrix by its column means, takes
    the thin SVD of each centered matrix, then the SVD of the product of
    the two orthonormal factors. Source vectors map through
    ``(x - src_mean) @ src_transform`` and target vectors through
    ``(y - tgt_mean) @ tgt_transform``; per retained dimension, the two
    mapped dictionary sides correlate exactly at the canonical
    correlations.

    Parameters
    ----------
    n_components : int or None
        Retained canonical directions; None keeps all available.

    Attributes
    ----------
    src_mean_, tgt_mean_ : dictionary column means.
    src_transform_, tgt_transform_ : d x k projection matrices.
    canonical_correlations_ : singular values of the aligned product.
    """

    # relative cutoff below which a whitening singular value counts as zero
    _RANK_TOL = 1e-10

    def __init__(self, n_components: int | None = None):
        self.n_components = n_components

    def fit(self, X, y):
        X, y = _as_pair(X, y)
        if X.shape[0] < 2:
            raise ValueError("need at least two dictionary pairs")
        xc, self.src_mean_ = column_mean_center(X)
        yc, self.tgt_mean_ = column_mean_center(y)
        qx, sx, vx = svd(xc)
        qy, sy, vy = svd(yc)
        for name, sigma in (("source", sx), ("target", sy)):
            if sigma[-1] <= self._RANK_TOL * sigma[0]:
                raise DataError(
                    f"{name} dictionary matrix is rank deficient "
                    f"(smallest singular value {sigma[-1]:.3g}); "
                    "reduce the dimension or enlarge the dictionary"
                )
        u2, s2, v2 = svd(qx.T @ qy)
        d = min(len(sx), len(sy))
        k = d if self.n_components is None else int(self.n_components)
        if not 1 <= k <= d:
            raise ValueError(f"n_components must be in [1, {d}], got {self.n_components}")
        self.src_transform_ = (vx / sx[None, :]) @ u2[:, :k]
        self.tgt_transform_ = (vy / sy[None, :]) @ v2[:, :k]
        self.canonical_correlations_ = s2[:k]
        self.d_ = X.shape[1]
        self.rank_ = k
        return self

    def _apply(self, vectors, mean, transform, renormalize):
        arr = np.asarray(vectors, dtype=np.float64)
        single = arr.ndim == 1
        mat = check_matrix(arr[None, :] if single else arr, "vectors")
        if mat.shape[1] != self.d_:
            raise ShapeError(
                f"vectors have dimension {mat.shape[1]}, map expects {self.d_}"
            )
        out = (mat - mean) @ transform
        if renormalize:
            norms = np.linalg.norm(out, axis=1)
            zero = np.where(norms == 0.0)[0]
            if zero.size:
                raise NumericalError(
                    f"row {int(zero[0])} projects to the zero vector "
                    "(it coincides with the dictionary centroid)"
                )
            out = out / norms[:, None]
        return out[0] if single else out

    def transform(self, X, renormalize: bool = True) -> np.ndarray:
        """Map source vectors into the aligned space, renormalized for retrieval."""
        check_is_fitted(self, "src_transform_")
        return self._apply(X, self.src_mean_, self.src_transform_, renormalize)

    def transform_target(self, y, renormalize: bool = True) -> np.ndarray:
        """Map target vectors into the aligned space, renormalized for retrieval."""
        check_is_fitted(self, "tgt_transform_")
        return self._apply(y, self.tgt_mean_, self.tgt_transform_, renormalize)


def default_rank_candidates(d: int) -> list[int]:
    """Grid searched by rank selection: d, d-20, d-40, ... down to ceil(d/2)."""
    if d < 1:
        raise ValueError(f"dimension must be positive, got {d}")
    floor = math.ceil(d / 2)
    grid = list(range(d, floor - 1, -20))
    if grid[-1] != floor:
        grid.append(floor)
    return grid


def select_rank(
    aligner: ProcrustesAligner,
    X,
    y,
    config: "retrieval.RetrievalConfig",
    candidates=None,
    pairs=None,
) -> int:
    """Pick the truncation rank maximizing training-dictionary precision@1.

    Every candidate rank is scored by retrieving each pair's target
    among the dictionary's own target rows with ``config.method``. A
    retrieved row counts as correct when its target token is valid for
    the query's source token, so repeated and multi-target sources score
    fairly; without token pairs, only the exact row index counts. Ties
    go to the larger rank.
    """
    check_is_fitted(aligner, "v_")
    X, y = _as_pair(X, y)
    if candidates is None:
        candidates = default_rank_candidates(aligner.d_)
    candidates = sorted(set(int(k) for k in candidates))
    if not candidates:
        raise ValueError("no rank candidates given")
    n = X.shape[0]
    if pairs is not None and len(pairs) != n:
        raise ValueError(f"got {len(pairs)} token pairs for {n} rows")
    if pairs is None:
        valid = [{i} for i in range(n)]
    else:
        targets_of_source: dict[str, set[str]] = {}
        for source, target in pairs:
            targets_of_source.setdefault(source, set()).add(target)
        rows_by_target: dict[str, list[int]] = {}
        for i, (_, target) in enumerate(pairs):
            rows_by_target.setdefault(target, []).append(i)
        valid = []
        for source, _ in pairs:
            ok: set[int] = set()
            for target in targets_of_source[source]:
                ok.update(rows_by_target[target])
            valid.append(ok)

    best_rank = candidates[0]
    best_score = -1.0
    for k in candidates:
        truncated = aligner.with_rank(k)
        src_shared = truncated.transform(X)
        tgt_shared = truncated.transform_target(y)
        src_shared = src_shared / np.linalg.norm(src_shared, axis=1)[:, None]
        tgt_shared = tgt_shared / np.linalg.norm(tgt_shared, axis=1)[:, None]
        hits = 0
        for i in range(n):
            top = retrieval.top_indices(i, src_shared, tgt_shared, config, top_k=1)
            if int(top[0]) in valid[i]:
                hits += 1
        score = hits / n
        logger.info("rank %d: training precision@1 %.4f", k, score)
        if score >= best_score:
            best_score = score
            best_rank = k
    return best_rank


def _decompose(aligner) -> tuple[str, dict[str, np.ndarray], dict]:
    if isinstance(aligner, ProcrustesAligner):
        check_is_fitted(aligner, "v_")
        return (
            "procrustes",
            {"u": aligner.u_, "sigma": aligner.sigma_, "v": aligner.v_},
            {"d": aligner.d_, "rank": aligner.rank_},
        )
    if isinstance(aligner, LeastSquaresAligner):
        check_is_fitted(aligner, "w_")
        return "least_squares", {"w": aligner.w_}, {"d": aligner.d_}
    if isinstance(aligner, CcaAligner):
        check_is_fitted(aligner, "src_transform_")
        return (
            "cca",
            {
                "src_mean": aligner.src_mean_,
                "tgt_mean": aligner.tgt_mean_,
                "src_transform": aligner.src_transform_,
                "tgt_transform": aligner.tgt_transform_,
                "canonical_correlations": aligner.canonical_correlations_,
            },
            {"d": aligner.d_, "rank": aligner.rank_},
        )
    raise TypeError(f"cannot serialize {type(aligner).__name__}")


def save_map(path: str, aligner, metadata: dict | None = None) -> None:
    """Write a fitted aligner to a versioned, byte-reproducible artifact.

    Layout: one JSON header line (format name, version, kind, scalar
    fields, array shapes, caller metadata) followed by the raw float64
    bytes of each array in sorted name order. Identical aligners always
    produce identical files.
    """
    kind, arrays, scalars = _decompose(aligner)
    header = {
        "format": MAP_FORMAT,
        "version": MAP_FORMAT_VERSION,
        "kind": kind,
        "scalars": scalars,
        "arrays": {name: list(arr.shape) for name, arr in arrays.items()},
        "metadata": metadata or {},
    }
    with open(path, "wb") as handle:
        handle.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        handle.write(b"\n")
        for name in sorted(arrays):
            handle.write(np.ascontiguousarray(arrays[name], dtype=np.float64).tobytes())


def load_map(path: str):
    """Read a map artifact back into a fitted aligner.

    Returns (aligner, metadata). Rejects unknown formats and versions.
    """
    try:
        with open(path, "rb") as handle:
            header_line = handle.readline()
            blob = handle.read()
    except OSError as exc:
        raise DataError(f"cannot read map from {path}: {exc}") from exc
    try:
        header = json.loads(header_line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: not a map artifact: {exc}") from exc
    if header.get("format") != MAP_FORMAT:
        raise DataError(f"{path}: not a map artifact (format {header.get('format')!r})")
    if header.get("version") != MAP_FORMAT_VERSION:
        raise DataError(
            f"{path}: unsupported map format version {header.get('version')!r}"
        )
    arrays: dict[str, np.ndarray] = {}
    offset = 0
    for name in sorted(header["arrays"]):
        shape = tuple(header["arrays"][name])
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 8
        if offset + nbytes > len(blob):
            raise DataError(f"{path}: truncated map artifact")
        arrays[name] = np.frombuffer(
            blob, dtype=np.float64, count=count, offset=offset
        ).reshape(shape).copy()
        offset += nbytes
    if offset != len(blob):
        raise DataError(f"{path}: trailing bytes in map artifact")
    kind = header["kind"]
    scalars = header["scalars"]
    if kind == "procrustes":
        aligner = ProcrustesAligner(rank=scalars["rank"])
        aligner.u_, aligner.sigma_, aligner.v_ = arrays["u"], arrays["sigma"], arrays["v"]
        aligner.d_ = int(scalars["d"])
        aligner.rank_ = int(scalars["rank"])
    elif kind == "least_squares":
        aligner = LeastSquaresAligner()
        aligner.w_ = arrays["w"]
        aligner.d_ = int(scalars["d"])
        aligner.rank_ = None
    elif kind == "cca":
        aligner = CcaAligner(n_components=scalars["rank"])
        aligner.src_mean_ = arrays["src_mean"]
        aligner.tgt_mean_ = arrays["tgt_mean"]
        aligner.src_transform_ = arrays["src_transform"]
        aligner.tgt_transform_ = arrays["tgt_transform"]
        aligner.canonical_correlations_ = arrays["canonical_correlations"]
        aligner.d_ = int(scalars["d"])
        aligner.rank_ = int(scalars["rank"])
    else:
        raise DataError(f"{path}: unknown map kind {kind!r}")
    return aligner, header.get("metadata", {})


def map_description(aligner) -> tuple[str, int | None]:
    """(kind, retained rank) summary used in reports and diagnostics."""
    kind, _, scalars = _decompose(aligner)
    return kind, scalars.get("rank")
