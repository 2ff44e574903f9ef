"""Exact nearest-anchor lookups under L2 distance and cosine dissimilarity.

The anchor index is deliberately brute force: at the scales this package
targets (<= 1e5 anchors, d <= 2048) an exact scan is fast, trivially correct,
and easy to check against a full-sort oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .responses import LatentResponseSet
from .validation import as_float_matrix, check_option

MEASURES = ("l2", "cosine")


@dataclass
class QueryCounters:
    """Diagnostic counters accumulated across queries.

    zero_norm counts query/anchor pairs that fell back to the zero-norm
    cosine convention; clamped_k counts queries where k exceeded the number
    of anchors and all anchors were averaged instead.
    """

    zero_norm: int = 0
    clamped_k: int = 0


@dataclass(frozen=True)
class _CosineDiagnostics:
    zero_norm_pairs: int = 0


class NearestAnchors(BaseEstimator):
    """Brute-force index of in-distribution anchor vectors.

    Parameters
    ----------
    n_neighbors : default number of neighbors averaged per query.
    measure : "l2" for Euclidean distance or "cosine" for 1 - cosine
        similarity. A zero-norm query or anchor under cosine contributes
        dissimilarity 1.0 (counted, not raised): all-black image patches
        legitimately produce zero feature vectors in some layers.

    Fitted attributes (sklearn convention, trailing underscore): ``anchors_``
    is the M x d anchor matrix, ``norms_`` the precomputed L2 norms, and
    ``source_name_`` the name of the response set the anchors came from.
    The fitted index is immutable; queries are read-only and thread-safe.
    """

    def __init__(self, n_neighbors: int = 5, measure: str = "l2"):
        self.n_neighbors = n_neighbors
        self.measure = measure

    def fit(self, X, y=None) -> "NearestAnchors":
        X = as_float_matrix(X, "anchors")
        if X.shape[0] < 1:
            raise ValueError("anchor index requires at least one row")
        check_option(self.measure, MEASURES, "measure")
        self.anchors_ = X
        self.norms_ = np.linalg.norm(X, axis=1)
        if not hasattr(self, "source_name_"):
            self.source_name_ = "<array>"
        self.anchors_.flags.writeable = False
        self.norms_.flags.writeable = False
        return self

    @property
    def n_anchors_(self) -> int:
        self._check_fitted()
        return self.anchors_.shape[0]

    def _check_fitted(self) -> None:
        if not hasattr(self, "anchors_"):
            raise NotFittedError("this NearestAnchors index has not been fitted")

    def mean_distance(
        self,
        queries,
        k: int | None = None,
        measure: str | None = None,
        counters: QueryCounters | None = None,
    ) -> np.ndarray:
        """Mean dissimilarity from each query row to its k nearest anchors.

        Ties at the k-th smallest dissimilarity are broken by anchor
        insertion order. If k exceeds the anchor count, the mean is over all
        anchors and ``counters.clamped_k`` is incremented per query.
        """
        self._check_fitted()
        k = self.n_neighbors if k is None else int(k)
        measure = check_option(measure or self.measure, MEASURES, "measure")
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        Q = as_float_matrix(queries, "queries")
        if Q.shape[1] != self.anchors_.shape[1]:
            raise ValueError(
                f"query dimension {Q.shape[1]} does not match index dimension "
                f"{self.anchors_.shape[1]}"
            )
        if measure == "l2":
            dis = cdist(Q, self.anchors_, metric="euclidean")
        else:
            dis, diag = _cosine_dissimilarity(Q, self.anchors_, self.norms_)
            if counters is not None:
                counters.zero_norm += diag.zero_norm_pairs
        m = self.anchors_.shape[0]
        if k >= m:
            if k > m and counters is not None:
                counters.clamped_k += Q.shape[0]
            return dis.mean(axis=1)
        # stable argsort implements the insertion-order tie rule
        order = np.argsort(dis, axis=1, kind="stable")[:, :k]
        return np.take_along_axis(dis, order, axis=1).mean(axis=1)


def _cosine_dissimilarity(
    Q: np.ndarray, A: np.ndarray, a_norms: np.ndarray
) -> tuple[np.ndarray, _CosineDiagnostics]:
    q_norms = np.linalg.norm(Q, axis=1)
    q_zero = q_norms == 0.0
    a_zero = a_norms == 0.0
    qn = np.where(q_zero, 1.0, q_norms)
    an = np.where(a_zero, 1.0, a_norms)
    sims = (Q / qn[:, None]) @ (A / an[:, None]).T
    np.clip(sims, -1.0, 1.0, out=sims)
    dis = 1.0 - sims
    n_zero = 0
    if q_zero.any() or a_zero.any():
        zero_mask = q_zero[:, None] | a_zero[None, :]
        n_zero = int(zero_mask.sum())
        dis[zero_mask] = 1.0
    return dis, _CosineDiagnostics(zero_norm_pairs=n_zero)


def build_index(
    features: LatentResponseSet,
    columns: list[str] | None = None,
    n_neighbors: int = 5,
    measure: str = "l2",
) -> NearestAnchors:
    """Build an exact anchor index over selected columns of a response set.

    ``columns`` defaults to every column of kind ``feature``; an empty
    selection or an empty set is an error.
    """
    if columns is None:
        columns = features.columns_of_kind("feature")
    if not columns:
        raise ValueError(f"empty column selection for index over set {features.name!r}")
    if features.n_rows < 1:
        raise ValueError(f"cannot index empty response set {features.name!r}")
    idx = features.column_indices(columns)
    index = NearestAnchors(n_neighbors=n_neighbors, measure=measure)
    index.source_name_ = features.name
    return index.fit(features.values[:, idx])


def mean_knn_distance(
    index: NearestAnchors,
    query,
    k: int = 5,
    measure: str = "l2",
    counters: QueryCounters | None = None,
) -> float:
    """Mean dissimilarity from a single query vector to its k nearest anchors."""
    q = np.asarray(query, dtype=np.float64).reshape(1, -1)
    return float(index.mean_distance(q, k=k, measure=measure, counters=counters)[0])
