"""Test statistics for grouped metric vectors.

Three statistics quantify how different K groups of vectors are:

* ``mrpp`` -- the weighted mean within-group pairwise dissimilarity. For
  each group, the mean dissimilarity over its C(N_k, 2) unordered pairs is
  computed and the per-group means are combined with positive weights.
  Tight, well-separated groups give *small* values, so smaller is extreme.
* ``auc`` -- every sample is projected onto the difference of the two group
  means (recomputed from whatever assignment is being scored, so the
  statistic is a pure function of data and assignment), and the rank-based
  Mann-Whitney AUC of that scalar score is folded to max(A, 1-A). Larger is
  extreme; the value lives in [0.5, 1].
* ``mean-difference`` -- the L2 norm between the two group means. Larger is
  extreme.

The internal ``_StatisticEngine`` evaluates any of these over batches of
group assignments through one shared code path, which the permutation
module reuses so that observed and resampled values are bit-comparable.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.spatial.distance import cdist
from scipy.stats import rankdata

from .errors import RankDeficientWarning, ZeroDirectionWarning
from .validation import as_float_matrix, check_option

DISSIMILARITIES = ("euclidean", "one-minus-cosine", "precomputed")
WEIGHTINGS = ("proportional", "inverse", "uniform")
STATISTICS = ("mrpp", "auc", "mean-difference")

#: Which tail of the null distribution counts as evidence against H0.
ORIENTATIONS = {
    "mrpp": "smaller-is-extreme",
    "auc": "larger-is-extreme",
    "mean-difference": "larger-is-extreme",
}


@dataclass(frozen=True)
class GroupAssignment:
    """An assignment of N samples to K groups, as integer labels in [0, K)."""

    labels: np.ndarray
    n_groups: int

    def __post_init__(self) -> None:
        labels = np.asarray(self.labels, dtype=np.intp).ravel()
        if labels.size == 0:
            raise ValueError("assignment must cover at least one sample")
        if self.n_groups < 1:
            raise ValueError(f"n_groups must be >= 1, got {self.n_groups}")
        if labels.min() < 0 or labels.max() >= self.n_groups:
            raise ValueError(f"labels must lie in [0, {self.n_groups}), got range "
                             f"[{labels.min()}, {labels.max()}]")
        counts = np.bincount(labels, minlength=self.n_groups)
        if (counts == 0).any():
            missing = int(np.flatnonzero(counts == 0)[0])
            raise ValueError(f"group {missing} has no members")
        labels.flags.writeable = False
        object.__setattr__(self, "labels", labels)

    @property
    def n_samples(self) -> int:
        return self.labels.size

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_groups)

    @staticmethod
    def from_sequence(values: Sequence) -> "GroupAssignment":
        """Build from arbitrary hashable labels, indexed by first appearance."""
        mapping: dict = {}
        labels = []
        for v in values:
            if v not in mapping:
                mapping[v] = len(mapping)
            labels.append(mapping[v])
        return GroupAssignment(np.asarray(labels, dtype=np.intp), len(mapping))


def _as_assignment(groups) -> GroupAssignment:
    if isinstance(groups, GroupAssignment):
        return groups
    arr = np.asarray(groups)
    if arr.dtype.kind in "iu":
        return GroupAssignment(arr.astype(np.intp), int(arr.max()) + 1)
    return GroupAssignment.from_sequence(list(groups))


def dissimilarity_matrix(X, kind: str = "euclidean") -> np.ndarray:
    """Pairwise dissimilarity matrix: symmetric, nonnegative, zero diagonal
    for euclidean. Under one-minus-cosine a zero-norm row is at dissimilarity
    1.0 from everything, matching the knn convention."""
    X = as_float_matrix(X, "data")
    check_option(kind, ("euclidean", "one-minus-cosine"), "dissimilarity")
    if kind == "euclidean":
        return cdist(X, X, metric="euclidean")
    norms = np.linalg.norm(X, axis=1)
    zero = norms == 0.0
    U = X / np.where(zero, 1.0, norms)[:, None]
    sims = U @ U.T
    sims = (sims + sims.T) / 2.0
    np.clip(sims, -1.0, 1.0, out=sims)
    D = 1.0 - sims
    if zero.any():
        D[zero, :] = 1.0
        D[:, zero] = 1.0
    np.fill_diagonal(D, np.where(zero, 1.0, 0.0))
    return D


# -- canonical partitions ------------------------------------------------
#
# A partition is represented as a list of per-group index arrays, each
# sorted ascending, with the groups ordered by (size desc, min index asc).
# The representation depends only on which samples share a group -- not on
# group labels -- so every statistic evaluated through it is exactly
# invariant to relabeling groups.


def _canonical_parts(assignment: GroupAssignment) -> list[np.ndarray]:
    parts = [np.flatnonzero(assignment.labels == k) for k in range(assignment.n_groups)]
    parts.sort(key=lambda a: (-a.size, int(a[0])))
    return parts


def _canonicalize_batch(parts: list[np.ndarray]) -> list[np.ndarray]:
    """Canonicalize a batch of partitions given as (B, s_k) index arrays.

    Each row is sorted ascending; groups arrive ordered by descending size,
    and runs of equal-size groups are reordered per row by their minimum
    index so the representation is partition-determined.
    """
    parts = [np.sort(p, axis=1) for p in parts]
    sizes = [p.shape[1] for p in parts]
    start = 0
    while start < len(parts):
        end = start
        while end + 1 < len(parts) and sizes[end + 1] == sizes[start]:
            end += 1
        if end > start:
            stacked = np.stack(parts[start : end + 1], axis=1)  # (B, g, s)
            order = np.argsort(stacked[:, :, 0], axis=1, kind="stable")
            stacked = np.take_along_axis(stacked, order[:, :, None], axis=1)
            for g in range(end - start + 1):
                parts[start + g] = stacked[:, g, :]
        start = end + 1
    return parts


class _StatisticEngine:
    """Evaluates one statistic over batches of canonical partitions.

    Precomputes whatever the statistic needs from the data once (the full
    dissimilarity matrix for mrpp, nothing but the data matrix for auc/md)
    and exposes ``evaluate(parts)`` where ``parts`` is a canonical batch.
    Evaluation is elementwise-deterministic: the value computed for a
    partition does not depend on batch size or on the other partitions, so
    the observed statistic (a batch of one) is bit-comparable with any null
    sample.
    """

    def __init__(
        self,
        data,
        sizes: Sequence[int],
        statistic: str,
        dissimilarity: str = "euclidean",
        weighting: str = "proportional",
    ):
        check_option(statistic, STATISTICS, "statistic")
        check_option(weighting, WEIGHTINGS, "weighting")
        self.statistic = statistic
        self.sizes = sorted((int(s) for s in sizes), reverse=True)
        self.n = int(sum(self.sizes))
        if statistic == "mrpp":
            check_option(dissimilarity, DISSIMILARITIES, "dissimilarity")
            if dissimilarity == "precomputed":
                D = as_float_matrix(data, "dissimilarity matrix")
                if D.shape[0] != D.shape[1]:
                    raise ValueError(f"precomputed matrix must be square, got {D.shape}")
                if not np.allclose(D, D.T, atol=1e-12, rtol=0.0):
                    raise ValueError("precomputed dissimilarity matrix must be symmetric")
            else:
                D = dissimilarity_matrix(data, dissimilarity)
            if D.shape[0] != self.n:
                raise ValueError(f"data has {D.shape[0]} rows but sizes sum to {self.n}")
            if any(s < 2 for s in self.sizes):
                raise ValueError("mrpp requires every group to have at least 2 members")
            self._D = D
            self._rowsum = D.sum(axis=1)
            self._total = float(D.sum())
            k = len(self.sizes)
            if weighting == "proportional":
                self._weights = [s / self.n for s in self.sizes]
            elif weighting == "inverse":
                self._weights = [1.0 / s for s in self.sizes]
            else:
                self._weights = [1.0 / k for _ in self.sizes]
        else:
            if len(self.sizes) != 2:
                raise ValueError(f"{statistic} requires exactly 2 groups, got {len(self.sizes)}")
            self._X = as_float_matrix(data, "data")
            if self._X.shape[0] != self.n:
                raise ValueError(f"data has {self._X.shape[0]} rows but sizes sum to {self.n}")

    # block sum over each row's (s x s) submatrix of D
    def _block_sums(self, G: np.ndarray) -> np.ndarray:
        return self._D[G[:, :, None], G[:, None, :]].sum(axis=(1, 2))

    def _evaluate_mrpp(self, parts: list[np.ndarray]) -> np.ndarray:
        sizes = self.sizes
        if len(sizes) == 2:
            s0 = self._block_sums(parts[0])
            t0 = self._rowsum[parts[0]].sum(axis=1)
            s1 = self._total - 2.0 * t0 + s0
            xi0 = s0 / (sizes[0] * (sizes[0] - 1))
            xi1 = s1 / (sizes[1] * (sizes[1] - 1))
            return self._weights[0] * xi0 + self._weights[1] * xi1
        delta = np.zeros(parts[0].shape[0])
        for w, s, G in zip(self._weights, sizes, parts):
            delta += w * (self._block_sums(G) / (s * (s - 1)))
        return delta

    def _group_means(self, parts: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
        m0 = self._X[parts[0]].sum(axis=1) / self.sizes[0]
        m1 = self._X[parts[1]].sum(axis=1) / self.sizes[1]
        return m0, m1

    def _evaluate_md(self, parts: list[np.ndarray]) -> np.ndarray:
        m0, m1 = self._group_means(parts)
        return np.sqrt(((m0 - m1) ** 2).sum(axis=1))

    def _evaluate_auc(self, parts: list[np.ndarray]) -> tuple[np.ndarray, int]:
        m0, m1 = self._group_means(parts)
        W = m0 - m1  # (B, L)
        zero_count = int((W == 0.0).all(axis=1).sum())
        scores = np.einsum("nl,bl->nb", self._X, W)  # (N, B)
        ranks = rankdata(scores, axis=0, method="average")
        r0 = np.take_along_axis(ranks, parts[0].T, axis=0).sum(axis=0)
        n0, n1 = self.sizes
        u0 = r0 - n0 * (n0 + 1) / 2.0
        auc = u0 / (n0 * n1)
        return np.maximum(auc, 1.0 - auc), zero_count

    def evaluate(self, parts: list[np.ndarray]) -> tuple[np.ndarray, int]:
        """Statistic values for a canonical batch of partitions.

        Returns (values, zero_direction_count); the count is nonzero only
        for the auc statistic, when some batch entries had identical group
        means.
        """
        if self.statistic == "mrpp":
            return self._evaluate_mrpp(parts), 0
        if self.statistic == "auc":
            return self._evaluate_auc(parts)
        return self._evaluate_md(parts), 0

    def evaluate_assignment(self, assignment: GroupAssignment) -> tuple[float, bool]:
        parts = [p.reshape(1, -1) for p in _canonical_parts(assignment)]
        values, zeros = self.evaluate(parts)
        return float(values[0]), bool(zeros)


# -- public statistics ---------------------------------------------------


def mrpp_delta(
    data,
    groups,
    dissimilarity: str = "euclidean",
    weighting: str = "proportional",
) -> float:
    """Weighted mean within-group pairwise dissimilarity.

    ``data`` is either an N x L sample matrix, or -- with
    ``dissimilarity="precomputed"`` -- a symmetric N x N dissimilarity
    matrix. Weightings: ``proportional`` (N_k / N, the classical choice),
    ``inverse`` (1 / N_k), or ``uniform`` (1 / K). Every group must contain
    at least 2 samples so within-group pairs exist.
    """
    assignment = _as_assignment(groups)
    engine = _StatisticEngine(
        data, assignment.sizes, "mrpp", dissimilarity=dissimilarity, weighting=weighting
    )
    return engine.evaluate_assignment(assignment)[0]


def auc_statistic(data, groups) -> float:
    """Folded rank AUC of the difference-of-means projection, in [0.5, 1].

    The projection direction is recomputed from the given assignment, and
    ties are handled with midranks. When the two group means coincide the
    direction is zero, every score ties, and the result is exactly 0.5
    (a :class:`ZeroDirectionWarning` is emitted).
    """
    assignment = _as_assignment(groups)
    engine = _StatisticEngine(data, assignment.sizes, "auc")
    value, zero_direction = engine.evaluate_assignment(assignment)
    if zero_direction:
        warnings.warn(
            "groups have identical means; projection direction is zero and AUC is 0.5",
            ZeroDirectionWarning,
            stacklevel=2,
        )
    return value


def mean_difference_statistic(data, groups) -> float:
    """L2 norm of the difference between the two group means."""
    assignment = _as_assignment(groups)
    engine = _StatisticEngine(data, assignment.sizes, "mean-difference")
    return engine.evaluate_assignment(assignment)[0]


# -- metric ensembling via linear regression ------------------------------


def rank_auc(scores, labels) -> float:
    """Mann-Whitney AUC with midrank tie handling.

    Returns the probability that a random positive (label 1) scores above a
    random negative (label 0), counting ties as half.
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    pos = labels == 1
    n1 = int(pos.sum())
    n0 = scores.size - n1
    if n0 == 0 or n1 == 0:
        raise ValueError("rank_auc needs both a positive and a negative sample")
    ranks = rankdata(scores, method="average")
    u1 = ranks[pos].sum() - n1 * (n1 + 1) / 2.0
    return float(u1 / (n0 * n1))


@dataclass(frozen=True)
class EnsembleAucResult:
    """Fitted linear combination of metrics and its held-out AUC."""

    weights: np.ndarray
    intercept: float
    auc: float
    rank_deficient: bool


def ensemble_auc(train_X, train_y, eval_X, eval_y) -> EnsembleAucResult:
    """Score OoD-vs-InD separation of a least-squares metric ensemble.

    Fits ordinary least squares with intercept on the training half
    (targets: InD=0, OoD=1), scores the evaluation half with the fitted
    linear function, and reports the rank AUC of those scores. A rank
    deficient design falls back to the least-norm solution (diagnostic
    warning, not an error), which leaves predictions unchanged under
    duplicated columns.
    """
    train_X = as_float_matrix(train_X, "train_X")
    eval_X = as_float_matrix(eval_X, "eval_X")
    train_y = np.asarray(train_y, dtype=np.float64).ravel()
    eval_y = np.asarray(eval_y).ravel()
    if train_X.shape[0] != train_y.size:
        raise ValueError("train_X and train_y disagree on sample count")
    if set(np.unique(train_y)) != {0.0, 1.0}:
        raise ValueError("train_y must contain both labels 0 and 1")
    if eval_X.shape[0] == 0:
        raise ValueError("eval set is empty")
    design = np.column_stack([np.ones(train_X.shape[0]), train_X])
    coef, _, rank, _ = np.linalg.lstsq(design, train_y, rcond=None)
    deficient = rank < design.shape[1]
    if deficient:
        warnings.warn(
            f"design matrix rank {rank} < {design.shape[1]}; using least-norm solution",
            RankDeficientWarning,
            stacklevel=2,
        )
    scores = eval_X @ coef[1:] + coef[0]
    return EnsembleAucResult(
        weights=coef[1:],
        intercept=float(coef[0]),
        auc=rank_auc(scores, eval_y),
        rank_deficient=bool(deficient),
    )
