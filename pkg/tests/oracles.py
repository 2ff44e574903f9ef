"""Independent naive reference implementations.

Everything here is written directly from the definitions with plain loops,
deliberately sharing no code with the library: these are the oracles the
library is checked against, so they must stay independent of it.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def naive_dissimilarity(a, b, kind="euclidean"):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if kind == "euclidean":
        return math.sqrt(float(((a - b) ** 2).sum()))
    na = math.sqrt(float((a * a).sum()))
    nb = math.sqrt(float((b * b).sum()))
    if na == 0.0 or nb == 0.0:
        return 1.0
    cos = float((a * b).sum()) / (na * nb)
    cos = min(1.0, max(-1.0, cos))
    return 1.0 - cos


def naive_mrpp(X, labels, kind="euclidean", weighting="proportional"):
    """Weighted mean within-group pairwise dissimilarity, by double loop."""
    X = np.asarray(X, dtype=float)
    labels = list(labels)
    n = len(labels)
    groups = sorted(set(labels))
    delta = 0.0
    for g in groups:
        members = [i for i in range(n) if labels[i] == g]
        nk = len(members)
        assert nk >= 2
        total = 0.0
        for i, j in itertools.combinations(members, 2):
            total += naive_dissimilarity(X[i], X[j], kind)
        xi = total / (nk * (nk - 1) / 2)
        if weighting == "proportional":
            w = nk / n
        elif weighting == "inverse":
            w = 1.0 / nk
        else:
            w = 1.0 / len(groups)
        delta += w * xi
    return delta


def naive_rank_auc(scores, labels):
    """P(random positive scores above random negative), ties count half."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    wins = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                wins += 1.0
            elif p == q:
                wins += 0.5
    return wins / (len(pos) * len(neg))


def naive_auc_statistic(X, labels):
    """Folded AUC of the difference-of-group-means projection."""
    X = np.asarray(X, dtype=float)
    labels = np.asarray(labels)
    m0 = X[labels == 0].mean(axis=0)
    m1 = X[labels == 1].mean(axis=0)
    w = m0 - m1
    scores = X @ w
    auc = naive_rank_auc(scores, 1 - labels)  # group 0 is "positive" along w
    return max(auc, 1.0 - auc)


def naive_mean_difference(X, labels):
    X = np.asarray(X, dtype=float)
    labels = np.asarray(labels)
    m0 = X[labels == 0].mean(axis=0)
    m1 = X[labels == 1].mean(axis=0)
    return math.sqrt(float(((m0 - m1) ** 2).sum()))


def naive_exact_null(X, labels, stat_fn):
    """stat over every labeled assignment preserving the group-0 size."""
    labels = np.asarray(labels)
    n = len(labels)
    n0 = int((labels == 0).sum())
    values = []
    for combo in itertools.combinations(range(n), n0):
        assign = np.ones(n, dtype=int)
        assign[list(combo)] = 0
        values.append(stat_fn(X, assign))
    return np.asarray(values)


def naive_knn_mean(anchors, query, k, kind="l2"):
    """Mean of the k smallest dissimilarities, via a full stable sort."""
    anchors = np.asarray(anchors, dtype=float)
    query = np.asarray(query, dtype=float)
    dis = []
    for a in anchors:
        if kind == "l2":
            dis.append(naive_dissimilarity(a, query, "euclidean"))
        else:
            dis.append(naive_dissimilarity(a, query, "one-minus-cosine"))
    dis.sort()
    k = min(k, len(dis))
    return sum(dis[:k]) / k


def naive_one_minus_max_softmax(logits):
    z = [float(v) for v in logits]
    m = max(z)
    exps = [math.exp(v - m) for v in z]
    return 1.0 - max(exps) / sum(exps)


def naive_edl_uncertainty(beliefs):
    return 1.0 - sum(float(b) for b in beliefs)


def naive_reconstruction_error(x, x_hat, measure):
    if measure == "l2":
        return naive_dissimilarity(x, x_hat, "euclidean")
    return naive_dissimilarity(x, x_hat, "one-minus-cosine")


def naive_manifold_norms(first, last):
    return naive_dissimilarity(first, last, "euclidean")


def naive_zscore(X):
    """Population z-scores with the 1e-8 floor, column by column."""
    X = np.asarray(X, dtype=float)
    out = np.empty_like(X)
    for j in range(X.shape[1]):
        col = X[:, j]
        mu = col.mean()
        sd = col.std()
        if sd < 1e-8:
            sd = 1e-8
        out[:, j] = (col - mu) / sd
    return out
