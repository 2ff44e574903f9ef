"""Per-sample OoD metric ensembles computed from latent responses.

Each :class:`MetricSpec` turns one slice of a response set into one scalar
per sample; a list of specs therefore maps every d-dimensional row to an
L-dimensional metric vector (L = number of specs, typically far smaller
than d). All metrics are oriented as dissimilarities so that larger values
mean "more out-of-distribution".

Iterate columns (kinds ``iterate-x`` / ``iterate-z`` / ``iterate-y``) follow
the naming convention ``<prefix><t>_<j>``, e.g. ``x0_0 ... x0_195, x1_0 ...``
where ``t`` is the encode-decode step and ``j`` the component index.
"""

from __future__ import annotations

import fnmatch
import re
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .errors import DataError
from .neighbors import NearestAnchors, QueryCounters
from .responses import LatentResponseSet
from .validation import as_float_matrix, as_float_vector

METRIC_KINDS = (
    "knn-l2",
    "knn-cosine",
    "recon-l2",
    "recon-ip",
    "manifold-x",
    "manifold-z",
    "manifold-y",
    "one-minus-max-softmax",
    "edl-uncertainty",
    "passthrough",
)

_DEFAULT_INPUT_KIND = {
    "knn-l2": "feature",
    "knn-cosine": "feature",
    "recon-l2": "image",
    "recon-ip": "image",
    "manifold-x": "iterate-x",
    "manifold-z": "iterate-z",
    "manifold-y": "iterate-y",
    "one-minus-max-softmax": "logit",
    "edl-uncertainty": "belief",
    "passthrough": "metric",
}

_ITERATE_NAME = re.compile(r"^(?P<prefix>.*?)(?P<t>\d+)_(?P<j>\d+)$")


@dataclass(frozen=True)
class MetricVector:
    """The L metric values computed for one sample."""

    sample_id: str
    values: np.ndarray
    metric_names: tuple[str, ...]

    def __post_init__(self) -> None:
        vals = as_float_vector(self.values, "metric values")
        if len(vals) != len(self.metric_names):
            raise ValueError(
                f"{len(vals)} values but {len(self.metric_names)} metric names"
            )
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "metric_names", tuple(self.metric_names))


@dataclass(frozen=True)
class MetricSpec:
    """Declares one metric: its kind, input columns, and parameters.

    ``columns`` selects the primary input columns and accepts an explicit
    name list, a ``kind:<kind>`` selector, a ``prefix*`` glob, or None for
    the kind's default columns. Reconstruction metrics additionally take
    ``recon_columns`` (default ``kind:reconstruction``), aligned positionally
    with the image columns. Parameters: ``k`` for knn metrics (default 5),
    ``t`` for manifold metrics (expected step count T, validated when given).
    """

    name: str
    kind: str
    columns: str | Sequence[str] | None = None
    recon_columns: str | Sequence[str] | None = None
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in METRIC_KINDS:
            raise ValueError(f"unknown metric kind {self.kind!r} for spec {self.name!r}")


def resolve_columns(
    rset: LatentResponseSet, selector: str | Sequence[str] | None, default_kind: str
) -> list[str]:
    """Resolve a column selector against a response set's columns."""
    if selector is None:
        selector = f"kind:{default_kind}"
    if isinstance(selector, str):
        if selector.startswith("kind:"):
            names = rset.columns_of_kind(selector[5:])
        elif "*" in selector or "?" in selector:
            names = [n for n in rset.column_names() if fnmatch.fnmatchcase(n, selector)]
        else:
            names = [s.strip() for s in selector.split(",") if s.strip()]
            rset.column_indices(names)  # raises on unknown names
    else:
        names = list(selector)
        rset.column_indices(names)
    return names


# -- scalar metric formulas -------------------------------------------


def reconstruction_error(x, x_hat, measure: str = "l2") -> float:
    """Dissimilarity between an input and its reconstruction.

    ``l2`` is the Euclidean distance; ``ip`` is 1 - cosine similarity (the
    similarity is re-oriented so larger means worse reconstruction).
    """
    a = as_float_vector(x, "x")
    b = as_float_vector(x_hat, "x_hat")
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if measure == "l2":
        return float(np.linalg.norm(a - b))
    if measure == "ip":
        na, nb = np.linalg.norm(a), np.linalg.norm(b)
        if na == 0.0 or nb == 0.0:
            return 1.0
        return float(1.0 - np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))
    raise ValueError(f"measure must be 'l2' or 'ip', got {measure!r}")


def manifold_distance(iterates_x, iterates_z, iterates_y) -> tuple[float, float, float]:
    """Displacement after repeated encode-decode steps, in input, latent, and
    logit space: the L2 norms between the final iterate and the initial one.

    Each argument is a sequence of T+1 vectors; the three sequences must
    share the same T but may have different dimensionality.
    """
    seqs = []
    for name, seq in (("x", iterates_x), ("z", iterates_z), ("y", iterates_y)):
        arr = np.asarray(seq, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 2:
            raise ValueError(f"iterates_{name} must be a (T+1) x d sequence with T >= 1")
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"iterates_{name} contains non-finite values")
        seqs.append(arr)
    lengths = {s.shape[0] for s in seqs}
    if len(lengths) != 1:
        raise ValueError(f"iterate sequences disagree on T+1: {sorted(lengths)}")
    return tuple(float(np.linalg.norm(s[-1] - s[0])) for s in seqs)  # type: ignore[return-value]


def one_minus_max_softmax(logits) -> float:
    """1 minus the maximum softmax probability, computed with max-subtraction."""
    z = as_float_vector(logits, "logits")
    if z.size < 2:
        raise ValueError(f"need at least 2 logits, got {z.size}")
    return float(_one_minus_max_softmax_rows(z.reshape(1, -1))[0])


def _one_minus_max_softmax_rows(Z: np.ndarray) -> np.ndarray:
    shifted = Z - Z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return 1.0 - e.max(axis=1) / e.sum(axis=1)


def edl_uncertainty(beliefs) -> float:
    """Evidential uncertainty 1 - sum of per-class belief masses.

    Applied verbatim with no clamping, so inputs whose masses exceed 1 in
    total yield negative uncertainty.
    """
    b = as_float_vector(beliefs, "beliefs")
    return float(1.0 - b.sum())


# -- iterate-column bookkeeping ----------------------------------------


def _group_iterates(names: Sequence[str], spec_name: str) -> list[list[str]]:
    """Group iterate column names by step t, each group ordered by component j."""
    by_t: dict[int, list[tuple[int, str]]] = {}
    for n in names:
        m = _ITERATE_NAME.match(n)
        if m is None:
            raise DataError(
                f"metric {spec_name!r}: iterate column {n!r} does not follow "
                "the '<prefix><t>_<j>' naming convention"
            )
        by_t.setdefault(int(m.group("t")), []).append((int(m.group("j")), n))
    steps = sorted(by_t)
    if steps != list(range(len(steps))):
        raise DataError(f"metric {spec_name!r}: iterate steps {steps} are not contiguous from 0")
    groups = [[n for _, n in sorted(by_t[t])] for t in steps]
    dims = {len(g) for g in groups}
    if len(dims) != 1:
        raise DataError(f"metric {spec_name!r}: iterate steps have inconsistent dimensions {sorted(dims)}")
    return groups


# -- ensemble computation ----------------------------------------------


def _evaluate_spec(
    rset: LatentResponseSet,
    spec: MetricSpec,
    index: NearestAnchors | None,
    counters: QueryCounters,
) -> np.ndarray:
    cols = resolve_columns(rset, spec.columns, _DEFAULT_INPUT_KIND[spec.kind])
    if not cols:
        raise DataError(f"metric {spec.name!r}: no input columns resolved in set {rset.name!r}")
    X = rset.values[:, rset.column_indices(cols)]

    if spec.kind in ("knn-l2", "knn-cosine"):
        if index is None:
            raise DataError(f"metric {spec.name!r} requires an anchor index")
        k = int(spec.params.get("k", 5))
        measure = "l2" if spec.kind == "knn-l2" else "cosine"
        return index.mean_distance(X, k=k, measure=measure, counters=counters)

    if spec.kind in ("recon-l2", "recon-ip"):
        rcols = resolve_columns(rset, spec.recon_columns, "reconstruction")
        if len(rcols) != len(cols):
            raise DataError(
                f"metric {spec.name!r}: {len(cols)} image columns vs "
                f"{len(rcols)} reconstruction columns"
            )
        R = rset.values[:, rset.column_indices(rcols)]
        if spec.kind == "recon-l2":
            return np.linalg.norm(X - R, axis=1)
        nx = np.linalg.norm(X, axis=1)
        nr = np.linalg.norm(R, axis=1)
        zero = (nx == 0.0) | (nr == 0.0)
        sims = np.einsum("ij,ij->i", X, R) / np.where(zero, 1.0, nx * nr)
        out = 1.0 - np.clip(sims, -1.0, 1.0)
        out[zero] = 1.0
        return out

    if spec.kind in ("manifold-x", "manifold-z", "manifold-y"):
        groups = _group_iterates(cols, spec.name)
        if "t" in spec.params and len(groups) != int(spec.params["t"]) + 1:
            raise DataError(
                f"metric {spec.name!r}: expected {int(spec.params['t']) + 1} iterate "
                f"steps, found {len(groups)}"
            )
        if len(groups) < 2:
            raise DataError(f"metric {spec.name!r}: need at least steps 0 and 1")
        first = rset.values[:, rset.column_indices(groups[0])]
        last = rset.values[:, rset.column_indices(groups[-1])]
        return np.linalg.norm(last - first, axis=1)

    if spec.kind == "one-minus-max-softmax":
        if X.shape[1] < 2:
            raise DataError(f"metric {spec.name!r}: need at least 2 logit columns")
        return _one_minus_max_softmax_rows(X)

    if spec.kind == "edl-uncertainty":
        return 1.0 - X.sum(axis=1)

    if spec.kind == "passthrough":
        if X.shape[1] != 1:
            raise DataError(
                f"metric {spec.name!r}: passthrough takes exactly one column, got {len(cols)}"
            )
        return X[:, 0].copy()

    raise AssertionError(f"unhandled metric kind {spec.kind}")


def compute_metrics(
    raw: LatentResponseSet,
    specs: Sequence[MetricSpec],
    index: NearestAnchors | None = None,
    counters: QueryCounters | None = None,
) -> list[MetricVector]:
    """Compute the metric ensemble for every row of a response set.

    Returns one :class:`MetricVector` per row with values ordered like
    ``specs``. The result depends only on the rows, the specs, and the
    index, never on row order.
    """
    if not specs:
        raise ValueError("specs must be nonempty")
    counters = counters if counters is not None else QueryCounters()
    names = tuple(s.name for s in specs)
    if len(set(names)) != len(names):
        raise ValueError(f"duplicate metric names in specs: {names}")
    cols = [_evaluate_spec(raw, spec, index, counters) for spec in specs]
    matrix = np.column_stack(cols) if raw.n_rows else np.empty((0, len(specs)))
    if matrix.size and not np.all(np.isfinite(matrix)):
        bad = np.argwhere(~np.isfinite(matrix))[0]
        raise DataError(
            f"metric {names[bad[1]]!r} produced a non-finite value for sample "
            f"{raw.ids[bad[0]]!r}"
        )
    return [
        MetricVector(raw.ids[i], matrix[i], names) for i in range(raw.n_rows)
    ]


def metric_matrix(vectors: Sequence[MetricVector]) -> tuple[list[str], list[str], np.ndarray]:
    """Stack metric vectors into (ids, metric names, N x L matrix)."""
    if not vectors:
        raise ValueError("no metric vectors given")
    names = vectors[0].metric_names
    for v in vectors:
        if v.metric_names != names:
            raise ValueError("metric vectors disagree on metric names")
    return (
        [v.sample_id for v in vectors],
        list(names),
        np.vstack([v.values for v in vectors]),
    )


def default_metric_specs(
    rset: LatentResponseSet, k: int = 5, t: int | None = None
) -> list[MetricSpec]:
    """One spec per metric kind the set's columns support, paper defaults.

    knn metrics appear whenever feature columns exist (an index must then be
    supplied to :func:`compute_metrics`); reconstruction metrics when both
    image and reconstruction columns exist; manifold metrics per iterate
    kind; softmax/EDL metrics when logit/belief columns exist; and one
    passthrough per pre-computed metric column.
    """
    specs: list[MetricSpec] = []
    params_k = {"k": float(k)}
    params_t = {} if t is None else {"t": float(t)}
    if rset.columns_of_kind("feature"):
        specs.append(MetricSpec("knn-l2", "knn-l2", params=params_k))
        specs.append(MetricSpec("knn-cosine", "knn-cosine", params=params_k))
    if rset.columns_of_kind("image") and rset.columns_of_kind("reconstruction"):
        specs.append(MetricSpec("recon-l2", "recon-l2"))
        specs.append(MetricSpec("recon-ip", "recon-ip"))
    for kind in ("iterate-x", "iterate-z", "iterate-y"):
        if rset.columns_of_kind(kind):
            short = kind.split("-")[1]
            specs.append(MetricSpec(f"manifold-{short}", f"manifold-{short}", params=params_t))
    if len(rset.columns_of_kind("logit")) >= 2:
        specs.append(MetricSpec("one-minus-max-softmax", "one-minus-max-softmax"))
    if rset.columns_of_kind("belief"):
        specs.append(MetricSpec("edl-uncertainty", "edl-uncertainty"))
    for name in rset.columns_of_kind("metric"):
        specs.append(MetricSpec(name, "passthrough", columns=[name]))
    if not specs:
        raise DataError(f"set {rset.name!r} has no columns any default metric applies to")
    return specs


class OodMetricExtractor(BaseEstimator, TransformerMixin):
    """Transformer from latent response sets to metric matrices.

    ``fit`` takes the anchor response set and builds the knn index over its
    feature columns (skipped when no spec needs one); ``transform`` maps a
    response set to its N x L metric matrix. Composes with sklearn pipelines
    operating on response-set objects.
    """

    def __init__(
        self,
        specs: Sequence[MetricSpec],
        anchor_columns: str | Sequence[str] | None = None,
        measure_defaults: bool = True,
    ):
        self.specs = list(specs)
        self.anchor_columns = anchor_columns
        self.measure_defaults = measure_defaults

    def _needs_index(self) -> bool:
        return any(s.kind in ("knn-l2", "knn-cosine") for s in self.specs)

    def fit(self, anchors: LatentResponseSet | None = None, y=None) -> "OodMetricExtractor":
        from .neighbors import build_index

        if self._needs_index():
            if anchors is None:
                raise DataError("knn metric specs require an anchor response set to fit")
            cols = (
                resolve_columns(anchors, self.anchor_columns, "feature")
                if self.anchor_columns is not None
                else None
            )
            self.index_ = build_index(anchors, columns=cols)
        else:
            self.index_ = None
        self.counters_ = QueryCounters()
        return self

    def transform(self, rset: LatentResponseSet) -> np.ndarray:
        if not hasattr(self, "index_"):
            raise NotFittedError("OodMetricExtractor has not been fitted")
        _, _, matrix = metric_matrix(
            compute_metrics(rset, self.specs, self.index_, self.counters_)
        )
        return matrix

    def metric_names(self) -> list[str]:
        return [s.name for s in self.specs]


# -- normalization ------------------------------------------------------


@dataclass(frozen=True)
class NormalizationParams:
    """Per-metric location/scale estimated from validation data.

    ``stds`` are population (1/N) standard deviations floored at
    ``std_floor``; ``floored`` marks metrics whose raw deviation fell below
    the floor (near-constant columns).
    """

    means: np.ndarray
    stds: np.ndarray
    floored: np.ndarray
    metric_names: tuple[str, ...] = ()
    std_floor: float = 1e-8

    def to_dict(self) -> dict:
        return {
            "means": [float(v) for v in self.means],
            "stds": [float(v) for v in self.stds],
            "floored": [bool(v) for v in self.floored],
            "metric_names": list(self.metric_names),
            "std_floor": self.std_floor,
        }


class MetricNormalizer(BaseEstimator, TransformerMixin):
    """Zero-mean / unit-variance scaler with a variance floor.

    Uses the population (1/N) standard deviation; columns with deviation
    below ``std_floor`` are scaled by the floor instead, which maps constant
    columns to all zeros rather than dividing by ~0. Fit on validation data
    only; apply the fitted transform to test data unchanged.
    """

    def __init__(self, std_floor: float = 1e-8):
        self.std_floor = std_floor

    def fit(self, X, y=None) -> "MetricNormalizer":
        X = as_float_matrix(X, "metrics")
        if X.shape[0] < 2:
            raise ValueError(f"need at least 2 rows to estimate normalization, got {X.shape[0]}")
        self.means_ = X.mean(axis=0)
        raw_std = X.std(axis=0)
        self.floored_ = raw_std < self.std_floor
        self.stds_ = np.where(self.floored_, self.std_floor, raw_std)
        return self

    def transform(self, X) -> np.ndarray:
        if not hasattr(self, "means_"):
            raise NotFittedError("MetricNormalizer has not been fitted")
        X = as_float_matrix(X, "metrics")
        if X.shape[1] != self.means_.shape[0]:
            raise ValueError(
                f"X has {X.shape[1]} metrics but normalizer was fitted on {self.means_.shape[0]}"
            )
        return (X - self.means_) / self.stds_

    def params(self, metric_names: Sequence[str] = ()) -> NormalizationParams:
        if not hasattr(self, "means_"):
            raise NotFittedError("MetricNormalizer has not been fitted")
        return NormalizationParams(
            means=self.means_.copy(),
            stds=self.stds_.copy(),
            floored=self.floored_.copy(),
            metric_names=tuple(metric_names),
            std_floor=self.std_floor,
        )


def fit_normalization(val_metrics: Sequence[MetricVector], std_floor: float = 1e-8) -> NormalizationParams:
    """Estimate per-metric normalization from validation metric vectors."""
    _, names, X = metric_matrix(val_metrics)
    return MetricNormalizer(std_floor=std_floor).fit(X).params(names)


def apply_normalization(
    params: NormalizationParams, vectors: Sequence[MetricVector]
) -> list[MetricVector]:
    """Apply validation-estimated normalization to any metric vectors."""
    ids, names, X = metric_matrix(vectors)
    if params.metric_names and tuple(names) != params.metric_names:
        raise ValueError(
            f"metric names {names} do not match normalization params {list(params.metric_names)}"
        )
    Z = (X - params.means) / params.stds
    return [MetricVector(ids[i], Z[i], tuple(names)) for i in range(len(ids))]
