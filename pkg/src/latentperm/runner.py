"""End-to-end experiment orchestration.

Builds the metric pipeline from a config (load response sets, build anchor
indexes, compute per-source metric ensembles, join multi-source metrics by
sample id, fit normalization on the full validation metric set), then runs
the pairwise test-label x validation-label comparison matrix and writes
machine-readable reports.

Determinism: a full run is a pure function of the input files and the
config. Per-cell subsample and permutation seeds are derived by hashing
(master seed, row label, column label), so cells are reproducible in
isolation and decorrelated from each other; worker counts never influence
any emitted byte.
"""

from __future__ import annotations

import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from ._rng import derive_seed, stream
from .config import ExperimentConfig, validate_config
from .errors import ClampedSampleWarning, ConfigError, DataError
from .metrics import (
    MetricNormalizer,
    compute_metrics,
    default_metric_specs,
    metric_matrix,
)
from .neighbors import build_index
from .permtest import TestReport, permutation_test
from .responses import (
    LatentResponseSet,
    metrics_to_response_set,
    read_response_set,
    select_group,
    write_response_set,
)
from .stats import ensemble_auc, rank_auc


@dataclass(frozen=True)
class ComparisonMatrix:
    """Pairwise test results: one hypothesis test per (row, column) label pair."""

    row_labels: tuple[str, ...]
    col_labels: tuple[str, ...]
    statistics: np.ndarray
    p_values: np.ndarray
    reports: dict[tuple[str, str], TestReport]

    def __post_init__(self) -> None:
        shape = (len(self.row_labels), len(self.col_labels))
        if self.statistics.shape != shape or self.p_values.shape != shape:
            raise ValueError("matrix shapes do not match label lists")
        for r in self.row_labels:
            for c in self.col_labels:
                if (r, c) not in self.reports:
                    raise ValueError(f"missing report for cell ({r!r}, {c!r})")


@dataclass(frozen=True)
class EnsembleAucReport:
    """Standalone per-metric AUCs and the linear-ensemble AUC on a held-out half."""

    metric_names: tuple[str, ...]
    single_aucs: tuple[float, ...]
    ensemble: float
    weights: tuple[float, ...]
    intercept: float
    n_fit: int
    n_eval: int


class MetricPipeline:
    """Prepared state shared by every cell of a matrix run.

    Holds the joined (multi-source) validation/test metric sets, normalized
    with parameters fitted once on the full validation metrics when the
    config asks for normalization.
    """

    def __init__(self, config: ExperimentConfig):
        self.config = config
        val_parts: list[tuple[list[str], list[str], np.ndarray, dict[str, str]]] = []
        test_parts: list[tuple[list[str], list[str], np.ndarray, dict[str, str]]] = []
        for src in config.sources:
            validation = read_response_set(src.validation)
            test = read_response_set(src.test)
            specs = src.specs if src.specs is not None else default_metric_specs(
                validation, k=src.k, t=src.t
            )
            index = None
            if any(s.kind in ("knn-l2", "knn-cosine") for s in specs):
                if src.knn_anchors == "anchors":
                    if src.anchors is None:
                        raise ConfigError(
                            f"source {src.name!r}: knn metrics need an anchors file"
                        )
                    anchor_set = read_response_set(src.anchors)
                else:
                    anchor_set = validation
                index = build_index(anchor_set)
            prefix = f"{src.name}." if len(config.sources) > 1 else ""
            for rset, bucket in ((validation, val_parts), (test, test_parts)):
                ids, names, matrix = metric_matrix(compute_metrics(rset, specs, index))
                groups = dict(zip(rset.ids, rset.groups))
                bucket.append((ids, [prefix + n for n in names], matrix, groups))

        self.validation_metrics = _join_sources("validation-metrics", val_parts)
        self.test_metrics = _join_sources("test-metrics", test_parts)

        self.normalizer: MetricNormalizer | None = None
        if config.normalize:
            normalizer = MetricNormalizer().fit(self.validation_metrics.values)
            self.normalizer = normalizer
            self.validation_metrics = metrics_to_response_set(
                self.validation_metrics.name,
                self.validation_metrics.ids,
                self.validation_metrics.groups,
                self.validation_metrics.column_names(),
                normalizer.transform(self.validation_metrics.values),
            )
            self.test_metrics = metrics_to_response_set(
                self.test_metrics.name,
                self.test_metrics.ids,
                self.test_metrics.groups,
                self.test_metrics.column_names(),
                normalizer.transform(self.test_metrics.values),
            )

    @property
    def metric_names(self) -> list[str]:
        return self.validation_metrics.column_names()

    def row_labels(self) -> list[str]:
        if self.config.rows is not None:
            return list(self.config.rows)
        return sorted(set(self.test_metrics.groups))

    def col_labels(self) -> list[str]:
        if self.config.cols is not None:
            return list(self.config.cols)
        return sorted(set(self.validation_metrics.groups))


def _join_sources(
    name: str, parts: list[tuple[list[str], list[str], np.ndarray, dict[str, str]]]
) -> LatentResponseSet:
    """Concatenate per-source metric columns for identical sample id sets.

    Joins are exact: differing id sets across sources are an error rather
    than an intersection, so group sizes cannot drift silently.
    """
    base_ids = set(parts[0][0])
    for ids, _, _, _ in parts[1:]:
        if set(ids) != base_ids:
            only_a = sorted(base_ids - set(ids))[:3]
            only_b = sorted(set(ids) - base_ids)[:3]
            raise DataError(
                f"sample-id mismatch across sources for {name}: "
                f"e.g. {only_a} vs {only_b}"
            )
    order = sorted(base_ids)
    names: list[str] = []
    blocks: list[np.ndarray] = []
    for ids, metric_names, matrix, _ in parts:
        lookup = {sid: i for i, sid in enumerate(ids)}
        blocks.append(matrix[[lookup[sid] for sid in order]])
        names.extend(metric_names)
    if len(set(names)) != len(names):
        raise ConfigError(f"duplicate metric names after joining sources: {names}")
    groups = parts[0][3]
    for _, _, _, g in parts[1:]:
        for sid in order:
            if g[sid] != groups[sid]:
                raise DataError(
                    f"sample {sid!r} has conflicting group labels across sources: "
                    f"{groups[sid]!r} vs {g[sid]!r}"
                )
    return metrics_to_response_set(
        name,
        order,
        [groups[sid] for sid in order],
        names,
        np.hstack(blocks) if len(blocks) > 1 else blocks[0],
    )


def _subsample(
    rset: LatentResponseSet, label: str, sample_size: int, seed: int
) -> tuple[LatentResponseSet, bool]:
    available = sum(1 for g in rset.groups if g == label)
    if available == 0:
        raise DataError(f"unknown group label {label!r} in set {rset.name!r}")
    clamped = available < sample_size
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ClampedSampleWarning)
        subset = select_group(rset, label, sample_size, seed)
    return subset, clamped


def run_cell(
    config: ExperimentConfig,
    row: str,
    col: str,
    pipeline: MetricPipeline | None = None,
) -> TestReport:
    """Run the hypothesis test for one (test label, validation label) cell.

    Both groups are subsampled once (seeds derived from the master seed and
    the cell labels), stacked, and the group labels are then permuted; the
    same cell run alone or as part of the full matrix yields the identical
    report.
    """
    pipeline = pipeline if pipeline is not None else MetricPipeline(config)
    sample_size = config.permutation.sample_size
    rows_set, row_clamped = _subsample(
        pipeline.test_metrics, row, sample_size, derive_seed(config.seed, "row", row, col)
    )
    cols_set, col_clamped = _subsample(
        pipeline.validation_metrics, col, sample_size, derive_seed(config.seed, "col", row, col)
    )
    data = np.vstack([rows_set.values, cols_set.values])
    labels = np.asarray([0] * rows_set.n_rows + [1] * cols_set.n_rows, dtype=np.intp)
    cell_config = replace(config.permutation, seed=derive_seed(config.seed, "cell", row, col))
    return permutation_test(
        data,
        labels,
        cell_config,
        clamped_sample=row_clamped or col_clamped,
    )


def run_matrix(config: ExperimentConfig, pipeline: MetricPipeline | None = None) -> ComparisonMatrix:
    """Run every (row, column) comparison of the config's label grid."""
    pipeline = pipeline if pipeline is not None else MetricPipeline(config)
    rows = pipeline.row_labels()
    cols = pipeline.col_labels()
    if not rows or not cols:
        raise ConfigError("matrix row/column label lists are empty")
    cells = [(r, c) for r in rows for c in cols]

    def job(cell: tuple[str, str]) -> TestReport:
        return run_cell(config, cell[0], cell[1], pipeline)

    if config.workers > 1 and len(cells) > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(job, cells))
    else:
        results = [job(cell) for cell in cells]

    reports = dict(zip(cells, results))
    statistics = np.asarray([[reports[(r, c)].observed for c in cols] for r in rows])
    p_values = np.asarray([[reports[(r, c)].p_value for c in cols] for r in rows])
    return ComparisonMatrix(tuple(rows), tuple(cols), statistics, p_values, reports)


def run_ensemble_auc(
    config: ExperimentConfig, pipeline: MetricPipeline | None = None
) -> EnsembleAucReport:
    """Compare per-metric AUCs against the linear-ensemble AUC.

    InD/OoD membership comes from the config's ensemble label lists applied
    to the test set. The ensemble is fitted on one seeded stratified half
    and evaluated on the other; standalone AUCs are computed on the same
    evaluation half and folded to >= 0.5.
    """
    pipeline = pipeline if pipeline is not None else MetricPipeline(config)
    if not config.ensemble_ind or not config.ensemble_ood:
        raise ConfigError("ensemble.ind and ensemble.ood label lists are required")
    overlap = set(config.ensemble_ind) & set(config.ensemble_ood)
    if overlap:
        raise ConfigError(f"labels cannot be both InD and OoD: {sorted(overlap)}")
    tm = pipeline.test_metrics
    ind_idx = [i for i, g in enumerate(tm.groups) if g in set(config.ensemble_ind)]
    ood_idx = [i for i, g in enumerate(tm.groups) if g in set(config.ensemble_ood)]
    if not ind_idx:
        raise DataError(f"no test rows with InD labels {config.ensemble_ind}")
    if not ood_idx:
        raise DataError(f"no test rows with OoD labels {config.ensemble_ood}")

    seed = config.ensemble_seed if config.ensemble_seed is not None else config.seed
    rng = stream(derive_seed(seed, "ensemble-split"))

    def split(indices: list[int]) -> tuple[list[int], list[int]]:
        perm = rng.permutation(len(indices))
        cut = int(round(config.ensemble_split * len(indices)))
        cut = min(max(cut, 1), len(indices) - 1)
        fit = [indices[i] for i in perm[:cut]]
        hold = [indices[i] for i in perm[cut:]]
        return fit, hold

    if len(ind_idx) < 2 or len(ood_idx) < 2:
        raise DataError("need at least 2 InD and 2 OoD test rows to split fit/eval halves")
    fit_ind, eval_ind = split(ind_idx)
    fit_ood, eval_ood = split(ood_idx)
    fit_rows = fit_ind + fit_ood
    eval_rows = eval_ind + eval_ood
    y_fit = np.asarray([0] * len(fit_ind) + [1] * len(fit_ood))
    y_eval = np.asarray([0] * len(eval_ind) + [1] * len(eval_ood))
    X_fit = tm.values[fit_rows]
    X_eval = tm.values[eval_rows]

    singles = []
    for j in range(X_eval.shape[1]):
        auc = rank_auc(X_eval[:, j], y_eval)
        singles.append(max(auc, 1.0 - auc))
    result = ensemble_auc(X_fit, y_fit, X_eval, y_eval)
    return EnsembleAucReport(
        metric_names=tuple(tm.column_names()),
        single_aucs=tuple(singles),
        ensemble=result.auc,
        weights=tuple(float(w) for w in result.weights),
        intercept=result.intercept,
        n_fit=len(fit_rows),
        n_eval=len(eval_rows),
    )


# -- report emission -----------------------------------------------------


def _format_matrix_csv(labels_rows: Sequence[str], labels_cols: Sequence[str], M: np.ndarray) -> str:
    lines = [",".join(["row\\col"] + list(labels_cols))]
    for i, r in enumerate(labels_rows):
        lines.append(",".join([r] + [f"{v:.17g}" for v in M[i]]))
    return "\n".join(lines) + "\n"


def read_matrix_csv(path: str | Path) -> tuple[list[str], list[str], np.ndarray]:
    """Parse a matrix CSV written by :func:`emit_reports` back into memory."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    cols = lines[0].split(",")[1:]
    rows, values = [], []
    for line in lines[1:]:
        cells = line.split(",")
        rows.append(cells[0])
        values.append([float(v) for v in cells[1:]])
    return rows, cols, np.asarray(values)


def emit_reports(matrix: ComparisonMatrix, out_dir: str | Path, config: ExperimentConfig) -> None:
    """Write statistic.csv, pvalues.csv, per-cell reports, and a run manifest.

    Output is byte-deterministic: repeated runs of the same config over the
    same inputs produce identical files (no timestamps, sorted JSON keys).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "statistic.csv").write_text(
        _format_matrix_csv(matrix.row_labels, matrix.col_labels, matrix.statistics),
        encoding="utf-8",
    )
    (out / "pvalues.csv").write_text(
        _format_matrix_csv(matrix.row_labels, matrix.col_labels, matrix.p_values),
        encoding="utf-8",
    )
    cells_dir = out / "cells"
    cells_dir.mkdir(exist_ok=True)
    index = []
    for i, r in enumerate(matrix.row_labels):
        for j, c in enumerate(matrix.col_labels):
            fname = f"cell_{i:03d}_{j:03d}.json"
            payload = {"row": r, "col": c, **matrix.reports[(r, c)].to_dict()}
            (cells_dir / fname).write_text(
                json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8"
            )
            index.append({"row": r, "col": c, "file": f"cells/{fname}"})
    manifest = {
        "tool": {"name": "latentperm", "version": __version__},
        "config_sha256": config.config_hash(),
        "config": config.echo(),
        "row_labels": list(matrix.row_labels),
        "col_labels": list(matrix.col_labels),
        "cells": index,
        "cell_seeds": {
            f"{r}|{c}": derive_seed(config.seed, "cell", r, c)
            for r in matrix.row_labels
            for c in matrix.col_labels
        },
        "subsampling": (
            "groups are subsampled once per cell (seeds derived from the master seed "
            "and the cell labels, redrawn per cell), then group labels are permuted"
        ),
    }
    (out / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def emit_ensemble_report(report: EnsembleAucReport, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["metric,auc"]
    for name, auc in zip(report.metric_names, report.single_aucs):
        lines.append(f"{name},{auc:.17g}")
    lines.append(f"__ensemble__,{report.ensemble:.17g}")
    (out / "ensemble_auc.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")


def emit_metric_sets(
    pipeline: MetricPipeline, out_dir: str | Path, fmt: str = "csv"
) -> list[Path]:
    """Export the joined (and, if configured, normalized) metric sets."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for rset, stem in (
        (pipeline.validation_metrics, "metrics-validation"),
        (pipeline.test_metrics, "metrics-test"),
    ):
        path = out / f"{stem}.{fmt}"
        write_response_set(rset, path, fmt)
        written.append(path)
    if pipeline.normalizer is not None:
        params = pipeline.normalizer.params(pipeline.metric_names)
        path = out / "normalization.json"
        path.write_text(
            json.dumps(params.to_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )
        written.append(path)
    return written


__all__ = [
    "ComparisonMatrix",
    "EnsembleAucReport",
    "MetricPipeline",
    "emit_ensemble_report",
    "emit_metric_sets",
    "emit_reports",
    "read_matrix_csv",
    "run_cell",
    "run_ensemble_auc",
    "run_matrix",
    "validate_config",
]
