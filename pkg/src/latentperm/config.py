"""Experiment configuration: a flat key-value text format with dotted keys.

Grammar: one ``key = value`` pair per line; blank lines and lines starting
with ``#`` are ignored; keys are dotted paths; values are plain strings
(lists are comma separated, booleans are ``true``/``false``). Unknown keys
are rejected so typos fail loudly. Example::

    seed = 1234
    normalize = true
    output.dir = out

    source.main.anchors = anchors.bin
    source.main.validation = validation.bin
    source.main.test = test.bin
    source.main.metrics = default

    test.statistic = mrpp
    test.permutations = 3000
    test.sample_size = 100

    matrix.rows = all
    matrix.cols = all

Metric specs can be spelled out instead of ``metrics = default``::

    source.main.metric.knn5.kind = knn-l2
    source.main.metric.knn5.columns = kind:feature
    source.main.metric.knn5.k = 5

Defaults mirror the reference experiments: 3000 permutations, sample size
100 per group, k = 5 neighbors, statistic mrpp.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import ConfigError, DataError
from .metrics import (
    _DEFAULT_INPUT_KIND,
    METRIC_KINDS,
    MetricSpec,
    default_metric_specs,
    resolve_columns,
)
from .permtest import PermutationConfig
from .responses import read_response_set


@dataclass
class SourceConfig:
    """One model's exported response sets plus the metric specs to run on them."""

    name: str
    validation: Path
    test: Path
    anchors: Path | None = None
    knn_anchors: str = "anchors"
    specs: list[MetricSpec] | None = None  # None -> default specs from columns
    k: int = 5
    t: int | None = None


@dataclass
class ExperimentConfig:
    """Validated view of one experiment configuration file.

    ``workers`` is execution infrastructure, not experiment identity: it is
    set from the command line (never from the file) and influences neither
    results nor emitted bytes.
    """

    path: Path
    raw_text: str
    sources: list[SourceConfig]
    permutation: PermutationConfig
    seed: int = 0
    workers: int = 1
    normalize: bool = True
    output_dir: Path = Path("out")
    rows: list[str] | None = None  # None -> every test-set label
    cols: list[str] | None = None  # None -> every validation-set label
    ensemble_ind: list[str] = field(default_factory=list)
    ensemble_ood: list[str] = field(default_factory=list)
    ensemble_split: float = 0.5
    ensemble_seed: int | None = None

    def config_hash(self) -> str:
        return hashlib.sha256(self.raw_text.encode("utf-8")).hexdigest()

    def echo(self) -> dict[str, Any]:
        """The experiment-defining settings (execution knobs like worker
        count are deliberately excluded so outputs do not depend on them)."""
        out: dict[str, Any] = {
            "seed": self.seed,
            "normalize": self.normalize,
            "rows": self.rows,
            "cols": self.cols,
            "ensemble": {
                "ind": self.ensemble_ind,
                "ood": self.ensemble_ood,
                "split": self.ensemble_split,
                "seed": self.ensemble_seed,
            },
            "test": {
                "permutations": self.permutation.permutations,
                "sample_size": self.permutation.sample_size,
                "seed": self.permutation.seed,
                "statistic": self.permutation.statistic,
                "dissimilarity": self.permutation.dissimilarity,
                "weighting": self.permutation.weighting,
                "exact": self.permutation.exact,
                "keep_null": self.permutation.keep_null,
            },
            "sources": {},
        }
        for src in self.sources:
            out["sources"][src.name] = {
                "anchors": str(src.anchors) if src.anchors else None,
                "validation": str(src.validation),
                "test": str(src.test),
                "knn_anchors": src.knn_anchors,
                "metrics": (
                    "default"
                    if src.specs is None
                    else [
                        {
                            "name": s.name,
                            "kind": s.kind,
                            "columns": s.columns,
                            "recon_columns": s.recon_columns,
                            "params": dict(s.params),
                        }
                        for s in src.specs
                    ]
                ),
                "k": src.k,
                "t": src.t,
            }
        return out


def _parse_pairs(text: str, origin: str) -> dict[str, str]:
    pairs: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{origin}: line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigError(f"{origin}: line {lineno}: empty key")
        if key in pairs:
            raise ConfigError(f"{origin}: line {lineno}: duplicate key {key!r}")
        pairs[key] = value
    return pairs


def _as_bool(value: str, key: str) -> bool:
    if value.lower() in ("true", "1", "yes"):
        return True
    if value.lower() in ("false", "0", "no"):
        return False
    raise ConfigError(f"{key}: expected true/false, got {value!r}")


def _as_int(value: str, key: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {value!r}") from None


def _as_float(value: str, key: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {value!r}") from None


def _as_list(value: str) -> list[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


_SOURCE_KEYS = ("anchors", "validation", "test", "knn_anchors", "metrics", "k", "t")
_SPEC_KEYS = ("kind", "columns", "recon_columns", "k", "t")
_TOP_KEYS = {
    "seed",
    "normalize",
    "output.dir",
    "test.statistic",
    "test.permutations",
    "test.sample_size",
    "test.seed",
    "test.dissimilarity",
    "test.weighting",
    "test.exact",
    "test.keep_null",
    "matrix.rows",
    "matrix.cols",
    "ensemble.ind",
    "ensemble.ood",
    "ensemble.split",
    "ensemble.seed",
}


def parse_config(text: str, path: str | Path = "<config>") -> ExperimentConfig:
    """Parse configuration text into an :class:`ExperimentConfig`.

    Performs structural validation only; use :func:`validate_config` to also
    check the referenced data files.
    """
    origin = str(path)
    pairs = _parse_pairs(text, origin)

    source_raw: dict[str, dict[str, str]] = {}
    spec_raw: dict[str, dict[str, dict[str, str]]] = {}
    for key, value in pairs.items():
        if not key.startswith("source."):
            if key not in _TOP_KEYS:
                raise ConfigError(f"{origin}: unknown key {key!r}")
            continue
        parts = key.split(".")
        if len(parts) == 3 and parts[2] in _SOURCE_KEYS:
            source_raw.setdefault(parts[1], {})[parts[2]] = value
        elif len(parts) == 5 and parts[2] == "metric" and parts[4] in _SPEC_KEYS:
            spec_raw.setdefault(parts[1], {}).setdefault(parts[3], {})[parts[4]] = value
        else:
            raise ConfigError(f"{origin}: unknown key {key!r}")

    if not source_raw:
        raise ConfigError(f"{origin}: at least one 'source.<name>.*' section is required")

    base = Path(origin).parent if Path(origin).name != "<config>" else Path(".")

    def as_path(value: str) -> Path:
        p = Path(value)
        return p if p.is_absolute() else base / p

    sources: list[SourceConfig] = []
    for name in sorted(source_raw):
        raw = source_raw[name]
        for required in ("validation", "test"):
            if required not in raw:
                raise ConfigError(f"{origin}: source.{name}.{required} is required")
        knn_anchors = raw.get("knn_anchors", "anchors")
        if knn_anchors not in ("anchors", "validation"):
            raise ConfigError(
                f"{origin}: source.{name}.knn_anchors must be 'anchors' or 'validation'"
            )
        specs: list[MetricSpec] | None
        spec_sections = spec_raw.get(name, {})
        if spec_sections:
            if raw.get("metrics", "") not in ("", "explicit"):
                raise ConfigError(
                    f"{origin}: source.{name} has explicit metric sections; "
                    "drop 'metrics = default'"
                )
            specs = []
            for mname in sorted(spec_sections):
                sraw = spec_sections[mname]
                if "kind" not in sraw:
                    raise ConfigError(f"{origin}: source.{name}.metric.{mname}.kind is required")
                kind = sraw["kind"]
                if kind not in METRIC_KINDS:
                    raise ConfigError(
                        f"{origin}: source.{name}.metric.{mname}.kind: unknown kind {kind!r}"
                    )
                params: dict[str, float] = {}
                if "k" in sraw:
                    params["k"] = _as_float(sraw["k"], f"source.{name}.metric.{mname}.k")
                if "t" in sraw:
                    params["t"] = _as_float(sraw["t"], f"source.{name}.metric.{mname}.t")
                specs.append(
                    MetricSpec(
                        name=mname,
                        kind=kind,
                        columns=sraw.get("columns"),
                        recon_columns=sraw.get("recon_columns"),
                        params=params,
                    )
                )
        elif raw.get("metrics", "default") == "default":
            specs = None
        else:
            raise ConfigError(
                f"{origin}: source.{name}.metrics must be 'default' or spelled-out "
                "metric sections"
            )
        sources.append(
            SourceConfig(
                name=name,
                validation=as_path(raw["validation"]),
                test=as_path(raw["test"]),
                anchors=as_path(raw["anchors"]) if "anchors" in raw else None,
                knn_anchors=knn_anchors,
                specs=specs,
                k=_as_int(raw["k"], f"source.{name}.k") if "k" in raw else 5,
                t=_as_int(raw["t"], f"source.{name}.t") if "t" in raw else None,
            )
        )

    seed = _as_int(pairs.get("seed", "0"), "seed")
    try:
        permutation = PermutationConfig(
            permutations=_as_int(pairs.get("test.permutations", "3000"), "test.permutations"),
            sample_size=_as_int(pairs.get("test.sample_size", "100"), "test.sample_size"),
            seed=_as_int(pairs["test.seed"], "test.seed") if "test.seed" in pairs else seed,
            statistic=pairs.get("test.statistic", "mrpp"),
            dissimilarity=pairs.get("test.dissimilarity", "euclidean"),
            weighting=pairs.get("test.weighting", "proportional"),
            exact=_as_bool(pairs.get("test.exact", "false"), "test.exact"),
            keep_null=_as_bool(pairs.get("test.keep_null", "false"), "test.keep_null"),
        )
    except ValueError as exc:
        raise ConfigError(f"{origin}: {exc}") from None

    def label_list(key: str) -> list[str] | None:
        if key not in pairs or pairs[key] == "all":
            return None
        labels = _as_list(pairs[key])
        if not labels:
            raise ConfigError(f"{origin}: {key} must be 'all' or a nonempty label list")
        return labels

    split = _as_float(pairs.get("ensemble.split", "0.5"), "ensemble.split")
    if not (0.0 < split < 1.0):
        raise ConfigError(f"{origin}: ensemble.split must lie strictly between 0 and 1")

    return ExperimentConfig(
        path=Path(origin),
        raw_text=text,
        sources=sources,
        permutation=permutation,
        seed=seed,
        normalize=_as_bool(pairs.get("normalize", "true"), "normalize"),
        output_dir=as_path(pairs.get("output.dir", "out")),
        rows=label_list("matrix.rows"),
        cols=label_list("matrix.cols"),
        ensemble_ind=_as_list(pairs.get("ensemble.ind", "")),
        ensemble_ood=_as_list(pairs.get("ensemble.ood", "")),
        ensemble_split=split,
        ensemble_seed=(
            _as_int(pairs["ensemble.seed"], "ensemble.seed") if "ensemble.seed" in pairs else None
        ),
    )


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"no such config file: {path}")
    return parse_config(path.read_text(encoding="utf-8"), path)


def validate_config(config: ExperimentConfig) -> dict[str, Any]:
    """Check that referenced files load, labels exist, and specs resolve.

    Returns a printable summary; raises :class:`ConfigError` or
    :class:`DataError` on problems.
    """
    summary: dict[str, Any] = {"sources": {}, "rows": None, "cols": None}
    test_labels: set[str] | None = None
    val_labels: set[str] | None = None
    for src in config.sources:
        info: dict[str, Any] = {}
        validation = read_response_set(src.validation)
        test = read_response_set(src.test)
        info["validation"] = {"rows": validation.n_rows, "columns": validation.n_columns}
        info["test"] = {"rows": test.n_rows, "columns": test.n_columns}
        specs = src.specs if src.specs is not None else default_metric_specs(
            validation, k=src.k, t=src.t
        )
        needs_index = any(s.kind in ("knn-l2", "knn-cosine") for s in specs)
        if needs_index:
            if src.knn_anchors == "anchors":
                if src.anchors is None:
                    raise ConfigError(
                        f"source {src.name!r}: knn metrics need source.{src.name}.anchors "
                        "(or knn_anchors = validation)"
                    )
                anchors = read_response_set(src.anchors)
            else:
                anchors = validation
            if not anchors.columns_of_kind("feature"):
                raise DataError(
                    f"source {src.name!r}: anchor set {anchors.name!r} has no feature columns"
                )
            info["anchors"] = {"rows": anchors.n_rows}
        for spec in specs:
            cols = resolve_columns(validation, spec.columns, _DEFAULT_INPUT_KIND[spec.kind])
            if not cols:
                raise DataError(
                    f"source {src.name!r}: metric {spec.name!r} resolves to no columns"
                )
        info["metrics"] = [s.name for s in specs]
        summary["sources"][src.name] = info
        tl, vl = set(test.groups), set(validation.groups)
        test_labels = tl if test_labels is None else test_labels & tl
        val_labels = vl if val_labels is None else val_labels & vl

    rows = config.rows if config.rows is not None else sorted(test_labels or ())
    cols = config.cols if config.cols is not None else sorted(val_labels or ())
    if not rows or not cols:
        raise ConfigError("matrix row/column label lists are empty")
    missing_rows = [r for r in rows if r not in (test_labels or set())]
    missing_cols = [c for c in cols if c not in (val_labels or set())]
    if missing_rows:
        raise DataError(f"row labels not present in every test set: {missing_rows}")
    if missing_cols:
        raise DataError(f"column labels not present in every validation set: {missing_cols}")
    summary["rows"] = rows
    summary["cols"] = cols
    return summary
