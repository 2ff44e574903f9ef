"""The permutation engine: resampling p-values for grouped comparisons.

Under the null hypothesis that all samples come from one population, the
observed grouping is just one of the equally likely size-preserving
assignments of samples to groups. The engine evaluates the chosen statistic
under P random such assignments (or, for small N, under every one of them)
and reports the proportion at least as extreme as the observed value --
smaller-or-equal for mrpp, greater-or-equal for auc and mean-difference,
with ties counting as extreme.

Monte Carlo p-values use add-one smoothing, (1 + extreme) / (1 + P), so the
reported evidence is never exactly zero; exact mode reports the raw
proportion, which is positive because the observed assignment is itself in
the enumeration.

Reproducibility: permutation i draws its assignment from a Philox stream
keyed by (seed, i), so results are bit-identical for any worker count or
chunk schedule. Assignments are reduced to canonical partitions before
evaluation, which makes every reported value exactly invariant to swapping
group labels.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Sequence

import numpy as np

from ._rng import stream
from .errors import DataError
from .stats import (
    ORIENTATIONS,
    STATISTICS,
    _as_assignment,
    _canonicalize_batch,
    _canonical_parts,
    _StatisticEngine,
    GroupAssignment,
)
from .validation import check_option

_CHUNK = 256  # permutations per evaluation batch; fixed so chunking never depends on workers
_EXACT_LIMIT = 10**6


@dataclass(frozen=True)
class PermutationConfig:
    """Settings for one permutation test; defaults follow the reference setup
    (3000 permutations, 100 samples per group, mrpp over euclidean
    dissimilarity with proportional group weights)."""

    permutations: int = 3000
    sample_size: int = 100
    seed: int = 0
    statistic: str = "mrpp"
    dissimilarity: str = "euclidean"
    weighting: str = "proportional"
    exact: bool = False
    keep_null: bool = False
    strict_flags: bool = False

    def __post_init__(self) -> None:
        if self.permutations < 1:
            raise ValueError(f"permutations must be >= 1, got {self.permutations}")
        check_option(self.statistic, STATISTICS, "statistic")
        min_size = 2 if self.statistic == "mrpp" else 1
        if self.sample_size < min_size:
            raise ValueError(
                f"sample_size must be >= {min_size} for {self.statistic}, got {self.sample_size}"
            )


@dataclass(frozen=True)
class ReportFlags:
    clamped_sample: bool = False
    zero_direction: bool = False
    exact_mode: bool = False


@dataclass(frozen=True)
class TestReport:
    """Everything needed to interpret and reproduce one comparison."""

    statistic: str
    orientation: str
    observed: float
    p_value: float
    permutations: int
    extreme_count: int
    seed: int
    flags: ReportFlags
    config: dict[str, Any] = field(default_factory=dict)
    null_sample: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if not (0.0 < self.p_value <= 1.0):
            raise ValueError(f"p-value must lie in (0, 1], got {self.p_value}")

    def to_dict(self) -> dict[str, Any]:
        out = {
            "statistic": self.statistic,
            "orientation": self.orientation,
            "observed": self.observed,
            "p_value": self.p_value,
            "permutations": self.permutations,
            "extreme_count": self.extreme_count,
            "seed": self.seed,
            "flags": asdict(self.flags),
            "config": dict(self.config),
        }
        if self.null_sample is not None:
            out["null_sample"] = list(self.null_sample)
        return out


def _is_extreme(null_values: np.ndarray, observed: float, statistic: str) -> np.ndarray:
    if ORIENTATIONS[statistic] == "smaller-is-extreme":
        return null_values <= observed
    return null_values >= observed


def _random_parts_chunk(
    n: int, sizes_desc: Sequence[int], seed: int, start: int, count: int
) -> list[np.ndarray]:
    """Assignments for permutation indices [start, start+count), one Philox
    stream per index, split into canonically ordered parts."""
    perms = np.empty((count, n), dtype=np.intp)
    for i in range(count):
        perms[i] = stream(seed, start + i).permutation(n)
    parts = []
    offset = 0
    for s in sizes_desc:
        parts.append(perms[:, offset : offset + s])
        offset += s
    return _canonicalize_batch(parts)


def permutation_test(
    data,
    observed,
    config: PermutationConfig,
    workers: int = 1,
    clamped_sample: bool = False,
) -> TestReport:
    """Test whether the observed grouping is extreme among random regroupings.

    ``data`` is the pooled N x L matrix (or N x N dissimilarity matrix for
    ``dissimilarity="precomputed"``); ``observed`` assigns each row to a
    group. The report is a pure function of (data, observed, config):
    ``workers`` only parallelizes evaluation and never changes any value.
    """
    assignment = _as_assignment(observed)
    engine = _StatisticEngine(
        data,
        assignment.sizes,
        config.statistic,
        dissimilarity=config.dissimilarity,
        weighting=config.weighting,
    )
    observed_value, observed_zero = engine.evaluate_assignment(assignment)
    if observed_zero and config.strict_flags:
        raise DataError("observed groups have identical means (zero projection direction)")

    if config.exact:
        null_values = exact_null(data, assignment, config, engine=engine)
        extreme = int(_is_extreme(null_values, observed_value, config.statistic).sum())
        total = null_values.size
        p_value = extreme / total
        null_kept = tuple(float(v) for v in null_values) if config.keep_null else None
        return TestReport(
            statistic=config.statistic,
            orientation=ORIENTATIONS[config.statistic],
            observed=observed_value,
            p_value=p_value,
            permutations=total,
            extreme_count=extreme,
            seed=config.seed,
            flags=ReportFlags(
                clamped_sample=clamped_sample,
                zero_direction=observed_zero,
                exact_mode=True,
            ),
            config=asdict(config),
            null_sample=null_kept,
        )

    n = assignment.n_samples
    sizes_desc = sorted((int(s) for s in assignment.sizes), reverse=True)
    p_total = config.permutations
    starts = list(range(0, p_total, _CHUNK))

    def run_chunk(start: int) -> tuple[np.ndarray, int]:
        count = min(_CHUNK, p_total - start)
        parts = _random_parts_chunk(n, sizes_desc, config.seed, start, count)
        return engine.evaluate(parts)

    if workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunk_results = list(pool.map(run_chunk, starts))
    else:
        chunk_results = [run_chunk(s) for s in starts]

    null_values = np.concatenate([values for values, _ in chunk_results])
    zero_hits = sum(z for _, z in chunk_results)
    extreme = int(_is_extreme(null_values, observed_value, config.statistic).sum())
    p_value = (1 + extreme) / (1 + p_total)
    return TestReport(
        statistic=config.statistic,
        orientation=ORIENTATIONS[config.statistic],
        observed=observed_value,
        p_value=p_value,
        permutations=p_total,
        extreme_count=extreme,
        seed=config.seed,
        flags=ReportFlags(
            clamped_sample=clamped_sample,
            zero_direction=bool(observed_zero or zero_hits),
            exact_mode=False,
        ),
        config=asdict(config),
        null_sample=tuple(float(v) for v in null_values) if config.keep_null else None,
    )


def exact_null(
    data,
    observed,
    config: PermutationConfig,
    engine: _StatisticEngine | None = None,
) -> np.ndarray:
    """Statistic values over every labeled two-group assignment with the
    observed group sizes: all C(N, N_1) ways of choosing the first group.

    Refuses instances where that count exceeds 1e6.
    """
    assignment = _as_assignment(observed)
    if assignment.n_groups != 2:
        raise ValueError(f"exact enumeration supports exactly 2 groups, got {assignment.n_groups}")
    if engine is None:
        engine = _StatisticEngine(
            data,
            assignment.sizes,
            config.statistic,
            dissimilarity=config.dissimilarity,
            weighting=config.weighting,
        )
    n = assignment.n_samples
    n_first = int(assignment.sizes[0])
    total = math.comb(n, n_first)
    if total > _EXACT_LIMIT:
        raise ValueError(
            f"C({n}, {n_first}) = {total} labeled assignments exceeds the exact-mode "
            f"bound of {_EXACT_LIMIT}"
        )
    values = np.empty(total)
    combo_iter = itertools.combinations(range(n), n_first)
    done = 0
    while done < total:
        block = list(itertools.islice(combo_iter, _CHUNK))
        first = np.asarray(block, dtype=np.intp).reshape(len(block), n_first)
        mask = np.ones((len(block), n), dtype=bool)
        np.put_along_axis(mask, first, False, axis=1)
        second = np.nonzero(mask)[1].reshape(len(block), n - n_first)
        parts = [first, second] if n_first >= n - n_first else [second, first]
        chunk_values, _ = engine.evaluate(_canonicalize_batch(parts))
        values[done : done + len(block)] = chunk_values
        done += len(block)
    return values
