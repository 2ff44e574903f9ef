from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from latentperm import Column, LatentResponseSet

DATA_DIR = Path(__file__).parent / "data"


def make_set(
    values: np.ndarray,
    kinds: list[str] | None = None,
    groups: list[str] | None = None,
    name: str = "fixture",
    column_names: list[str] | None = None,
) -> LatentResponseSet:
    values = np.asarray(values, dtype=float)
    n, c = values.shape
    kinds = kinds if kinds is not None else ["feature"] * c
    column_names = column_names if column_names is not None else [f"f{j}" for j in range(c)]
    columns = tuple(Column(column_names[j], kinds[j]) for j in range(c))
    groups = groups if groups is not None else ["g0"] * n
    ids = tuple(f"s{i:04d}" for i in range(n))
    return LatentResponseSet(name, columns, ids, tuple(groups), values)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def write_experiment(
    root: Path,
    seed: int = 5,
    permutations: int = 200,
    sample_size: int = 30,
    shift: float = 6.0,
    extra: str = "",
    n_per_label: int = 80,
) -> Path:
    """Write a small two-class + one-OoD-class experiment to ``root``.

    Validation holds labels 0 and 1; the test set holds 0, 1, and an OoD
    label 9 whose features sit ``shift`` away. Returns the config path.
    """
    from latentperm import write_response_set

    rng = np.random.default_rng(seed)
    centers = {"0": np.array([0.0, 0.0]), "1": np.array([3.0, 0.0]), "9": np.array([shift, shift])}

    def sample(labels: list[str], name: str, start: int) -> tuple[np.ndarray, list[str]]:
        rows, groups = [], []
        for label in labels:
            rows.append(centers[label] + rng.standard_normal((n_per_label, 2)) * 0.7)
            groups += [label] * n_per_label
        return np.vstack(rows), groups

    root.mkdir(parents=True, exist_ok=True)
    for name, labels in (("anchors", ["0", "1"]), ("validation", ["0", "1"]),
                         ("test", ["0", "1", "9"])):
        values, groups = sample(labels, name, 0)
        rset = make_set(values, groups=groups, name=name)
        rset = LatentResponseSet(
            name, rset.columns,
            tuple(f"{name[0]}{i:05d}" for i in range(rset.n_rows)),
            rset.groups, rset.values,
        )
        write_response_set(rset, root / f"{name}.csv")

    config_text = f"""\
# synthetic experiment
seed = {seed}
normalize = true
output.dir = out

source.main.anchors = anchors.csv
source.main.validation = validation.csv
source.main.test = test.csv
source.main.metrics = default

test.permutations = {permutations}
test.sample_size = {sample_size}

matrix.rows = all
matrix.cols = all

ensemble.ind = 0,1
ensemble.ood = 9
{extra}
"""
    path = root / "experiment.conf"
    path.write_text(config_text)
    return path
