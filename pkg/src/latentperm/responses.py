"""Latent response sets: the tabular data model and its file formats.

A :class:`LatentResponseSet` is a named matrix of per-sample measurement rows.
Every row carries a sample id and a group label; every column carries a name
and a *kind* describing what the values are (model features, logits, belief
masses, flattened images/reconstructions, encode-decode iterates, or already
computed metrics).

Two on-disk formats are supported:

* ``csv`` -- header ``id,group,<name:kind>,...``; UTF-8, ``.`` decimal
  separator, one sample per line. Column kinds are encoded as ``name:kind``
  suffixes in the header; a bare name defaults to kind ``feature``. Values
  are written with 17 significant digits so every float64 round-trips.
* ``bin`` -- magic ``LRS1``, little-endian u32 row count N and column count C,
  length-prefixed UTF-8 strings (set name, C column descriptors, N sample
  ids, N group labels), then the N x C float64 payload, row-major,
  little-endian. Round-trips bit-exactly.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ._rng import stream
from .errors import ClampedSampleWarning, DataError

COLUMN_KINDS = (
    "feature",
    "logit",
    "belief",
    "image",
    "reconstruction",
    "iterate-x",
    "iterate-z",
    "iterate-y",
    "metric",
)

_MAGIC = b"LRS1"


@dataclass(frozen=True)
class Column:
    """A column descriptor: a name plus the kind of measurement it holds."""

    name: str
    kind: str = "feature"

    def __post_init__(self) -> None:
        if self.kind not in COLUMN_KINDS:
            raise DataError(f"unknown column kind {self.kind!r} for column {self.name!r}")
        if not self.name or ":" in self.name or "," in self.name or "\n" in self.name:
            raise DataError(f"invalid column name {self.name!r}")

    def header_token(self) -> str:
        return self.name if self.kind == "feature" else f"{self.name}:{self.kind}"

    @staticmethod
    def from_header_token(token: str) -> "Column":
        name, sep, kind = token.partition(":")
        return Column(name, kind if sep else "feature")


@dataclass(frozen=True)
class LatentResponseSet:
    """An immutable named matrix of latent responses with row ids and group labels.

    Invariants (enforced at construction): row width equals the column count,
    sample ids are unique, and all values are finite. Group labels are derived
    from the rows, so phantom groups cannot exist.
    """

    name: str
    columns: tuple[Column, ...]
    ids: tuple[str, ...]
    groups: tuple[str, ...]
    values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise DataError(f"values must be 2-D, got shape {values.shape}")
        n, c = values.shape
        if c != len(self.columns):
            raise DataError(f"{c} value columns but {len(self.columns)} column descriptors")
        if len(self.ids) != n or len(self.groups) != n:
            raise DataError(f"{n} rows but {len(self.ids)} ids / {len(self.groups)} groups")
        if values.size and not np.all(np.isfinite(values)):
            bad = np.argwhere(~np.isfinite(values))[0]
            raise DataError(f"non-finite value at row {bad[0]}, column {self.columns[bad[1]].name!r}")
        seen: set[str] = set()
        for i, sid in enumerate(self.ids):
            if sid in seen:
                raise DataError(f"duplicate sample id {sid!r} at row {i}")
            seen.add(sid)
        for what, items in (("sample id", self.ids), ("group label", self.groups)):
            for item in items:
                if not item or "," in item or "\n" in item:
                    raise DataError(f"invalid {what}: {item!r}")
        values = values.copy()
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "groups", tuple(self.groups))

    # -- basic queries -------------------------------------------------

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_columns(self) -> int:
        return self.values.shape[1]

    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]

    def group_labels(self) -> list[str]:
        """Distinct group labels in order of first appearance."""
        out: list[str] = []
        seen: set[str] = set()
        for g in self.groups:
            if g not in seen:
                seen.add(g)
                out.append(g)
        return out

    def columns_of_kind(self, kind: str) -> list[str]:
        return [c.name for c in self.columns if c.kind == kind]

    def column_indices(self, names: Sequence[str]) -> np.ndarray:
        lookup = {c.name: i for i, c in enumerate(self.columns)}
        missing = [n for n in names if n not in lookup]
        if missing:
            raise DataError(f"unknown column(s) in set {self.name!r}: {missing}")
        return np.asarray([lookup[n] for n in names], dtype=np.intp)

    def take_rows(self, indices: Sequence[int], name: str | None = None) -> "LatentResponseSet":
        idx = np.asarray(indices, dtype=np.intp)
        return LatentResponseSet(
            name=name if name is not None else self.name,
            columns=self.columns,
            ids=tuple(self.ids[i] for i in idx),
            groups=tuple(self.groups[i] for i in idx),
            values=self.values[idx],
        )


# -- file formats ------------------------------------------------------


def _infer_format(path: str | Path, fmt: str | None) -> str:
    if fmt is not None:
        if fmt not in ("csv", "bin"):
            raise ValueError(f"format must be 'csv' or 'bin', got {fmt!r}")
        return fmt
    suffix = Path(path).suffix.lower()
    return "bin" if suffix == ".bin" else "csv"


def read_response_set(path: str | Path, format: str | None = None) -> LatentResponseSet:
    """Read a response set from ``path``, validating every invariant.

    Malformed input (ragged rows, non-numeric cells, duplicate ids, bad
    headers) raises :class:`DataError` naming the offending row/column.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    if _infer_format(path, format) == "bin":
        return _read_bin(path)
    return _read_csv(path)


def write_response_set(rset: LatentResponseSet, path: str | Path, format: str | None = None) -> None:
    """Write ``rset`` to ``path``; csv round-trips to 17 significant digits, bin bit-exactly."""
    path = Path(path)
    if _infer_format(path, format) == "bin":
        _write_bin(rset, path)
    else:
        _write_csv(rset, path)


def _read_csv(path: Path) -> LatentResponseSet:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DataError(f"{path}: empty file, expected a header line")
    header = lines[0].split(",")
    if len(header) < 2 or header[0] != "id" or header[1] != "group":
        raise DataError(f"{path}: header must start with 'id,group', got {lines[0]!r}")
    try:
        columns = tuple(Column.from_header_token(tok) for tok in header[2:])
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from None
    n_cols = len(columns)
    ids: list[str] = []
    groups: list[str] = []
    rows: list[np.ndarray] = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        cells = line.split(",")
        if len(cells) != n_cols + 2:
            raise DataError(
                f"{path}: line {lineno}: expected {n_cols + 2} cells, got {len(cells)} (ragged row)"
            )
        ids.append(cells[0])
        groups.append(cells[1])
        try:
            rows.append(np.asarray(cells[2:], dtype=np.float64))
        except ValueError:
            for j, cell in enumerate(cells[2:]):
                try:
                    float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: line {lineno}, column {columns[j].name!r}: "
                        f"non-numeric cell {cell!r}"
                    ) from None
            raise
    values = np.vstack(rows) if rows else np.empty((0, n_cols))
    try:
        return LatentResponseSet(path.stem, columns, tuple(ids), tuple(groups), values)
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from None


def _write_csv(rset: LatentResponseSet, path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(["id", "group"] + [c.header_token() for c in rset.columns]))
        fh.write("\n")
        for i in range(rset.n_rows):
            cells = [rset.ids[i], rset.groups[i]]
            cells.extend(f"{v:.17g}" for v in rset.values[i])
            fh.write(",".join(cells))
            fh.write("\n")


def _write_bin(rset: LatentResponseSet, path: Path) -> None:
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", rset.n_rows, rset.n_columns))
        for s in (
            [rset.name]
            + [c.header_token() for c in rset.columns]
            + list(rset.ids)
            + list(rset.groups)
        ):
            raw = s.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
        fh.write(np.ascontiguousarray(rset.values, dtype="<f8").tobytes())


def _read_bin(path: Path) -> LatentResponseSet:
    blob = path.read_bytes()
    if blob[:4] != _MAGIC:
        raise DataError(f"{path}: bad magic bytes, not an LRS1 file")
    if len(blob) < 12:
        raise DataError(f"{path}: truncated header")
    n, c = struct.unpack_from("<II", blob, 4)
    offset = 12

    def take_string() -> str:
        nonlocal offset
        if offset + 4 > len(blob):
            raise DataError(f"{path}: truncated string table")
        (length,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        if offset + length > len(blob):
            raise DataError(f"{path}: truncated string table")
        s = blob[offset : offset + length].decode("utf-8")
        offset += length
        return s

    name = take_string()
    columns = tuple(Column.from_header_token(take_string()) for _ in range(c))
    ids = tuple(take_string() for _ in range(n))
    groups = tuple(take_string() for _ in range(n))
    payload = blob[offset:]
    expected = n * c * 8
    if len(payload) != expected:
        raise DataError(f"{path}: payload is {len(payload)} bytes, expected {expected}")
    values = np.frombuffer(payload, dtype="<f8").reshape(n, c).astype(np.float64)
    try:
        return LatentResponseSet(name, columns, ids, groups, values)
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from None


# -- subsampling -------------------------------------------------------


def select_group(
    rset: LatentResponseSet, label: str, sample_size: int, seed: int
) -> LatentResponseSet:
    """Subsample up to ``sample_size`` rows with the given group label.

    Rows are drawn uniformly without replacement from the label's rows using
    a Philox stream keyed by ``seed``. Candidates are ordered by sample id
    before drawing and the result is returned sorted by id, so the outcome
    does not depend on row order on disk. If fewer than ``sample_size`` rows
    exist, all of them are returned and a :class:`ClampedSampleWarning` is
    emitted.
    """
    if sample_size < 1:
        raise ValueError(f"sample_size must be >= 1, got {sample_size}")
    matching = [i for i, g in enumerate(rset.groups) if g == label]
    if not matching:
        raise DataError(f"unknown group label {label!r} in set {rset.name!r}")
    matching.sort(key=lambda i: rset.ids[i])
    if len(matching) <= sample_size:
        if len(matching) < sample_size:
            warnings.warn(
                f"group {label!r} has {len(matching)} rows < sample_size={sample_size}; "
                "using all rows",
                ClampedSampleWarning,
                stacklevel=2,
            )
        chosen = matching
    else:
        rng = stream(seed)
        picks = rng.choice(len(matching), size=sample_size, replace=False)
        chosen = [matching[i] for i in sorted(picks)]
    return rset.take_rows(chosen)


def metrics_to_response_set(
    name: str,
    ids: Sequence[str],
    groups: Sequence[str],
    metric_names: Sequence[str],
    values: np.ndarray | Iterable[Iterable[float]],
) -> LatentResponseSet:
    """Package a computed metric matrix as a response set with kind ``metric`` columns."""
    return LatentResponseSet(
        name=name,
        columns=tuple(Column(m, "metric") for m in metric_names),
        ids=tuple(ids),
        groups=tuple(groups),
        values=np.asarray(values, dtype=np.float64),
    )
