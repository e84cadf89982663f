"""View-partitioned data collections: loading, saving and centering.

A collection holds N co-occurring samples split into M views of widths
D_1..D_M, stored as the concatenated N x D matrix. Collections are
immutable after construction and safe to share between fits.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class DataError(ValueError):
    """Raised for malformed manifests, files or data matrices."""


@dataclass(frozen=True)
class ViewPartition:
    """Widths and names of the M views making up a collection."""

    dims: tuple[int, ...]
    names: tuple[str, ...]

    def __post_init__(self):
        if len(self.dims) < 1:
            raise DataError("need at least one view")
        if any(d < 1 for d in self.dims):
            raise DataError("view widths must be positive")
        if len(self.names) != len(self.dims):
            raise DataError("one name per view required")

    @property
    def n_views(self) -> int:
        return len(self.dims)

    @property
    def total_dim(self) -> int:
        return int(sum(self.dims))

    def slices(self) -> list[slice]:
        """Column slice of each view within the concatenated matrix."""
        edges = np.concatenate([[0], np.cumsum(self.dims)])
        return [slice(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]

    @staticmethod
    def of(dims, names=None) -> "ViewPartition":
        dims = tuple(int(d) for d in dims)
        if names is None:
            names = tuple(f"view{i}" for i in range(len(dims)))
        return ViewPartition(dims, tuple(names))


@dataclass(frozen=True)
class DataCollection:
    """N samples across the concatenated views, samples as rows."""

    partition: ViewPartition
    data: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.data, dtype=float)
        if y.ndim != 2:
            raise DataError("data must be a 2-d matrix")
        if y.shape[0] < 2:
            raise DataError("need at least two samples")
        if y.shape[1] != self.partition.total_dim:
            raise DataError(
                f"data has {y.shape[1]} columns, partition expects "
                f"{self.partition.total_dim}"
            )
        if not np.all(np.isfinite(y)):
            raise DataError("data contains non-finite entries")
        y.setflags(write=False)
        object.__setattr__(self, "data", y)

    @property
    def n_samples(self) -> int:
        return self.data.shape[0]

    @property
    def n_views(self) -> int:
        return self.partition.n_views

    def view(self, m: int) -> np.ndarray:
        """Columns of view m as a read-only slice."""
        return self.data[:, self.partition.slices()[m]]

    def views(self) -> list[np.ndarray]:
        return [self.view(m) for m in range(self.n_views)]


@dataclass(frozen=True)
class PreprocessRecord:
    """Centering/scaling applied to a collection, for later undo or audit."""

    means: np.ndarray
    scales: np.ndarray
    constant_columns: tuple[int, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.means.shape != self.scales.shape:
            raise DataError("means and scales must have equal length")
        if np.any(self.scales <= 0):
            raise DataError("scales must be strictly positive")


def center(
    collection: DataCollection, scale_to_unit_variance: bool = False
) -> tuple[DataCollection, PreprocessRecord]:
    """Subtract column means; optionally scale columns to unit variance.

    Constant columns cannot be scaled; their scale is left at 1 and the
    column index is flagged in the returned record.
    """
    y = collection.data
    means = y.mean(axis=0)
    out = y - means
    scales = np.ones(y.shape[1])
    constant = ()
    if scale_to_unit_variance:
        sd = out.std(axis=0, ddof=1)
        constant = tuple(int(i) for i in np.flatnonzero(sd == 0))
        sd = np.where(sd == 0, 1.0, sd)
        out = out / sd
        scales = sd
    rec = PreprocessRecord(means=means, scales=scales, constant_columns=constant)
    return DataCollection(collection.partition, out), rec


def load_collection(manifest_path) -> DataCollection:
    """Read a collection from a JSON manifest listing one CSV per view.

    Manifest schema: {"views": [{"name": str, "file": str}], "csv_header": bool};
    file paths are resolved relative to the manifest location.
    """
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise FileNotFoundError(f"manifest not found: {manifest_path}")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    views = manifest.get("views")
    if not views:
        raise DataError("manifest lists no views")
    header = bool(manifest.get("csv_header", False))
    blocks, dims, names = [], [], []
    for entry in views:
        path = manifest_path.parent / entry["file"]
        if not path.exists():
            raise FileNotFoundError(f"view file not found: {path}")
        try:
            block = np.loadtxt(
                path, delimiter=",", skiprows=1 if header else 0, ndmin=2
            )
        except ValueError as exc:
            raise DataError(f"non-numeric cell in {path}: {exc}") from exc
        if block.size == 0:
            raise DataError(f"empty view: {path}")
        blocks.append(block)
        dims.append(block.shape[1])
        names.append(entry["name"])
    rows = {b.shape[0] for b in blocks}
    if len(rows) > 1:
        raise DataError(f"views disagree on row count: {sorted(rows)}")
    partition = ViewPartition.of(dims, names)
    return DataCollection(partition, np.hstack(blocks))


def save_collection(collection: DataCollection, out_dir) -> Path:
    """Write a collection as manifest.json plus one CSV per view.

    Values use shortest round-trip formatting, so load(save(c)) is
    bit-identical.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for m, name in enumerate(collection.partition.names):
        fname = f"{name}.csv"
        block = collection.view(m)
        with open(out_dir / fname, "w") as fh:
            for row in block:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
        entries.append({"name": name, "file": fname})
    manifest = {"views": entries, "csv_header": False}
    path = out_dir / "manifest.json"
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2)
    return path
