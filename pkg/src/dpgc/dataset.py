"""Tabular ingestion, public binning, dummy coding and exact counts.

Everything here runs before any privacy noise is added.  Objects are treated
as immutable once built; counting functions are read-only.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import yaml

KINDS = ("categorical", "ordinal", "continuous")


class SchemaError(ValueError):
    """Malformed schema or binning configuration."""


class DataError(ValueError):
    """Input data that does not conform to its schema."""


def _fmt(x: float) -> str:
    return f"{x:g}"


@dataclass(frozen=True)
class BinRule:
    """Fixed, data-independent binning of a numeric attribute.

    ``closed="left"`` gives bins ``[a, b)``; ``"right"`` gives ``(a, b]``.
    The outermost bins are open-ended, so values outside ``[lower, upper]``
    clamp to them.
    """

    lower: float
    upper: float
    edges: tuple[float, ...]
    closed: str = "left"

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple(float(e) for e in self.edges))
        if self.closed not in ("left", "right"):
            raise SchemaError(f"closed must be 'left' or 'right', got {self.closed!r}")
        points = (float(self.lower), *self.edges, float(self.upper))
        if any(not math.isfinite(p) for p in points):
            raise SchemaError("bin boundaries must be finite")
        if any(b <= a for a, b in zip(points, points[1:])):
            raise SchemaError(f"bin boundaries not strictly increasing: {points}")

    @property
    def n_bins(self) -> int:
        return len(self.edges) + 1

    @property
    def labels(self) -> tuple[str, ...]:
        e = [_fmt(x) for x in self.edges]
        if not e:
            return ("(-∞,∞)",)
        if self.closed == "left":
            inner = [f"[{a},{b})" for a, b in zip(e, e[1:])]
            return (f"(-∞,{e[0]})", *inner, f"[{e[-1]},∞)")
        inner = [f"({a},{b}]" for a, b in zip(e, e[1:])]
        return (f"(-∞,{e[0]}]", *inner, f"({e[-1]},∞)")

    def bin_index(self, values) -> np.ndarray:
        """Bin number of each value; out-of-range values clamp to the end bins."""
        side = "right" if self.closed == "left" else "left"
        return np.searchsorted(np.asarray(self.edges), np.asarray(values, dtype=float), side=side)

    def to_dict(self) -> dict:
        return {"lower": self.lower, "upper": self.upper,
                "edges": list(self.edges), "closed": self.closed}


@dataclass(frozen=True)
class AttributeSpec:
    name: str
    kind: str
    vocabulary: tuple[str, ...] | None = None
    binning: BinRule | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"{self.name}: unknown kind {self.kind!r}")
        if (self.vocabulary is None) == (self.binning is None):
            raise SchemaError(f"{self.name}: give exactly one of vocabulary or binning")
        if self.vocabulary is not None:
            vocab = tuple(str(v) for v in self.vocabulary)
            if not vocab:
                raise SchemaError(f"{self.name}: empty vocabulary")
            if len(set(vocab)) != len(vocab):
                raise SchemaError(f"{self.name}: duplicate vocabulary labels")
            object.__setattr__(self, "vocabulary", vocab)
        elif self.kind == "categorical":
            raise SchemaError(f"{self.name}: categorical attributes need a vocabulary")

    @property
    def levels(self) -> tuple[str, ...]:
        """Value labels after binning."""
        return self.vocabulary if self.vocabulary is not None else self.binning.labels

    @property
    def numeric(self) -> bool:
        return self.binning is not None

    def to_dict(self) -> dict:
        out = {"name": self.name, "kind": self.kind}
        if self.vocabulary is not None:
            out["vocabulary"] = list(self.vocabulary)
        else:
            out["binning"] = self.binning.to_dict()
        return out


@dataclass(frozen=True)
class AttributeSchema:
    attributes: tuple[AttributeSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "attributes", tuple(self.attributes))
        if not self.attributes:
            raise SchemaError("schema has no attributes")
        names = [a.name for a in self.attributes]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate attribute names")

    @property
    def names(self) -> list[str]:
        return [a.name for a in self.attributes]

    @property
    def m(self) -> int:
        return len(self.attributes)

    @property
    def d(self) -> int:
        return sum(len(a.levels) for a in self.attributes)

    def __getitem__(self, name: str) -> AttributeSpec:
        for a in self.attributes:
            if a.name == name:
                return a
        raise KeyError(name)

    @classmethod
    def from_dict(cls, doc: Mapping) -> "AttributeSchema":
        try:
            entries = doc["attributes"]
        except (KeyError, TypeError):
            raise SchemaError("schema document needs an 'attributes' list") from None
        attrs = []
        for entry in entries:
            entry = dict(entry)
            if "name" not in entry or "kind" not in entry:
                raise SchemaError(f"attribute entry needs name and kind: {entry}")
            binning = entry.get("binning")
            if binning is not None:
                try:
                    binning = BinRule(binning["lower"], binning["upper"],
                                      tuple(binning.get("edges", ())),
                                      binning.get("closed", "left"))
                except KeyError as exc:
                    raise SchemaError(f"{entry['name']}: binning needs {exc}") from None
            vocab = entry.get("vocabulary")
            attrs.append(AttributeSpec(str(entry["name"]), entry["kind"],
                                       None if vocab is None else tuple(vocab), binning))
        return cls(tuple(attrs))

    @classmethod
    def load(cls, path) -> "AttributeSchema":
        """Read a YAML (or JSON) schema document."""
        with open(path, encoding="utf-8") as fh:
            try:
                doc = yaml.safe_load(fh)
            except yaml.YAMLError as exc:
                raise SchemaError(f"{path}: {exc}") from None
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        return {"attributes": [a.to_dict() for a in self.attributes]}


@dataclass(frozen=True, eq=False)
class TabularDataset:
    """Column store of a table; ``binned`` is True once every value is a label."""

    schema: AttributeSchema
    columns: Mapping[str, np.ndarray]
    binned: bool = False

    @property
    def n(self) -> int:
        return len(next(iter(self.columns.values())))

    def codes(self, name: str) -> np.ndarray:
        """Integer index of each row's label in the attribute's level list."""
        if not self.binned:
            raise DataError("dataset must be binned before coding")
        levels = self.schema[name].levels
        lookup = {v: i for i, v in enumerate(levels)}
        col = self.columns[name]
        try:
            return np.fromiter((lookup[v] for v in col), dtype=np.int64, count=len(col))
        except KeyError as exc:
            raise DataError(f"{name}: value {exc} not among its levels") from None

    def rows(self) -> Iterable[tuple]:
        return zip(*(self.columns[a] for a in self.schema.names))

    def to_csv(self, path) -> None:
        """Write with a header in schema order; missing cells (None) stay empty."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.schema.names)
            for row in self.rows():
                writer.writerow(["" if v is None else v for v in row])


def _parse_number(text: str) -> float:
    value = float(text)
    if not math.isfinite(value):
        raise ValueError(text)
    return value


def load_csv(path, schema: AttributeSchema) -> TabularDataset:
    """Read a headed, comma-delimited UTF-8 file against ``schema``.

    Header order need not match the schema.  Empty cells are rejected, as are
    labels outside a vocabulary and unparseable numbers.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        unknown = [h for h in header if h not in schema.names]
        if unknown:
            raise DataError(f"{path}: unknown column(s) {unknown}")
        missing = [a for a in schema.names if a not in header]
        if missing:
            raise DataError(f"{path}: missing column(s) {missing}")
        position = {h: i for i, h in enumerate(header)}
        raw = {a: [] for a in schema.names}
        for row_no, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"row {row_no}: expected {len(header)} cells, got {len(row)}")
            for spec in schema.attributes:
                cell = row[position[spec.name]].strip()
                if cell == "":
                    raise DataError(f"row {row_no}, column {spec.name!r}: missing value")
                if spec.numeric:
                    try:
                        raw[spec.name].append(_parse_number(cell))
                    except ValueError:
                        raise DataError(
                            f"row {row_no}, column {spec.name!r}: cannot parse {cell!r} as a number"
                        ) from None
                else:
                    if cell not in spec.vocabulary:
                        raise DataError(
                            f"row {row_no}, column {spec.name!r}: value {cell!r} not in vocabulary"
                        )
                    raw[spec.name].append(cell)
    if not raw[schema.names[0]]:
        raise DataError(f"{path}: no data rows")
    columns = {}
    for spec in schema.attributes:
        dtype = float if spec.numeric else object
        columns[spec.name] = np.array(raw[spec.name], dtype=dtype)
    binned = not any(spec.numeric for spec in schema.attributes)
    return TabularDataset(schema, columns, binned=binned)


def apply_binning(ds: TabularDataset) -> TabularDataset:
    """Replace numeric values by their bin labels; categorical columns pass through."""
    if ds.binned:
        return ds
    columns = {}
    for spec in ds.schema.attributes:
        col = ds.columns[spec.name]
        if spec.numeric:
            labels = np.array(spec.binning.labels, dtype=object)
            col = labels[spec.binning.bin_index(col)]
        columns[spec.name] = col
    return TabularDataset(ds.schema, columns, binned=True)


@dataclass(frozen=True)
class GroupMap:
    """Links binary columns back to (attribute, value label).

    Columns are laid out in schema order, then level order, so each attribute
    owns the contiguous slice ``starts[g]:starts[g + 1]``.
    """

    attributes: tuple[str, ...]
    levels: tuple[tuple[str, ...], ...]

    @classmethod
    def from_schema(cls, schema: AttributeSchema) -> "GroupMap":
        return cls(tuple(schema.names), tuple(a.levels for a in schema.attributes))

    @property
    def sizes(self) -> np.ndarray:
        return np.array([len(v) for v in self.levels], dtype=np.int64)

    @property
    def starts(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.sizes)])

    @property
    def m(self) -> int:
        return len(self.attributes)

    @property
    def d(self) -> int:
        return int(self.sizes.sum())

    @property
    def column_group(self) -> np.ndarray:
        """Attribute index of every binary column."""
        return np.repeat(np.arange(self.m), self.sizes)

    def group_range(self, g: int) -> range:
        s = self.starts
        return range(int(s[g]), int(s[g + 1]))

    def column(self, i: int) -> tuple[int, str]:
        g = int(self.column_group[i])
        return g, self.levels[g][i - int(self.starts[g])]

    @property
    def column_names(self) -> list[str]:
        return [f"{a}={v}" for a, vals in zip(self.attributes, self.levels) for v in vals]

    def cross_mask(self) -> np.ndarray:
        """d x d boolean mask of pairs drawn from different attributes."""
        g = self.column_group
        return g[:, None] != g[None, :]


@dataclass(frozen=True, eq=False)
class BinaryDataset:
    """n x d 0/1 matrix plus its group map."""

    columns: np.ndarray
    groups: GroupMap

    def __post_init__(self):
        if self.columns.ndim != 2 or self.columns.shape[1] != self.groups.d:
            raise DataError(
                f"binary matrix shape {self.columns.shape} does not match d={self.groups.d}"
            )

    @property
    def n(self) -> int:
        return self.columns.shape[0]

    @property
    def d(self) -> int:
        return self.columns.shape[1]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.groups.column_names)
            for row in self.columns:
                writer.writerow(row.tolist())

    @classmethod
    def from_csv(cls, path, groups: GroupMap) -> "BinaryDataset":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header != groups.column_names:
                raise DataError(f"{path}: binary header does not match the schema's columns")
            try:
                data = np.loadtxt(fh, delimiter=",", dtype=np.int64, ndmin=2)
            except ValueError as exc:
                raise DataError(f"{path}: {exc}") from None
        if data.size and data.shape[1] != groups.d:
            raise DataError(f"{path}: rows have {data.shape[1]} cells, header has {groups.d}")
        if data.size and not np.isin(data, (0, 1)).all():
            raise DataError(f"{path}: binary file contains values other than 0/1")
        return cls(data.reshape(-1, groups.d).astype(np.uint8), groups)


def dummy_encode(ds: TabularDataset) -> BinaryDataset:
    """One 0/1 column per (attribute, level)."""
    if not ds.binned:
        raise DataError("apply_binning before dummy_encode")
    groups = GroupMap.from_schema(ds.schema)
    out = np.zeros((ds.n, groups.d), dtype=np.uint8)
    rows = np.arange(ds.n)
    for g, name in enumerate(groups.attributes):
        out[rows, groups.starts[g] + ds.codes(name)] = 1
    return BinaryDataset(out, groups)


def one_way_counts(bds: BinaryDataset, i: int) -> tuple[int, int]:
    """(zeros, ones) in binary column ``i``."""
    if not 0 <= i < bds.d:
        raise IndexError(f"column {i} out of range for d={bds.d}")
    ones = int(bds.columns[:, i].sum(dtype=np.int64))
    return bds.n - ones, ones


@dataclass(frozen=True)
class PairwiseCounts:
    n11: int
    n10: int
    n01: int
    n00: int

    @property
    def n(self) -> int:
        return self.n11 + self.n10 + self.n01 + self.n00

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.n11, self.n10, self.n01, self.n00)


@dataclass(frozen=True, eq=False)
class PairwiseTable:
    """All four 2x2 cell counts for every binary column pair, as d x d arrays.

    Only entries where ``mask`` is True are meaningful; same-attribute pairs are
    structural zeroes and are never counted.
    """

    n11: np.ndarray
    n10: np.ndarray
    n01: np.ndarray
    n00: np.ndarray
    mask: np.ndarray
    n: int

    def __getitem__(self, ij: tuple[int, int]) -> PairwiseCounts:
        i, j = ij
        if not self.mask[i, j]:
            raise KeyError(f"pair {ij} is a structural zero")
        return PairwiseCounts(int(self.n11[i, j]), int(self.n10[i, j]),
                              int(self.n01[i, j]), int(self.n00[i, j]))

    def pairs(self) -> Iterable[tuple[int, int]]:
        ii, jj = np.nonzero(np.triu(self.mask))
        return zip(ii.tolist(), jj.tolist())


def pairwise_counts_fast(ds: TabularDataset, bds: BinaryDataset) -> PairwiseTable:
    """Cross-attribute 2x2 counts in O(m^2 n + d^2).

    For each attribute pair one pass tallies joint value combinations; every
    binary cell count then follows from that tally and the one-way histogram.
    """
    groups = bds.groups
    if groups != GroupMap.from_schema(ds.schema):
        raise DataError("group map does not match the tabular schema")
    n, d = ds.n, groups.d
    codes = [ds.codes(a) for a in groups.attributes]
    sizes = groups.sizes
    starts = groups.starts
    hist_b = np.concatenate([np.bincount(c, minlength=s) for c, s in zip(codes, sizes)])

    n11 = np.zeros((d, d), dtype=np.int64)
    for g in range(groups.m):
        for h in range(g + 1, groups.m):
            joint = np.bincount(codes[g] * sizes[h] + codes[h],
                                minlength=sizes[g] * sizes[h]).reshape(sizes[g], sizes[h])
            n11[starts[g]:starts[g + 1], starts[h]:starts[h + 1]] = joint
            n11[starts[h]:starts[h + 1], starts[g]:starts[g + 1]] = joint.T
    mask = groups.cross_mask()
    n10 = np.where(mask, hist_b[:, None] - n11, 0)
    n01 = np.where(mask, hist_b[None, :] - n11, 0)
    n00 = np.where(mask, n - n11 - n10 - n01, 0)
    return PairwiseTable(n11, n10, n01, n00, mask, n)


def pairwise_counts(bds: BinaryDataset) -> PairwiseTable:
    """Cross-attribute 2x2 counts straight from the binary matrix.

    Works for any 0/1 matrix, including synthetic output where a group may
    hold several ones.
    """
    x = bds.columns.astype(np.float64)
    n11 = np.rint(x.T @ x).astype(np.int64)
    ones = np.diag(n11).copy()
    mask = bds.groups.cross_mask()
    n11 = np.where(mask, n11, 0)
    n10 = np.where(mask, ones[:, None] - n11, 0)
    n01 = np.where(mask, ones[None, :] - n11, 0)
    n00 = np.where(mask, bds.n - n11 - n10 - n01, 0)
    return PairwiseTable(n11, n10, n01, n00, mask, bds.n)


def decode_binary(bds: BinaryDataset, schema: AttributeSchema) -> TabularDataset:
    """Inverse of ``dummy_encode`` for matrices that are one-hot in every group."""
    groups = bds.groups
    columns = {}
    for g, name in enumerate(groups.attributes):
        block = bds.columns[:, groups.group_range(g)]
        if not (block.sum(axis=1) == 1).all():
            raise DataError(f"{name}: rows without exactly one active level")
        columns[name] = np.array(groups.levels[g], dtype=object)[block.argmax(axis=1)]
    return TabularDataset(schema, columns, binned=True)


def load_binary(path, schema: AttributeSchema) -> BinaryDataset:
    return BinaryDataset.from_csv(path, GroupMap.from_schema(schema))


def encode_csv(path, schema: AttributeSchema) -> tuple[TabularDataset, BinaryDataset]:
    """load_csv -> apply_binning -> dummy_encode."""
    tab = apply_binning(load_csv(path, schema))
    return tab, dummy_encode(tab)


def from_records(schema: AttributeSchema, records: Sequence[Sequence]) -> TabularDataset:
    """Build a dataset from in-memory rows ordered like the schema."""
    if not records:
        raise DataError("no rows")
    columns = {}
    for k, spec in enumerate(schema.attributes):
        vals = [r[k] for r in records]
        if spec.numeric:
            columns[spec.name] = np.array(vals, dtype=float)
        else:
            bad = [v for v in vals if v not in spec.vocabulary]
            if bad:
                raise DataError(f"{spec.name}: value {bad[0]!r} not in vocabulary")
            columns[spec.name] = np.array(vals, dtype=object)
    binned = not any(spec.numeric for spec in schema.attributes)
    return TabularDataset(schema, columns, binned=binned)
