"""String-keyed sparse associative arrays.

Used for outpost-style labeled observations and for joining reduced
telescope results (e.g. per-source packet counts) against them by key.
Every cell value is a string; duplicates on construction keep the last
value written.
"""

from __future__ import annotations

import io
from collections.abc import Callable, Mapping, Sequence
from types import MappingProxyType

from .errors import UsageError
from .hypersparse import DegreeVector

__all__ = [
    "AssocArray",
    "assoc_from_triples",
    "assoc_from_degree_vector",
    "row_intersection",
    "PACKETS_COLUMN",
]

PACKETS_COLUMN = "packets"


class AssocArray:
    __slots__ = ("_rows", "_cols", "_cells")

    def __init__(self, cells: Mapping[tuple[str, str], str]):
        cells = dict(cells)
        for (r, c), v in cells.items():
            if not all(isinstance(x, str) for x in (r, c, v)):
                raise UsageError("row keys, column keys and values must be strings")
        self._cells = MappingProxyType(cells)
        self._rows = tuple(sorted({r for r, _ in cells}))
        self._cols = tuple(sorted({c for _, c in cells}))

    @property
    def row_keys(self) -> tuple[str, ...]:
        return self._rows

    @property
    def col_keys(self) -> tuple[str, ...]:
        return self._cols

    @property
    def cells(self) -> Mapping[tuple[str, str], str]:
        return self._cells

    @property
    def shape(self) -> tuple[int, int]:
        return len(self._rows), len(self._cols)

    def __len__(self) -> int:
        return len(self._cells)

    def __getitem__(self, key: tuple[str, str]) -> str:
        return self._cells.get(key, "")

    def __eq__(self, other) -> bool:
        if not isinstance(other, AssocArray):
            return NotImplemented
        return dict(self._cells) == dict(other._cells)

    def __hash__(self) -> int:
        return hash(frozenset(self._cells.items()))

    def __repr__(self) -> str:
        return f"AssocArray(shape={self.shape}, nnz={len(self)})"

    def row(self, key: str) -> dict[str, str]:
        return {c: v for (r, c), v in self._cells.items() if r == key}

    def to_degree_vector(self, parser: Callable[[str], int], column: str = PACKETS_COLUMN) -> DegreeVector:
        """Inverse of :func:`assoc_from_degree_vector`: parse row keys back to indices."""
        mapping = {}
        for (r, c), v in self._cells.items():
            if c == column:
                mapping[parser(r)] = int(v)
        return DegreeVector.from_mapping(mapping)

    def to_tsv(self) -> str:
        """Header of column keys, then one line per row key; missing cells are empty."""
        buf = io.StringIO()
        buf.write("\t".join([""] + list(self._cols)) + "\n")
        for r in self._rows:
            buf.write("\t".join([r] + [self._cells.get((r, c), "") for c in self._cols]) + "\n")
        return buf.getvalue()

    @classmethod
    def from_tsv(cls, text: str) -> "AssocArray":
        lines = text.splitlines()
        if not lines:
            return cls({})
        header = lines[0].split("\t")[1:]
        cells = {}
        for lineno, line in enumerate(lines[1:], 2):
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != len(header) + 1:
                raise ValueError(f"line {lineno}: expected {len(header) + 1} fields, got {len(parts)}")
            for c, v in zip(header, parts[1:]):
                if v != "":
                    cells[(parts[0], c)] = v
        return cls(cells)


def assoc_from_triples(rows: Sequence[str], cols: Sequence[str], vals: Sequence[str]) -> AssocArray:
    """Build from parallel key/value sequences; a repeated (row, col) keeps its last value.

    >>> assoc_from_triples(["1.1.1.1"], ["2.2.2.2"], ["3"])["1.1.1.1", "2.2.2.2"]
    '3'
    """
    if not (len(rows) == len(cols) == len(vals)):
        raise UsageError(f"length mismatch: {len(rows)} rows, {len(cols)} cols, {len(vals)} values")
    cells = {}
    for r, c, v in zip(rows, cols, vals):
        cells[(r, c)] = v
    return AssocArray(cells)


def assoc_from_degree_vector(v: DegreeVector, labeler: Mapping[int, str] | Callable[[int], str]) -> AssocArray:
    """Single-column ("packets") array keyed by each vertex's label."""
    lookup = labeler.__getitem__ if isinstance(labeler, Mapping) else labeler
    cells = {}
    for index, degree in v.items():
        try:
            label = lookup(index)
        except (KeyError, IndexError):
            raise UsageError(f"no label for vertex index {index}") from None
        cells[(label, PACKETS_COLUMN)] = str(degree)
    return AssocArray(cells)


def row_intersection(a: AssocArray, b: AssocArray) -> list[str]:
    """Sorted row keys present in both arrays."""
    return sorted(set(a.row_keys).intersection(b.row_keys))
