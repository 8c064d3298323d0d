"""Hypersparse traffic matrices stored as sorted coordinate triples.

A :class:`TrafficMatrix` lives in a 2**32 x 2**32 index space and stores only
its nonzero cells, as three parallel numpy arrays (row, column, packet count)
sorted lexicographically by (row, column).  Values are immutable; every
operation returns a new matrix.

Binary layout (little-endian)::

    b"HSTM" | version:u16 | nnz:u64 | nnz * (src:u32, dst:u32, count:u64)
"""

from __future__ import annotations

import io
import os
import struct
from collections.abc import Callable, Iterable, Iterator, Mapping, Sequence
from typing import NamedTuple, Union

import numpy as np

from .errors import UsageError

__all__ = [
    "EdgeTriple",
    "TrafficMatrix",
    "DegreeVector",
    "from_triples",
    "from_arrays",
    "merge",
    "hierarchical_sum",
    "zero_norm",
    "row_sums",
    "col_sums",
    "permute",
]

INDEX_LIMIT = 1 << 32
COUNT_LIMIT = 1 << 64

MAGIC = b"HSTM"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHQ")
TRIPLE_DTYPE = np.dtype([("src", "<u4"), ("dst", "<u4"), ("count", "<u8")])

PermutationLike = Union[Mapping[int, int], Callable[[int], int], None]


class EdgeTriple(NamedTuple):
    src: int
    dst: int
    count: int


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


def _checked_group_sums(counts: np.ndarray, starts: np.ndarray) -> np.ndarray:
    """Segmented uint64 sums that raise instead of wrapping around."""
    if len(counts) == 0:
        return np.zeros(0, dtype=np.uint64)
    sums = np.add.reduceat(counts, starts)
    if _bounded(counts):
        return sums
    approx = np.add.reduceat(counts.astype(np.float64), starts)
    suspect = np.flatnonzero(approx >= 2.0**63)
    if len(suspect):
        ends = np.append(starts[1:], len(counts))
        for g in suspect:
            exact = sum(int(c) for c in counts[starts[g]:ends[g]])
            if exact >= COUNT_LIMIT:
                raise OverflowError(
                    f"packet count overflows 64 bits ({exact}); input is corrupt"
                )
    return sums


def _bounded(counts: np.ndarray) -> bool:
    """True when no sum of these counts can reach 2**64."""
    return int(counts.max()) * len(counts) < COUNT_LIMIT


def _checked_total(counts: np.ndarray) -> int:
    if len(counts) == 0:
        return 0
    if _bounded(counts):
        return int(counts.sum(dtype=np.uint64))
    if float(counts.astype(np.float64).sum()) >= 2.0**63:
        total = sum(int(c) for c in counts)
        if total >= COUNT_LIMIT:
            raise OverflowError(
                f"total packet count overflows 64 bits ({total}); input is corrupt"
            )
        return total
    return int(counts.sum(dtype=np.uint64))


def _as_uint(values, limit: int, name: str, dtype) -> np.ndarray:
    arr = np.asarray(values)
    if arr.dtype.kind not in "iu":
        if arr.size == 0:
            return np.zeros(0, dtype=dtype)
        if arr.dtype == object:
            # Python ints wider than any numpy type end up here.
            if any(int(v) >= limit for v in arr.ravel()):
                if limit == COUNT_LIMIT:
                    raise OverflowError(f"{name} value does not fit in 64 bits")
                raise UsageError(f"{name} value outside [0, {limit})")
            arr = arr.astype(np.int64 if limit < COUNT_LIMIT else np.uint64)
        else:
            raise UsageError(f"{name} must be integral, got dtype {arr.dtype}")
    if arr.dtype.kind == "i" and arr.size and arr.min() < 0:
        raise UsageError(f"{name} must be nonnegative")
    if arr.size and limit < COUNT_LIMIT and int(arr.max()) >= limit:
        raise UsageError(f"{name} value outside [0, {limit})")
    return arr.astype(dtype, copy=False)


class TrafficMatrix:
    """Immutable hypersparse matrix of packet counts.

    Do not call the constructor directly; use :func:`from_triples`,
    :func:`from_arrays`, or the deserializers.
    """

    __slots__ = ("_src", "_dst", "_count", "_total", "_hash")

    def __init__(self, src: np.ndarray, dst: np.ndarray, count: np.ndarray, total: int):
        self._src = _frozen(src)
        self._dst = _frozen(dst)
        self._count = _frozen(count)
        self._total = total
        self._hash = None

    # -- basic properties -------------------------------------------------
    @property
    def src(self) -> np.ndarray:
        return self._src

    @property
    def dst(self) -> np.ndarray:
        return self._dst

    @property
    def counts(self) -> np.ndarray:
        return self._count

    @property
    def nnz(self) -> int:
        return len(self._count)

    @property
    def total_packets(self) -> int:
        return self._total

    def __len__(self) -> int:
        return self.nnz

    def __iter__(self) -> Iterator[EdgeTriple]:
        for s, d, c in zip(self._src.tolist(), self._dst.tolist(), self._count.tolist()):
            yield EdgeTriple(s, d, c)

    def triples(self) -> list[EdgeTriple]:
        return list(self)

    def __eq__(self, other) -> bool:
        if not isinstance(other, TrafficMatrix):
            return NotImplemented
        return (
            self.nnz == other.nnz
            and np.array_equal(self._src, other._src)
            and np.array_equal(self._dst, other._dst)
            and np.array_equal(self._count, other._count)
        )

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(self.to_bytes())
        return self._hash

    def __repr__(self) -> str:
        return f"TrafficMatrix(nnz={self.nnz}, total_packets={self.total_packets})"

    def __getitem__(self, key: tuple[int, int]) -> int:
        """Count stored at (src, dst), zero when the cell is empty."""
        i, j = key
        packed = self._keys()
        want = (np.uint64(i) << np.uint64(32)) | np.uint64(j)
        pos = np.searchsorted(packed, want)
        if pos < len(packed) and packed[pos] == want:
            return int(self._count[pos])
        return 0

    def _keys(self) -> np.ndarray:
        return (self._src.astype(np.uint64) << np.uint64(32)) | self._dst.astype(np.uint64)

    # -- serialization ----------------------------------------------------
    def to_bytes(self) -> bytes:
        rec = np.empty(self.nnz, dtype=TRIPLE_DTYPE)
        rec["src"] = self._src
        rec["dst"] = self._dst
        rec["count"] = self._count
        return _HEADER.pack(MAGIC, FORMAT_VERSION, self.nnz) + rec.tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "TrafficMatrix":
        if len(data) < _HEADER.size:
            raise ValueError("truncated matrix header")
        magic, version, nnz = _HEADER.unpack_from(data)
        if magic != MAGIC:
            raise ValueError(f"bad magic {magic!r}, expected {MAGIC!r}")
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported matrix format version {version}")
        body = data[_HEADER.size:]
        if len(body) != nnz * TRIPLE_DTYPE.itemsize:
            raise ValueError(
                f"matrix body is {len(body)} bytes, header promises {nnz} triples"
            )
        rec = np.frombuffer(body, dtype=TRIPLE_DTYPE)
        src = rec["src"].astype(np.uint32)
        dst = rec["dst"].astype(np.uint32)
        count = rec["count"].astype(np.uint64)
        keys = (src.astype(np.uint64) << np.uint64(32)) | dst.astype(np.uint64)
        if nnz > 1 and not np.all(keys[1:] > keys[:-1]):
            raise ValueError("matrix triples are not strictly sorted")
        if nnz and count.min() == 0:
            raise ValueError("matrix stores a zero count")
        return cls(src, dst, count, _checked_total(count))

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path: str | os.PathLike) -> "TrafficMatrix":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())

    def to_csv(self) -> str:
        buf = io.StringIO()
        for s, d, c in zip(self._src.tolist(), self._dst.tolist(), self._count.tolist()):
            buf.write(f"{s},{d},{c}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "TrafficMatrix":
        rows = []
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise ValueError(f"line {lineno}: expected src,dst,count, got {line!r}")
            try:
                rows.append(tuple(int(p) for p in parts))
            except ValueError:
                raise ValueError(f"line {lineno}: non-integer field in {line!r}") from None
        return from_triples(rows)


class DegreeVector:
    """Sparse vertex index -> degree map; zero degrees are never stored."""

    __slots__ = ("_index", "_value")

    def __init__(self, index, value):
        index = np.asarray(index, dtype=np.uint32)
        value = np.asarray(value, dtype=np.uint64)
        if index.shape != value.shape or index.ndim != 1:
            raise UsageError("index and value arrays must be 1-d and equal length")
        if len(index) > 1 and not np.all(index[1:] > index[:-1]):
            order = np.argsort(index, kind="stable")
            index, value = index[order], value[order]
            if not np.all(index[1:] > index[:-1]):
                raise UsageError("duplicate vertex index in degree vector")
        if len(value) and value.min() == 0:
            raise UsageError("degree vectors may not store zeros")
        self._index = _frozen(index)
        self._value = _frozen(value)

    @classmethod
    def from_mapping(cls, mapping: Mapping[int, int]) -> "DegreeVector":
        keys = sorted(mapping)
        return cls(np.array(keys, dtype=np.uint64), np.array([mapping[k] for k in keys], dtype=np.uint64))

    @property
    def indices(self) -> np.ndarray:
        return self._index

    @property
    def values(self) -> np.ndarray:
        return self._value

    def __len__(self) -> int:
        return len(self._index)

    def __iter__(self) -> Iterator[int]:
        return iter(self._index.tolist())

    def items(self) -> Iterator[tuple[int, int]]:
        return zip(self._index.tolist(), self._value.tolist())

    def to_dict(self) -> dict[int, int]:
        return dict(self.items())

    def __getitem__(self, index: int) -> int:
        pos = np.searchsorted(self._index, index)
        if pos < len(self._index) and self._index[pos] == index:
            return int(self._value[pos])
        return 0

    def __contains__(self, index) -> bool:
        return self[index] != 0

    def max(self) -> int:
        return int(self._value.max()) if len(self._value) else 0

    def sum(self) -> int:
        return _checked_total(self._value)

    def __eq__(self, other) -> bool:
        if not isinstance(other, DegreeVector):
            return NotImplemented
        return np.array_equal(self._index, other._index) and np.array_equal(
            self._value, other._value
        )

    __hash__ = None

    def __repr__(self) -> str:
        return f"DegreeVector(len={len(self)}, max={self.max()})"


def _accumulate(src: np.ndarray, dst: np.ndarray, count: np.ndarray) -> TrafficMatrix:
    if len(count) and count.min() == 0:
        raise UsageError("triples must carry counts >= 1")
    if len(count) == 0:
        return TrafficMatrix(
            np.zeros(0, np.uint32), np.zeros(0, np.uint32), np.zeros(0, np.uint64), 0
        )
    keys = (src.astype(np.uint64) << np.uint64(32)) | dst.astype(np.uint64)
    # Stable sort: runs from pre-sorted inputs (merge) are detected cheaply.
    order = np.argsort(keys, kind="stable")
    keys = keys[order]
    count = count[order]
    starts = np.flatnonzero(np.concatenate(([True], keys[1:] != keys[:-1])))
    sums = _checked_group_sums(count, starts)
    uniq = keys[starts]
    total = _checked_total(sums)
    return TrafficMatrix(
        (uniq >> np.uint64(32)).astype(np.uint32),
        (uniq & np.uint64(0xFFFFFFFF)).astype(np.uint32),
        sums.astype(np.uint64),
        total,
    )


def from_arrays(src, dst, count=None) -> TrafficMatrix:
    """Build a matrix from parallel index arrays; ``count=None`` means one packet each."""
    s = _as_uint(src, INDEX_LIMIT, "src", np.uint32)
    d = _as_uint(dst, INDEX_LIMIT, "dst", np.uint32)
    if count is None:
        c = np.ones(len(s), dtype=np.uint64)
    else:
        c = _as_uint(count, COUNT_LIMIT, "count", np.uint64)
    if not (len(s) == len(d) == len(c)):
        raise UsageError("src, dst and count must have equal length")
    return _accumulate(s, d, c)


def from_triples(raw: Sequence[tuple[int, int, int]] | np.ndarray) -> TrafficMatrix:
    """Sum duplicate (src, dst) pairs and sort.

    >>> from_triples([(16843009, 33686018, 1), (16843009, 33686018, 2)]).triples()
    [EdgeTriple(src=16843009, dst=33686018, count=3)]
    """
    if isinstance(raw, np.ndarray):
        arr = raw
        if arr.size == 0:
            return from_arrays([], [], [])
        if arr.ndim != 2 or arr.shape[1] != 3:
            raise UsageError("triple array must have shape (n, 3)")
        return from_arrays(arr[:, 0], arr[:, 1], arr[:, 2])
    raw = list(raw)
    if not raw:
        return from_arrays([], [], [])
    try:
        src, dst, count = zip(*raw)
    except ValueError:
        raise UsageError("every triple needs exactly (src, dst, count)") from None
    try:
        count_arr = np.array(count, dtype=np.uint64)
    except OverflowError:
        if any(c < 0 for c in count):
            raise UsageError("counts must be nonnegative") from None
        raise
    try:
        src_arr = np.array(src, dtype=np.int64)
        dst_arr = np.array(dst, dtype=np.int64)
    except OverflowError:
        raise UsageError("index value outside the 32-bit index space") from None
    return from_arrays(src_arr, dst_arr, count_arr)


def merge(a: TrafficMatrix, b: TrafficMatrix) -> TrafficMatrix:
    """Entrywise sum of two matrices."""
    if b.nnz == 0:
        return a
    if a.nnz == 0:
        return b
    return _accumulate(
        np.concatenate((a.src, b.src)),
        np.concatenate((a.dst, b.dst)),
        np.concatenate((a.counts, b.counts)),
    )


def hierarchical_sum(blocks: Sequence[TrafficMatrix], executor=None) -> TrafficMatrix:
    """Sum ``blocks`` with a balanced binary merge tree.

    Each level pairs neighbours (0+1, 2+3, ...) and carries an odd block up
    unchanged.  If ``executor`` (a ``concurrent.futures.Executor``) is given,
    merges within a level run through ``executor.map``; results keep their
    order, so the output is identical to the sequential path.
    """
    level = list(blocks)
    if not level:
        raise UsageError("hierarchical_sum needs at least one block")
    while len(level) > 1:
        lefts, rights = level[0:-1:2], level[1::2]
        if executor is None:
            merged = [merge(x, y) for x, y in zip(lefts, rights)]
        else:
            merged = list(executor.map(merge, lefts, rights))
        if len(level) % 2:
            merged.append(level[-1])
        level = merged
    return level[0]


def zero_norm(a: TrafficMatrix) -> TrafficMatrix:
    """Same sparsity pattern, every stored count set to 1."""
    ones = np.ones(a.nnz, dtype=np.uint64)
    return TrafficMatrix(a.src.copy(), a.dst.copy(), ones, a.nnz)


def _segment_sums(keys: np.ndarray, values: np.ndarray) -> DegreeVector:
    if len(keys) == 0:
        return DegreeVector(np.zeros(0, np.uint32), np.zeros(0, np.uint64))
    starts = np.flatnonzero(np.concatenate(([True], keys[1:] != keys[:-1])))
    return DegreeVector(keys[starts], np.add.reduceat(values, starts))


def row_sums(a: TrafficMatrix) -> DegreeVector:
    """Per-source totals over nonzero rows (A 1)."""
    return _segment_sums(a.src, a.counts)


def col_sums(a: TrafficMatrix) -> DegreeVector:
    """Per-destination totals over nonzero columns (1^T A)."""
    order = np.argsort(a.dst)
    return _segment_sums(a.dst[order], a.counts[order])


def _remap(used: np.ndarray, perm: PermutationLike, axis: str) -> np.ndarray:
    uniq, inverse = np.unique(used, return_inverse=True)
    if perm is None:
        return used
    lookup = perm.__getitem__ if isinstance(perm, Mapping) else perm
    try:
        mapped = np.array([lookup(int(u)) for u in uniq], dtype=np.int64)
    except KeyError as exc:
        raise UsageError(f"{axis} permutation has no image for index {exc.args[0]}") from None
    if mapped.size and (mapped.min() < 0 or mapped.max() >= INDEX_LIMIT):
        raise UsageError(f"{axis} permutation maps outside the 32-bit index space")
    if len(np.unique(mapped)) != len(mapped):
        raise UsageError(f"{axis} permutation is not injective on the used indices")
    return mapped[inverse].astype(np.uint32)


def permute(a: TrafficMatrix, row_perm: PermutationLike = None, col_perm: PermutationLike = None) -> TrafficMatrix:
    """Relabel rows and columns; ``None`` leaves an axis untouched.

    Permutations may be mappings or callables on ``int``; they need only be
    defined (and injective) on indices that actually occur.
    """
    if a.nnz == 0:
        return a
    src = _remap(a.src, row_perm, "row")
    dst = _remap(a.dst, col_perm, "column")
    return _accumulate(src, dst, a.counts.copy())
