"""Packet ingestion: address parsing, log reading, quadrant filtering, windowing.

Packet logs are CSV lines ``timestamp,src,dst`` with microsecond timestamps
and dotted-quad addresses.  Valid packets are cut into constant-packet
windows of ``n_valid`` packets; each window's matrix is the hierarchical sum
of ``n_valid / sub_block`` sub-block matrices.
"""

from __future__ import annotations

import io
import logging
import os
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass, field
from typing import NamedTuple, Union

import numpy as np

from .anonymize import AnonymizationKey, anonymize
from .errors import AddressParseError, DataQualityError, UsageError
from .hypersparse import TrafficMatrix, from_arrays, hierarchical_sum

__all__ = [
    "PacketRecord",
    "PacketBatch",
    "ParseResult",
    "WindowSpec",
    "WindowInfo",
    "WindowedMatrices",
    "InternalPrefixes",
    "ip_to_index",
    "index_to_ip",
    "parse_packet_log",
    "window_and_build",
    "format_packet_log",
    "ORDER_TOLERANCE_US",
]

log = logging.getLogger(__name__)

ORDER_TOLERANCE_US = 1_000_000
DEFAULT_N_VALID = 1 << 20
DEFAULT_SUB_BLOCK = 1 << 10



def ip_to_index(addr: str) -> int:
    """Pack a dotted quad big-endian into a 32-bit index.

    >>> ip_to_index("1.1.1.1"), ip_to_index("2.2.2.2")
    (16843009, 33686018)
    """
    parts = addr.split(".") if isinstance(addr, str) else ()
    if len(parts) != 4:
        raise AddressParseError(addr)
    value = 0
    for part in parts:
        if not (part.isascii() and part.isdigit()) or len(part) > 3:
            raise AddressParseError(addr)
        octet = int(part)
        if octet > 255:
            raise AddressParseError(addr)
        value = (value << 8) | octet
    return value


def index_to_ip(index: int) -> str:
    index = int(index)
    if not 0 <= index < 1 << 32:
        raise UsageError(f"index {index} outside the 32-bit address space")
    return ".".join(str((index >> s) & 0xFF) for s in (24, 16, 8, 0))


class PacketRecord(NamedTuple):
    timestamp: int
    src_addr: int
    dst_addr: int


class PacketBatch(Sequence):
    """Column-oriented packet records (timestamps in microseconds, indices as uint32)."""

    __slots__ = ("timestamps", "src", "dst")

    def __init__(self, timestamps, src, dst):
        self.timestamps = np.asarray(timestamps, dtype=np.int64)
        self.src = np.asarray(src, dtype=np.uint32)
        self.dst = np.asarray(dst, dtype=np.uint32)
        if not (len(self.timestamps) == len(self.src) == len(self.dst)):
            raise UsageError("packet columns must have equal length")

    @classmethod
    def from_records(cls, records: Iterable[PacketRecord]) -> "PacketBatch":
        rows = list(records)
        if not rows:
            return cls([], [], [])
        ts, s, d = zip(*rows)
        return cls(ts, s, d)

    def __len__(self) -> int:
        return len(self.timestamps)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return PacketBatch(self.timestamps[i], self.src[i], self.dst[i])
        return PacketRecord(int(self.timestamps[i]), int(self.src[i]), int(self.dst[i]))


@dataclass
class ParseResult:
    records: PacketBatch
    errors: list[tuple[int, str]] = field(default_factory=list)
    n_lines: int = 0

    @property
    def n_malformed(self) -> int:
        return len(self.errors)


_INT64_MAX = (1 << 63) - 1
# Separator layout of one well-formed line: ts , a.b.c.d , a.b.c.d \n
_LINE_SEPS = np.frombuffer(b",...,...\n", dtype=np.uint8)


def _parse_line(line: str) -> tuple[int, int, int]:
    parts = line.split(",")
    if len(parts) != 3:
        raise ValueError("expected timestamp,src,dst")
    ts = parts[0].strip()
    if not (ts.isascii() and ts.isdigit()) or int(ts) > _INT64_MAX:
        raise ValueError(f"bad timestamp {ts!r}")
    return int(ts), ip_to_index(parts[1].strip()), ip_to_index(parts[2].strip())


def _digits_to_int(buf: np.ndarray, ends: np.ndarray, lengths: np.ndarray, width: int, dtype) -> np.ndarray:
    """Decimal value of each digit run ``buf[end - length:end]``, right-aligned to ``width``."""
    ends, lengths = ends.ravel(), lengths.ravel()
    out = np.zeros(len(ends), dtype=dtype)
    for k in range(width, 0, -1):
        digit = buf.take(ends - k).astype(dtype)  # negative indices only where masked
        digit -= 48
        digit[lengths < k] = 0
        out *= 10
        out += digit
    return out


def _fast_parse(data: bytes) -> PacketBatch | None:
    """Vectorized path for clean logs; ``None`` means fall back to per-line parsing."""
    if not data.endswith(b"\n"):
        data += b"\n"
    buf = np.frombuffer(data, dtype=np.uint8)
    sep = np.flatnonzero((buf < 48) | (buf > 57))
    n = len(sep) // 9
    if len(sep) != 9 * n or not np.array_equal(buf[sep].reshape(n, 9), np.broadcast_to(_LINE_SEPS, (n, 9))):
        return None
    lengths = np.diff(sep, prepend=-1) - 1
    lengths, ends = lengths.reshape(n, 9), sep.reshape(n, 9)
    ts_len, oct_len = lengths[:, 0], lengths[:, 1:]
    if ts_len.min() < 1 or ts_len.max() > 18 or oct_len.min() < 1 or oct_len.max() > 3:
        return None
    ts = _digits_to_int(buf, ends[:, 0], ts_len, int(ts_len.max()), np.int64)
    octets = _digits_to_int(buf, ends[:, 1:], oct_len, 3, np.int32).reshape(n, 8)
    if octets.max(initial=0) > 255:
        return None
    weights = np.array([1 << 24, 1 << 16, 1 << 8, 1], dtype=np.int64)
    octets = octets.astype(np.int64)
    return PacketBatch(ts, octets[:, :4] @ weights, octets[:, 4:] @ weights)


def parse_packet_log(
    source: Union[str, os.PathLike, Iterable[str]],
    max_error_rate: float = 0.01,
    min_lines_for_rate: int = 100,
) -> ParseResult:
    """Read a ``timestamp,src,dst`` packet log.

    Malformed lines are skipped and reported with their line numbers.  If the
    file has at least ``min_lines_for_rate`` nonblank lines and more than
    ``max_error_rate`` of them are malformed, :class:`DataQualityError` is
    raised instead.
    """
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            data = fh.read()
    else:
        data = "".join(line.rstrip("\r\n") + "\n" for line in source).encode("utf-8", "replace")
    if not data.strip():
        return ParseResult(PacketBatch([], [], []), [], 0)

    batch = _fast_parse(data)
    if batch is not None:
        return ParseResult(batch, [], len(batch))

    raw = data.decode("utf-8", "replace").splitlines()
    numbered = [(n, line.strip()) for n, line in enumerate(raw, 1) if line.strip()]
    n_lines = len(numbered)
    rows, errors = [], []
    for n, line in numbered:
        try:
            rows.append(_parse_line(line))
        except (ValueError, AddressParseError):
            errors.append((n, line))
    if errors and n_lines >= min_lines_for_rate and len(errors) / n_lines > max_error_rate:
        shown = ", ".join(str(n) for n, _ in errors[:20])
        more = "" if len(errors) <= 20 else f" (+{len(errors) - 20} more)"
        raise DataQualityError(
            f"{len(errors)} of {n_lines} lines malformed "
            f"(> {max_error_rate:.0%}); lines {shown}{more}"
        )
    if errors:
        log.warning("skipped %d malformed line(s) of %d", len(errors), n_lines)
    records = PacketBatch.from_records(PacketRecord(*r) for r in rows)
    return ParseResult(records, errors, n_lines)


def format_packet_log(batch: PacketBatch) -> str:
    """Inverse of :func:`parse_packet_log` for clean data."""
    buf = io.StringIO()
    for ts, s, d in zip(batch.timestamps.tolist(), batch.src.tolist(), batch.dst.tolist()):
        buf.write(f"{ts},{index_to_ip(s)},{index_to_ip(d)}\n")
    return buf.getvalue()


class InternalPrefixes:
    """Membership test for a list of internal CIDR blocks."""

    def __init__(self, cidrs: Iterable[str]):
        nets, masks = [], []
        self.cidrs = tuple(cidrs)
        for cidr in self.cidrs:
            addr, _, length = cidr.partition("/")
            try:
                plen = int(length) if length else 32
            except ValueError:
                raise UsageError(f"bad CIDR {cidr!r}") from None
            if not 0 <= plen <= 32:
                raise UsageError(f"bad prefix length in {cidr!r}")
            try:
                base = ip_to_index(addr)
            except AddressParseError:
                raise UsageError(f"bad CIDR {cidr!r}") from None
            mask = (0xFFFFFFFF << (32 - plen)) & 0xFFFFFFFF
            nets.append(base & mask)
            masks.append(mask)
        self._nets = np.array(nets, dtype=np.uint32)
        self._masks = np.array(masks, dtype=np.uint32)

    def contains(self, indices) -> np.ndarray:
        x = np.asarray(indices, dtype=np.uint32)
        hit = np.zeros(x.shape, dtype=bool)
        for net, mask in zip(self._nets, self._masks):
            hit |= (x & mask) == net
        return hit

    def external_to_internal(self, src, dst) -> np.ndarray:
        """Valid-packet mask for a darkspace: outside source, inside destination."""
        return ~self.contains(src) & self.contains(dst)

    def __repr__(self) -> str:
        return f"InternalPrefixes({list(self.cidrs)!r})"


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and n & (n - 1) == 0


@dataclass(frozen=True)
class WindowSpec:
    n_valid: int = DEFAULT_N_VALID
    sub_block: int = DEFAULT_SUB_BLOCK

    def __post_init__(self):
        if not _is_power_of_two(self.n_valid) or not _is_power_of_two(self.sub_block):
            raise UsageError("n_valid and sub_block must be powers of two")
        if self.sub_block > self.n_valid:
            raise UsageError("sub_block must not exceed n_valid")


class WindowInfo(NamedTuple):
    first_timestamp: int
    last_timestamp: int


@dataclass
class WindowedMatrices:
    matrices: list[TrafficMatrix]
    windows: list[WindowInfo]
    remainder: int
    n_valid_packets: int
    n_discarded: int


QuadrantFilter = Union[InternalPrefixes, Callable[[np.ndarray, np.ndarray], np.ndarray], None]


def _check_order(ts: np.ndarray) -> None:
    if len(ts) < 2:
        return
    running = np.maximum.accumulate(ts)
    late = np.flatnonzero(ts[1:] < running[:-1] - ORDER_TOLERANCE_US)
    if len(late):
        k = int(late[0]) + 1
        raise DataQualityError(
            f"record {k} (timestamp {int(ts[k])}) is more than 1 s earlier "
            f"than an earlier record ({int(running[k - 1])})"
        )


def window_and_build(
    records: PacketBatch | Sequence[PacketRecord],
    spec: WindowSpec = WindowSpec(),
    quadrant_filter: QuadrantFilter = None,
    key: AnonymizationKey | None = None,
    executor=None,
) -> WindowedMatrices:
    """Cut valid packets into constant-packet windows and build one matrix each.

    A :class:`InternalPrefixes` filter keeps external->internal packets only; a
    callable filter receives (src, dst) index arrays and returns a keep mask.
    Addresses are anonymized after filtering.  Packets left over after the
    last full window are counted in ``remainder`` but not emitted.
    """
    batch = records if isinstance(records, PacketBatch) else PacketBatch.from_records(records)
    _check_order(batch.timestamps)

    src, dst, ts = batch.src, batch.dst, batch.timestamps
    if quadrant_filter is not None:
        if isinstance(quadrant_filter, InternalPrefixes):
            keep = quadrant_filter.external_to_internal(src, dst)
        else:
            keep = np.asarray(quadrant_filter(src, dst), dtype=bool)
        src, dst, ts = src[keep], dst[keep], ts[keep]
    n_valid_packets = len(src)
    n_discarded = len(batch) - n_valid_packets

    if key is not None and n_valid_packets:
        # Anonymize distinct addresses only; repeat sources are common.
        uniq, inverse = np.unique(np.concatenate((src, dst)), return_inverse=True)
        mapped = anonymize(uniq, key)[inverse]
        src, dst = mapped[:n_valid_packets], mapped[n_valid_packets:]

    n_windows = n_valid_packets // spec.n_valid
    per_window = spec.n_valid // spec.sub_block
    matrices, windows = [], []
    for w in range(n_windows):
        lo = w * spec.n_valid
        blocks = [
            from_arrays(src[b:b + spec.sub_block], dst[b:b + spec.sub_block])
            for b in range(lo, lo + spec.n_valid, spec.sub_block)
        ]
        assert len(blocks) == per_window
        matrices.append(hierarchical_sum(blocks, executor=executor))
        windows.append(WindowInfo(int(ts[lo]), int(ts[lo + spec.n_valid - 1])))
    remainder = n_valid_packets - n_windows * spec.n_valid
    if remainder:
        log.info("%d valid packets after the last full window were not emitted", remainder)
    return WindowedMatrices(matrices, windows, remainder, n_valid_packets, n_discarded)
