"""Aggregate network quantities of a traffic matrix.

Per-vertex quantities come back as :class:`DegreeVector` values; the scalar
summary is a :class:`NetworkQuantities` record computed in one pass over
the stored triples.

Destination packets are the raw column sums of ``A``; the zero-norm only
enters the link, fan-out and fan-in counts.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields

import numpy as np

from .hypersparse import DegreeVector, TrafficMatrix, col_sums, row_sums, zero_norm

__all__ = [
    "DegreeVector",
    "NetworkQuantities",
    "aggregate",
    "source_packets",
    "source_fanout",
    "destination_packets",
    "destination_fanin",
]


@dataclass(frozen=True)
class NetworkQuantities:
    valid_packets: int = 0
    unique_links: int = 0
    max_link_packets: int = 0
    unique_sources: int = 0
    max_source_packets: int = 0
    max_source_fanout: int = 0
    unique_destinations: int = 0
    max_destination_packets: int = 0
    max_destination_fanin: int = 0

    def to_dict(self) -> dict[str, int]:
        return asdict(self)

    def to_json(self, **kwargs) -> str:
        kwargs.setdefault("indent", 2)
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, data: dict) -> "NetworkQuantities":
        names = [f.name for f in fields(cls)]
        missing = set(names) - set(data)
        if missing:
            raise ValueError(f"missing quantity fields: {sorted(missing)}")
        return cls(**{n: int(data[n]) for n in names})


def source_packets(a: TrafficMatrix) -> DegreeVector:
    return row_sums(a)


def source_fanout(a: TrafficMatrix) -> DegreeVector:
    return row_sums(zero_norm(a))


def destination_packets(a: TrafficMatrix) -> DegreeVector:
    return col_sums(a)


def destination_fanin(a: TrafficMatrix) -> DegreeVector:
    return col_sums(zero_norm(a))


def _group_stats(keys: np.ndarray, counts: np.ndarray) -> tuple[int, int, int]:
    """(#groups, max group sum, max group size) for a sorted key array."""
    starts = np.flatnonzero(np.concatenate(([True], keys[1:] != keys[:-1])))
    sums = np.add.reduceat(counts, starts)
    sizes = np.diff(np.append(starts, len(keys)))
    return len(starts), int(sums.max()), int(sizes.max())


def aggregate(a: TrafficMatrix) -> NetworkQuantities:
    """Every scalar aggregate of the traffic matrix.

    >>> from telecorr.hypersparse import from_triples
    >>> q = aggregate(from_triples([(1, 2, 3), (1, 5, 4), (9, 2, 1)]))
    >>> q.valid_packets, q.unique_links, q.max_source_packets, q.max_destination_fanin
    (8, 3, 7, 2)
    """
    if a.nnz == 0:
        return NetworkQuantities()
    n_src, max_src_pk, max_fanout = _group_stats(a.src, a.counts)
    order = np.argsort(a.dst)
    n_dst, max_dst_pk, max_fanin = _group_stats(a.dst[order], a.counts[order])
    return NetworkQuantities(
        valid_packets=a.total_packets,
        unique_links=a.nnz,
        max_link_packets=int(a.counts.max()),
        unique_sources=n_src,
        max_source_packets=max_src_pk,
        max_source_fanout=max_fanout,
        unique_destinations=n_dst,
        max_destination_packets=max_dst_pk,
        max_destination_fanin=max_fanin,
    )
