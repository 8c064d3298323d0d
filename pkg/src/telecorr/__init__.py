"""Hypersparse traffic matrices, heavy-tailed degree fits and cross-site
temporal correlation of network observatories."""

from .errors import AddressParseError, DataQualityError, DegenerateFitError, UsageError
from .hypersparse import (
    DegreeVector,
    EdgeTriple,
    TrafficMatrix,
    col_sums,
    from_arrays,
    from_triples,
    hierarchical_sum,
    merge,
    permute,
    row_sums,
    zero_norm,
)
from .quantities import (
    NetworkQuantities,
    aggregate,
    destination_fanin,
    destination_packets,
    source_fanout,
    source_packets,
)

__version__ = "0.1.0"
