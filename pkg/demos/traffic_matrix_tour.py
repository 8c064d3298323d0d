"""Build a traffic matrix from a small packet log and summarize it.

Run:  python demos/traffic_matrix_tour.py
"""

import numpy as np

from telecorr import aggregate, hierarchical_sum, source_packets
from telecorr.anonymize import AnonymizationKey
from telecorr.distributions import bin_degrees, probability_views
from telecorr.pipeline import InternalPrefixes, PacketBatch, WindowSpec, format_packet_log, parse_packet_log, window_and_build

rng = np.random.default_rng(0)

# A darkspace at 44.0.0.0/8 receives packets from a handful of heavy scanners
# and many one-off sources; some outbound backscatter is mixed in.
n = 1 << 14
scanners = rng.integers(1 << 24, 40 << 24, size=64)
heavy = rng.random(n) < 0.6
src = np.where(heavy, rng.choice(scanners, size=n), rng.integers(1 << 24, 40 << 24, size=n))
dst = (44 << 24) + rng.integers(0, 1 << 10, size=n)
outbound = rng.random(n) < 0.05
src[outbound], dst[outbound] = dst[outbound], src[outbound]
log_text = format_packet_log(PacketBatch(1_600_000_000_000_000 + np.arange(n) * 250, src, dst))

parsed = parse_packet_log(log_text.splitlines())
print(f"parsed {len(parsed.records)} packets, {parsed.n_malformed} malformed")

darkspace = InternalPrefixes(["44.0.0.0/8"])
spec = WindowSpec(n_valid=1 << 13, sub_block=1 << 8)
plain = window_and_build(parsed.records, spec, darkspace)
print(f"valid {plain.n_valid_packets}, discarded {plain.n_discarded}, "
      f"windows {len(plain.matrices)}, remainder {plain.remainder}")

m = plain.matrices[0]
q = aggregate(m)
for field, value in q.to_dict().items():
    print(f"  {field:>24s} = {value}")

# The same window under anonymization: indices change, statistics do not.
key = AnonymizationKey(bytes(range(1, 33)))
hidden = window_and_build(parsed.records, spec, darkspace, key=key).matrices[0]
print("anonymized aggregates identical:", aggregate(hidden) == q)

binned = bin_degrees(source_packets(m))
views = probability_views(binned)
print("source-packet bins (d_i, count, D):")
for i, c, D in zip(binned.bin_lower_exponents, binned.counts, views.D):
    if c:
        print(f"  {1 << i:>6d}  {c:>5d}  {D:.4f}")

# Windows can also be merged after the fact.
both = hierarchical_sum(plain.matrices)
print("two windows merged:", both.total_packets, "packets,", both.nnz, "links")
