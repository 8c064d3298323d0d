import io
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from telecorr.anonymize import SCHEME_ID, AnonymizationKey, anonymize, deanonymize
from telecorr.correlation import SourceSet, overlap_by_brightness
from telecorr.distributions import bin_degrees
from telecorr.errors import AddressParseError, DataQualityError, UsageError
from telecorr.hypersparse import from_arrays
from telecorr.pipeline import (
    InternalPrefixes,
    PacketBatch,
    PacketRecord,
    WindowSpec,
    format_packet_log,
    index_to_ip,
    ip_to_index,
    parse_packet_log,
    window_and_build,
)
from telecorr.quantities import aggregate, source_packets

KEY = AnonymizationKey(bytes(range(1, 33)))
OTHER = AnonymizationKey(bytes(range(2, 34)))


def random_batch(n, seed=0, n_src=200, internal=0x2C000000):
    rng = np.random.default_rng(seed)
    src = rng.integers(1 << 24, 1 << 28, size=n_src)[rng.integers(0, n_src, size=n)]
    dst = internal + rng.integers(0, 1 << 24, size=n)
    ts = 1_600_000_000_000_000 + np.arange(n) * 10
    return PacketBatch(ts, src, dst)


# -- addresses -------------------------------------------------------------------

@pytest.mark.parametrize(
    "addr, index",
    [("1.1.1.1", 16843009), ("2.2.2.2", 33686018), ("0.0.0.0", 0), ("255.255.255.255", (1 << 32) - 1)],
)
def test_ip_to_index(addr, index):
    assert ip_to_index(addr) == index
    assert index_to_ip(index) == addr


@pytest.mark.parametrize("bad", ["1.1.1", "1.1.1.1.1", "256.0.0.1", "a.b.c.d", "1..1.1", " 1.1.1.1", "1.1.1.-1", "", "1.1.1.0001"])
def test_ip_to_index_rejects(bad):
    with pytest.raises(AddressParseError) as info:
        ip_to_index(bad)
    assert info.value.text == bad


@given(st.integers(0, (1 << 32) - 1))
def test_ip_round_trip(i):
    assert ip_to_index(index_to_ip(i)) == i


# -- anonymization ----------------------------------------------------------------

def test_anonymize_deterministic_and_keyed():
    assert anonymize(0x0A000001, KEY) == anonymize(0x0A000001, KEY)
    xs = np.arange(1000, dtype=np.uint32)
    assert not np.array_equal(anonymize(xs, KEY), anonymize(xs, OTHER))


def test_anonymize_injective_on_random_inputs():
    rng = np.random.default_rng(0)
    xs = np.unique(rng.integers(0, 1 << 32, size=10_000, dtype=np.uint64)).astype(np.uint32)
    ys = anonymize(xs, KEY)
    assert len(np.unique(ys)) == len(xs)


def test_anonymize_full_bijection_on_a_prefix_block():
    # Prefix preservation maps each /16 onto a /16, so a whole block is closed.
    xs = np.arange(0x0A0B0000, 0x0A0C0000, dtype=np.uint32)
    ys = anonymize(xs, KEY)
    assert len(np.unique(ys)) == 1 << 16
    assert len(np.unique(ys >> 16)) == 1


def test_anonymize_shared_slash30():
    a, b = anonymize(0x0A000001, KEY), anonymize(0x0A000002, KEY)
    assert a >> 2 == b >> 2 and a != b


@given(st.integers(0, (1 << 32) - 1), st.integers(0, (1 << 32) - 1))
@settings(max_examples=300)
def test_anonymize_preserves_common_prefix_length(x, y):
    def common(u, v):
        return 32 - (u ^ v).bit_length()
    assert common(anonymize(x, KEY), anonymize(y, KEY)) == common(x, y)


@given(st.lists(st.integers(0, (1 << 32) - 1), max_size=50))
def test_deanonymize_inverts(xs):
    arr = np.array(xs, dtype=np.uint32)
    assert deanonymize(anonymize(arr, KEY), KEY).tolist() == xs


def test_key_validation_and_files(tmp_path):
    with pytest.raises(UsageError):
        AnonymizationKey(b"\0" * 32)
    with pytest.raises(UsageError):
        AnonymizationKey(b"\1" * 16)
    with pytest.raises(UsageError):
        AnonymizationKey(b"\1" * 32, scheme_id="other-scheme")
    (tmp_path / "k.hex").write_text(KEY.to_hex() + "\n")
    (tmp_path / "k.bin").write_bytes(KEY.key_bytes)
    assert AnonymizationKey.from_file(tmp_path / "k.hex") == KEY
    assert AnonymizationKey.from_file(tmp_path / "k.bin") == KEY
    assert KEY.scheme_id == SCHEME_ID
    assert AnonymizationKey.generate() != AnonymizationKey.generate()


def test_anonymize_rejects_out_of_range():
    with pytest.raises(UsageError):
        anonymize(1 << 32, KEY)


# -- parsing --------------------------------------------------------------------------

def test_parse_empty():
    r = parse_packet_log(io.StringIO(""))
    assert len(r.records) == 0 and r.n_malformed == 0


def test_parse_single_record():
    r = parse_packet_log(["0,1.1.1.1,2.2.2.2"])
    assert list(r.records) == [PacketRecord(0, 16843009, 33686018)]


def test_parse_one_bad_in_fifty():
    lines = [f"{k},1.1.1.1,2.2.2.{k}" for k in range(50)]
    lines[17] = "17,1.1.1,2.2.2.2"
    r = parse_packet_log(lines)
    assert len(r.records) == 49 and r.n_malformed == 1
    assert r.errors == [(18, "17,1.1.1,2.2.2.2")]
    assert [rec.timestamp for rec in r.records] == [k for k in range(50) if k != 17]


def test_parse_rate_threshold():
    good = [f"{k},1.1.1.1,2.2.2.2" for k in range(200)]
    ok = good[:198] + ["x"] * 2
    assert parse_packet_log(ok).n_malformed == 2
    bad = good[:197] + ["x"] * 3
    with pytest.raises(DataQualityError, match="198"):
        parse_packet_log(bad)


def test_parse_missing_file(tmp_path):
    with pytest.raises(OSError):
        parse_packet_log(tmp_path / "nope.csv")


def test_parse_fast_and_slow_paths_agree(tmp_path):
    batch = random_batch(3000, seed=1)
    text = format_packet_log(batch)
    (tmp_path / "p.csv").write_text(text)
    fast = parse_packet_log(tmp_path / "p.csv").records
    slow = parse_packet_log(text.splitlines() + ["bad line"]).records
    for col in ("timestamps", "src", "dst"):
        assert np.array_equal(getattr(fast, col), getattr(batch, col))
        assert np.array_equal(getattr(slow, col), getattr(batch, col))


def test_parse_rejects_octet_over_255_in_fast_path():
    r = parse_packet_log([f"{k},1.1.1.1,2.2.2.2" for k in range(150)] + ["150,1.1.1.300,2.2.2.2"])
    assert r.n_malformed == 1 and len(r.records) == 150


# -- windowing ------------------------------------------------------------------------

def test_window_spec_validation():
    for bad in ((1000, 10), (1 << 10, 1 << 11), (0, 1)):
        with pytest.raises(UsageError):
            WindowSpec(*bad)


def test_single_window_conservation():
    out = window_and_build(random_batch(1 << 10), WindowSpec(1 << 10, 1 << 7))
    assert len(out.matrices) == 1 and out.remainder == 0
    assert out.matrices[0].total_packets == 1 << 10


def test_remainder_reported():
    out = window_and_build(random_batch((1 << 10) + 5), WindowSpec(1 << 10, 1 << 7))
    assert len(out.matrices) == 1 and out.remainder == 5


def test_sub_block_matches_flat_construction():
    b = random_batch(3 << 10, seed=2)
    hier = window_and_build(b, WindowSpec(1 << 10, 1 << 7))
    flat = window_and_build(b, WindowSpec(1 << 10, 1 << 10))
    assert [m.to_bytes() for m in hier.matrices] == [m.to_bytes() for m in flat.matrices]
    direct = from_arrays(b.src[1 << 10: 2 << 10], b.dst[1 << 10: 2 << 10])
    assert hier.matrices[1] == direct
    assert hier.windows[1].first_timestamp == int(b.timestamps[1 << 10])


def test_parallel_build_identical():
    b = random_batch(1 << 12, seed=3)
    with ThreadPoolExecutor(4) as pool:
        par = window_and_build(b, WindowSpec(1 << 11, 1 << 6), executor=pool)
    seq = window_and_build(b, WindowSpec(1 << 11, 1 << 6))
    assert [m.to_bytes() for m in par.matrices] == [m.to_bytes() for m in seq.matrices]


def test_out_of_order_beyond_tolerance():
    b = random_batch(100)
    ts = b.timestamps.copy()
    ts[50] = ts[49] - 900_000
    window_and_build(PacketBatch(ts, b.src, b.dst), WindowSpec(64, 8))
    ts[50] = ts[49] - 1_500_000
    with pytest.raises(DataQualityError, match="record 50"):
        window_and_build(PacketBatch(ts, b.src, b.dst), WindowSpec(64, 8))


def test_darkspace_filter():
    rng = np.random.default_rng(4)
    n = 5000
    internal = InternalPrefixes(["44.0.0.0/8"])
    base = np.uint32(44 << 24)
    src = np.where(rng.random(n) < 0.3, base + rng.integers(0, 1 << 24, n), rng.integers(1 << 24, 40 << 24, n))
    dst = np.where(rng.random(n) < 0.7, base + rng.integers(0, 1 << 24, n), rng.integers(1 << 24, 40 << 24, n))
    batch = PacketBatch(np.arange(n), src, dst)
    out = window_and_build(batch, WindowSpec(256, 32), internal)
    expected = int(np.sum(~internal.contains(src) & internal.contains(dst)))
    assert out.n_valid_packets == expected and out.n_discarded == n - expected
    assert sum(m.total_packets for m in out.matrices) + out.remainder == expected
    for m in out.matrices:
        assert not set(m.src.tolist()) & set(m.dst.tolist())
        assert internal.contains(m.dst).all() and not internal.contains(m.src).any()


def test_internal_prefix_parsing():
    p = InternalPrefixes(["10.0.0.0/8", "192.168.1.7"])
    assert p.contains([ip_to_index("10.9.9.9"), ip_to_index("192.168.1.7"), ip_to_index("192.168.1.8")]).tolist() == [True, True, False]
    for bad in (["10.0.0.0/33"], ["10.0.0/8"], ["10.0.0.0/x"]):
        with pytest.raises(UsageError):
            InternalPrefixes(bad)


def test_callable_filter():
    b = random_batch(512)
    out = window_and_build(b, WindowSpec(128, 16), lambda s, d: s % 2 == 0)
    assert out.n_valid_packets == int(np.sum(b.src % 2 == 0))


def test_anonymization_transparency():
    b = random_batch(1 << 12, seed=5)
    raw = window_and_build(b, WindowSpec(1 << 11, 1 << 8))
    anon = window_and_build(b, WindowSpec(1 << 11, 1 << 8), key=KEY)
    for r, a in zip(raw.matrices, anon.matrices):
        assert aggregate(r) == aggregate(a)
        assert bin_degrees(source_packets(r)) == bin_degrees(source_packets(a))
        assert a == from_arrays(anonymize(r.src, KEY), anonymize(r.dst, KEY), r.counts)
        outpost = set(r.src.tolist()[::3])
        plain = overlap_by_brightness(SourceSet.from_matrix(r, "2020-09"), outpost)
        hidden = overlap_by_brightness(
            SourceSet.from_matrix(a, "2020-09"), set(anonymize(np.array(sorted(outpost), dtype=np.uint32), KEY).tolist())
        )
        assert plain == hidden


def test_empty_input():
    out = window_and_build(PacketBatch([], [], []), WindowSpec(8, 2), key=KEY)
    assert out.matrices == [] and out.remainder == 0 and out.n_valid_packets == 0
