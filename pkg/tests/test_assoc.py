import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from telecorr.assoc import (
    AssocArray,
    assoc_from_degree_vector,
    assoc_from_triples,
    row_intersection,
)
from telecorr.errors import UsageError
from telecorr.hypersparse import DegreeVector
from telecorr.pipeline import index_to_ip, ip_to_index

keys = st.text(alphabet="abcdef.0123456789", min_size=1, max_size=6)


def test_single_cell():
    a = assoc_from_triples(["1.1.1.1"], ["2.2.2.2"], ["3"])
    assert a.shape == (1, 1)
    assert a["1.1.1.1", "2.2.2.2"] == "3"


def test_empty_and_overwrite():
    assert assoc_from_triples([], [], []).shape == (0, 0)
    a = assoc_from_triples(["r", "r"], ["c", "c"], ["1", "2"])
    assert a["r", "c"] == "2" and len(a) == 1


def test_length_mismatch():
    with pytest.raises(UsageError):
        assoc_from_triples(["a"], [], ["1"])


def test_keys_sorted_and_unique():
    a = assoc_from_triples(["b", "a", "b"], ["y", "x", "x"], ["1", "2", "3"])
    assert a.row_keys == ("a", "b") and a.col_keys == ("x", "y")


def test_from_degree_vector():
    a = assoc_from_degree_vector(DegreeVector.from_mapping({16843009: 3}), index_to_ip)
    assert a.row_keys == ("1.1.1.1",) and a.col_keys == ("packets",)
    assert a["1.1.1.1", "packets"] == "3"
    assert len(assoc_from_degree_vector(DegreeVector.from_mapping({}), index_to_ip)) == 0
    with pytest.raises(UsageError, match="7"):
        assoc_from_degree_vector(DegreeVector.from_mapping({7: 1}), {})


def test_degree_vector_round_trip():
    rng = random.Random(3)
    v = DegreeVector.from_mapping({rng.randrange(1 << 32): rng.randrange(1, 10**12) for _ in range(500)})
    a = assoc_from_degree_vector(v, index_to_ip)
    assert a.to_degree_vector(ip_to_index) == v


@given(st.sets(keys, max_size=30), st.sets(keys, max_size=30))
@settings(max_examples=80, deadline=None)
def test_row_intersection(xs, ys):
    a = assoc_from_triples(sorted(xs), ["c"] * len(xs), ["1"] * len(xs))
    b = assoc_from_triples(sorted(ys), ["c"] * len(ys), ["1"] * len(ys))
    assert row_intersection(a, b) == sorted(xs & ys)
    assert row_intersection(a, b) == row_intersection(b, a)
    assert row_intersection(a, a) == sorted(xs)


@given(st.lists(st.tuples(keys, keys, keys), max_size=30, unique_by=lambda t: (t[0], t[1])), st.randoms(use_true_random=False))
@settings(max_examples=60, deadline=None)
def test_order_insensitive_for_distinct_pairs(triples, rnd):
    shuffled = list(triples)
    rnd.shuffle(shuffled)
    a = assoc_from_triples(*zip(*triples)) if triples else assoc_from_triples([], [], [])
    b = assoc_from_triples(*zip(*shuffled)) if shuffled else assoc_from_triples([], [], [])
    assert a == b


def test_tsv_round_trip():
    a = assoc_from_triples(["r1", "r2", "r2"], ["a", "a", "b"], ["x", "y", "z"])
    text = a.to_tsv()
    assert text.splitlines() == ["\ta\tb", "r1\tx\t", "r2\ty\tz"]
    assert AssocArray.from_tsv(text) == a


def test_immutable():
    a = assoc_from_triples(["r"], ["c"], ["1"])
    with pytest.raises(TypeError):
        a.cells[("r", "c")] = "2"
