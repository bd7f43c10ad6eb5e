import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crlmesh.bloom import BloomDecodeError, BloomFilter, optimal_k, size_bits


def test_size_bits_matches_closed_form():
    for n in (1, 10, 1000):
        for p in (1e-3, 1e-20, 1e-30):
            expected = math.ceil(-n * math.log(p) / math.log(2) ** 2)
            assert size_bits(n, p) == expected


def test_size_bits_ten_pieces_published_value():
    # 10 pieces at p=1e-20 -> 120 bytes after byte rounding
    assert -(-size_bits(10, 1e-20) // 8) == 120


def test_optimal_k_published_values():
    assert optimal_k(1e-20) == 67
    assert optimal_k(1e-22) == 73
    assert optimal_k(1e-23) == 76
    assert optimal_k(1e-30) == 100


def test_domain_guards():
    with pytest.raises(ValueError):
        size_bits(0, 1e-3)
    for bad in (0.0, 1.0, -0.5, 2.0):
        with pytest.raises(ValueError):
            size_bits(10, bad)
        with pytest.raises(ValueError):
            optimal_k(bad)
    with pytest.raises(ValueError):
        BloomFilter(0, 3)
    with pytest.raises(ValueError):
        BloomFilter(8, 0)


@given(st.lists(st.binary(min_size=1, max_size=64), min_size=1, max_size=50))
@settings(max_examples=50)
def test_no_false_negatives(elements):
    f = BloomFilter.from_params(max(len(elements), 1), 1e-6)
    for e in elements:
        f.insert(e)
    assert all(e in f for e in elements)


def test_empirical_fpr_in_expected_band():
    rng = random.Random(99)
    p = 1e-3
    f = BloomFilter.from_params(1000, p)
    for _ in range(1000):
        f.insert(rng.randbytes(32))
    probes = 200_000
    hits = sum(1 for _ in range(probes) if f.contains(rng.randbytes(32)))
    rate = hits / probes
    assert p / 3 <= rate <= 3 * p, rate


def test_insert_order_determines_identical_bits():
    elems = [bytes([i]) * 8 for i in range(20)]
    a = BloomFilter(503, 7)
    b = BloomFilter(503, 7)
    for e in elems:
        a.insert(e)
        b.insert(e)
    assert a == b
    assert a.serialize() == b.serialize()


def test_serialize_roundtrip():
    f = BloomFilter(1001, 13)
    for i in range(30):
        f.insert(bytes([i, i + 1]))
    g = BloomFilter.deserialize(f.serialize())
    assert g == f
    assert g.byte_size() == f.byte_size() == len(f.serialize())


def test_deserialize_errors():
    f = BloomFilter(64, 4)
    data = f.serialize()
    with pytest.raises(BloomDecodeError):
        BloomFilter.deserialize(data[:-1])
    with pytest.raises(BloomDecodeError):
        BloomFilter.deserialize(data + b"\x00")
    with pytest.raises(BloomDecodeError):
        BloomFilter.deserialize(b"\x00\x00\x00\x00\x00\x00")  # zero params


def test_index_distribution_is_uniform():
    """Chi-square over 6 equal index buckets; critical value 15.086 at
    alpha=0.01, df=5."""
    rng = random.Random(7)
    f = BloomFilter(6000, 1)
    counts = [0] * 6
    n = 30_000
    for _ in range(n):
        idx = next(iter(f._indexes(rng.randbytes(16))))
        counts[idx * 6 // 6000] += 1
    expected = n / 6
    chi2 = sum((c - expected) ** 2 / expected for c in counts)
    assert chi2 < 15.086, (chi2, counts)
