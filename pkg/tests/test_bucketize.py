from __future__ import annotations

from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hybridcloud.bucketize import (
    TEXT_PARTITIONS,
    BucketScheme,
    MappedCondition,
    MappedJoin,
    build_registry,
    build_scheme,
    compute_num_partitions,
    default_partition_count,
    join_pairs,
    map_condition,
    map_value,
    registry_from_dict,
    registry_to_dict,
)
from hybridcloud.catalog import AttributeMeta, ColumnStats
from hybridcloud.errors import DomainError, UnsupportedDatatypeError, UnsupportedPredicateError
from hybridcloud.queryir import AttrRef, Between, Comparison, JoinEq

KEY = b"k" * 32


def int_scheme(n=4, lo=0, hi=99):
    attr = AttributeMeta("a", "r", "integer", True)
    return build_scheme(attr, ColumnStats(hi - lo + 1, lo, hi, 4), n, KEY)


def text_scheme():
    return build_scheme(AttributeMeta("s", "r", "text", True), ColumnStats(5, "A", "Z", 8), 36, KEY)


def cmp(op, v, dt="integer", name="a"):
    return Comparison(AttrRef("r", name, dt), op, v)


def test_partition_count_for_integer_and_decimal_domains():
    assert compute_num_partitions(-2_147_483_646, 2_147_483_647) == 31
    assert compute_num_partitions(-9_999_999_999.99, 9_999_999_999.99) == 34
    assert default_partition_count("integer") == 31
    assert default_partition_count("decimal") == 34
    assert default_partition_count("text") == 36


def test_degenerate_domains():
    assert compute_num_partitions(0, 1) == 1
    assert compute_num_partitions(5, 5) == 1
    with pytest.raises(DomainError):
        compute_num_partitions(2, 1)
    with pytest.raises(UnsupportedDatatypeError):
        default_partition_count("blob")


def test_text_scheme_has_36_partitions():
    s = text_scheme()
    assert s.partition_count == 36
    # the overflow bucket for characters outside a-z0-9 adds one identifier
    assert len(s.ident_ids) == 37


def test_equal_width_integer_partitions_over_0_99():
    s = int_scheme()
    assert s.boundaries == (0, 25, 50, 75, 100)
    ids = [map_value(s, v) for v in range(100)]
    counts = Counter(ids)
    assert len(counts) == 4 and set(counts.values()) == {25}
    assert map_value(s, 26) == s.ident_ids[1]


def test_single_partition_maps_everything_to_one_id():
    s = int_scheme(n=1)
    assert {map_value(s, v) for v in range(100)} == {s.ident_ids[0]}


def test_out_of_domain_values_clamp():
    s = int_scheme()
    assert map_value(s, -10) == s.ident_ids[0]
    assert map_value(s, 10_000) == s.ident_ids[3]


def test_text_first_character_partitioning():
    s = text_scheme()
    assert map_value(s, "BUILDING") == s.ident_ids[1]
    assert map_value(s, "building") == s.ident_ids[1]
    assert map_value(s, "9lives") == s.ident_ids[35]
    assert map_value(s, "#x") == s.overflow_id
    assert map_value(s, "") == s.overflow_id


def test_identifiers_are_distinct_and_key_dependent():
    a, b = int_scheme(n=31, hi=10**6), text_scheme()
    assert len(set(a.ident_ids)) == 31 and len(set(b.ident_ids)) == 37
    other = build_scheme(AttributeMeta("a", "r", "integer", True), ColumnStats(100, 0, 99, 4), 4, b"x" * 32)
    assert set(other.ident_ids).isdisjoint(int_scheme().ident_ids)


def test_clamping_to_distinct_count():
    attr = AttributeMeta("a", "r", "integer", True)
    s = build_scheme(attr, ColumnStats(5, 0, 99, 4), 31, KEY)
    assert s.partition_count == 5


def test_equality_maps_to_single_identifier():
    s = int_scheme()
    m = map_condition({"r.a": s}, cmp("=", 30))
    assert isinstance(m, MappedCondition) and m.identifier_set == {s.ident_ids[1]}


def test_non_sensitive_predicate_is_unchanged():
    p = cmp("=", 30, name="b")
    assert map_condition({"r.a": int_scheme()}, p) is p


def test_greater_than_60_selects_top_two_partitions_by_brute_force():
    s = int_scheme()
    m = map_condition({"r.a": s}, cmp(">", 60))
    expected = {map_value(s, v) for v in range(100) if v > 60}
    assert m.identifier_set == expected == {s.ident_ids[2], s.ident_ids[3]}


def test_inverted_between_maps_to_empty_set():
    s = int_scheme()
    m = map_condition({"r.a": s}, Between(AttrRef("r", "a", "integer"), 70, 10))
    assert m.identifier_set == frozenset()


def test_join_pairs_cover_overlapping_partitions():
    left, right = int_scheme(n=4), int_scheme(n=2)
    pairs = join_pairs(left, right)
    for v in range(100):
        assert (map_value(left, v), map_value(right, v)) in pairs
    m = map_condition({"r.a": left, "t.a": right},
                      JoinEq(AttrRef("r", "a", "integer"), AttrRef("t", "a", "integer")))
    assert isinstance(m, MappedJoin) and m.pairs == pairs


def test_mixed_join_is_unmappable():
    with pytest.raises(UnsupportedPredicateError):
        map_condition({"r.a": int_scheme()},
                      JoinEq(AttrRef("r", "a", "integer"), AttrRef("t", "a", "integer")))


def test_text_vs_integer_join_is_unmappable():
    with pytest.raises(UnsupportedPredicateError):
        join_pairs(int_scheme(), text_scheme())


def test_map_array_matches_map_value():
    s = int_scheme(n=7, lo=-50, hi=50)
    vals = np.arange(-60, 61)
    assert list(s.map_array(vals)) == [map_value(s, int(v)) for v in vals]


def test_registry_round_trip_and_override(tpch):
    reg = build_registry(tpch, KEY)
    assert set(reg) == {a.qualname for a in tpch.attributes if a.sensitive}
    back = registry_from_dict(registry_to_dict(reg))
    assert back == reg
    over = build_registry(tpch, KEY, override=4)
    for name, s in over.items():
        assert s.partition_count == (36 if s.is_text else min(4, tpch.column_stats(name).distinct_count))


def test_scheme_rejects_identifier_collisions():
    with pytest.raises(ValueError):
        BucketScheme("r.a", "integer", 2, (0, 1, 2), KEY, (7, 7))


OPS = st.sampled_from(["=", "<", "<=", ">", ">="])


@settings(max_examples=200, deadline=None)
@given(n=st.integers(1, 40), lo=st.integers(-1000, 1000), span=st.integers(0, 500),
       op=OPS, value=st.integers(-1600, 1600), data=st.lists(st.integers(-1600, 1600), max_size=60))
def test_mapped_selection_is_a_superset_for_integers(n, lo, span, op, value, data):
    s = int_scheme(n=n, lo=lo, hi=lo + span)
    m = map_condition({"r.a": s}, cmp(op, value))
    truth = {"=": value.__eq__, "<": value.__gt__, "<=": value.__ge__,
             ">": value.__lt__, ">=": value.__le__}[op]
    for v in data:
        if truth(v):
            assert map_value(s, v) in m.identifier_set


@settings(max_examples=200, deadline=None)
@given(n=st.integers(1, 34), low=st.floats(-100, 100), high=st.floats(-100, 100),
       data=st.lists(st.floats(-150, 150), max_size=60))
def test_mapped_between_is_a_superset_for_decimals(n, low, high, data):
    attr = AttributeMeta("a", "r", "decimal", True)
    s = build_scheme(attr, ColumnStats(10_000, -100.0, 100.0, 8), n, KEY)
    m = map_condition({"r.a": s}, Between(AttrRef("r", "a", "decimal"), low, high))
    for v in data:
        if low <= v <= high:
            assert map_value(s, v) in m.identifier_set


@settings(max_examples=200, deadline=None)
@given(op=OPS, value=st.text(max_size=6), data=st.lists(st.text(max_size=6), max_size=40))
def test_mapped_text_comparisons_are_supersets(op, value, data):
    s = text_scheme()
    m = map_condition({"r.s": s}, cmp(op, value, "text", "s"))
    truth = {"=": value.__eq__, "<": value.__gt__, "<=": value.__ge__,
             ">": value.__lt__, ">=": value.__le__}[op]
    for v in data:
        if truth(v):
            assert map_value(s, v) in m.identifier_set


@settings(max_examples=100, deadline=None)
@given(k=st.integers(0, 4), data=st.lists(st.integers(0, 1000), min_size=1, max_size=50))
def test_doubling_partitions_refines(k, data):
    """With 2n partitions every bucket sits inside one bucket of the n-partition scheme."""
    coarse, fine = int_scheme(n=2 ** k, hi=1000), int_scheme(n=2 ** (k + 1), hi=1000)
    parent = {}
    for v in data:
        f, c = map_value(fine, v), map_value(coarse, v)
        assert parent.setdefault(f, c) == c
