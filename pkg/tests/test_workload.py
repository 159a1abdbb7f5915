from __future__ import annotations

import filecmp

import numpy as np
import pytest

from hybridcloud.catalog import date_to_days
from hybridcloud.costmodel import qpc
from hybridcloud.errors import ValidationError
from hybridcloud.queryir import Between, Comparison
from hybridcloud.workload import (
    SEGMENTS,
    GeneratorConfig,
    compute_stats,
    generate_data,
    generate_tables,
    generate_workload,
    random_instance,
    row_counts,
)


def test_lineitem_to_orders_ratio(dataset):
    assert dataset.rows("lineitem") == 6000 and dataset.rows("orders") == 1500
    n = row_counts(0.002)
    assert n["lineitem"] / n["orders"] == 4


def test_segments_come_from_the_listed_five(dataset):
    assert set(dataset.tables["customer"]["c_mktsegment"]) <= set(SEGMENTS)


def test_value_domains(dataset):
    li = dataset.tables["lineitem"]
    lo, hi = date_to_days("1992-01-01"), date_to_days("1998-12-31")
    for col in ("l_shipdate", "l_commitdate", "l_receiptdate"):
        assert lo <= li[col].min() and li[col].max() <= hi
    assert 0.0 <= li["l_discount"].min() and li["l_discount"].max() <= 0.10
    assert 1 <= li["l_quantity"].min() and li["l_quantity"].max() <= 50
    assert set(li["l_returnflag"]) <= {"R", "A", "N"}


def test_foreign_keys_resolve(dataset):
    t = dataset.tables
    assert np.isin(t["orders"]["o_custkey"], t["customer"]["c_custkey"]).all()
    assert np.isin(t["lineitem"]["l_orderkey"], t["orders"]["o_orderkey"]).all()
    assert np.isin(t["customer"]["c_nationkey"], t["nation"]["n_nationkey"]).all()


def test_stats_are_exact(dataset):
    assert compute_stats(dataset.tables) == dataset.stats
    s = dataset.stats["orders"].columns["o_orderkey"]
    assert s.distinct_count == 1500


def test_same_seed_gives_byte_identical_directories(tmp_path):
    cfg = GeneratorConfig(0.001, 7)
    a, _ = generate_data(cfg, tmp_path / "a")
    b, _ = generate_data(cfg, tmp_path / "b")
    files = sorted(p.name for p in a.glob("*.csv"))
    assert len(files) == 8
    match, mismatch, errors = filecmp.cmpfiles(a, b, files, shallow=False)
    assert mismatch == [] and errors == []


def test_different_seeds_differ():
    a = generate_tables(GeneratorConfig(0.001, 1)).tables["orders"]["o_totalprice"]
    b = generate_tables(GeneratorConfig(0.001, 2)).tables["orders"]["o_totalprice"]
    assert not np.array_equal(a, b)


def test_desk_scale_guard():
    with pytest.raises(ValidationError):
        GeneratorConfig(scale_factor=1.0)
    with pytest.raises(ValidationError):
        GeneratorConfig(scale_factor=0)
    GeneratorConfig(scale_factor=1.0, allow_large=True)


def test_workload_shape(tpch, workload):
    assert len(workload) == 100
    lo, hi = date_to_days("1992-01-01"), date_to_days("1998-12-31")
    for q in workload:
        assert 1 <= q.freq <= 1000
        for p in q.selections:
            if p.attr.datatype == "date":
                vals = [p.value] if isinstance(p, Comparison) else [p.low, p.high]
                assert all(lo <= v <= hi for v in vals), q.text
            if p.attr.name == "l_discount" and isinstance(p, Between):
                assert 0.0 <= p.low <= p.high <= 0.10
    assert {len(q.sources) for q in workload} == {1, 3, 4}


def test_frequency_mean_over_1000_draws(tpch):
    wl = generate_workload(GeneratorConfig(0.001, 3, 1000), tpch)
    mean = sum(q.freq for q in wl) / len(wl)
    assert 450 <= mean <= 550


def test_empty_workload(tpch):
    wl = generate_workload(GeneratorConfig(0.001, 0, 0), tpch)
    assert wl == [] and qpc(wl, tpch).total == 0


def test_workload_is_deterministic(tpch):
    a = generate_workload(GeneratorConfig(0.001, 5, 20), tpch)
    b = generate_workload(GeneratorConfig(0.001, 5, 20), tpch)
    assert [(q.text, q.freq) for q in a] == [(q.text, q.freq) for q in b]


def test_every_generated_query_parses_and_runs(plain, workload):
    from hybridcloud.engine import ground_truth

    for q in workload[:40]:
        ground_truth(q, plain)


def test_random_instance_shape():
    cat, wl = random_instance(10, 4)
    assert len(cat.attribute_names) == 10
    assert set(cat.relation_names) == {"r0", "r1"}
    assert 0 < cat.capacity < cat.total_size
    assert wl and all(1 <= q.freq <= 1000 for q in wl)
    cat3, _ = random_instance(3, 0)
    assert cat3.relation_names == ("r0",)
    with pytest.raises(ValueError):
        random_instance(1)
