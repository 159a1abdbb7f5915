from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import tiny_catalog
from hybridcloud.bucketize import build_registry
from hybridcloud.costmodel import (
    LIMIT_FRACTIONS,
    DEFAULT_WEIGHTS,
    CostWeights,
    WorkloadCostModel,
    calibrate,
    calibrate_report,
    estimate_cardinality,
    hybrid_cost,
    qpc,
    selection_selectivity,
)
from hybridcloud.engine import EngineConfig, EngineHarness
from hybridcloud.errors import ValidationError
from hybridcloud.queryir import AttrRef, Between, Comparison, Select, build_plan, compile_query, parse

A = AttrRef("r", "a", "integer")


def test_default_weights():
    w = CostWeights()
    assert (w.w1, w.w2, w.w3, w.w4) == (0.000545146, 0.000072686, 0.000001488, 0.0000041)
    assert w == DEFAULT_WEIGHTS


def test_weights_validate_and_round_trip(tmp_path):
    with pytest.raises(ValidationError):
        CostWeights(w1=0)
    with pytest.raises(ValidationError):
        CostWeights(w2=math.nan)
    w = CostWeights(1e-3, 2e-4, 3e-6, 4e-6)
    w.save(tmp_path / "w.yaml")
    assert CostWeights.load(tmp_path / "w.yaml") == w
    (tmp_path / "bad.yaml").write_text("w1: 1\n")
    with pytest.raises(ValidationError):
        CostWeights.load(tmp_path / "bad.yaml")


def test_private_only_query_of_1000_bytes():
    cat = tiny_catalog(rows=125).with_placement(["r.a", "r.b", "r.c"])
    q = parse("SELECT b FROM r", cat)
    c = hybrid_cost(compile_query(q, cat, {}), cat, {}, DEFAULT_WEIGHTS)
    assert c.private_bytes == 1000
    assert c.c == pytest.approx(0.000545146 * 1000 + 0.0000041 * 1000, abs=1e-12)
    assert round(c.c, 6) == 0.549246


def test_empty_workload_costs_nothing(tpch):
    assert qpc([], tpch).total == 0


def test_private_scan_costs_more_per_row_than_public_scan():
    cat = tiny_catalog(sensitive=())
    q = parse("SELECT a, b, c FROM r", cat)
    pub = qpc([q], cat, ())
    pri = qpc([q], cat, ("r.a", "r.b", "r.c"))
    rows = 100
    assert pri.queries[0].private_cost / rows > pub.queries[0].public_cost / rows
    assert DEFAULT_WEIGHTS.w1 > DEFAULT_WEIGHTS.w2


# -- cardinality ---------------------------------------------------------------

def test_key_equality_estimates_one_row():
    cat = tiny_catalog(rows=100)
    node = Select(build_plan(parse("SELECT a FROM r", cat)).child, (Comparison(A, "=", 7),))
    assert estimate_cardinality(node, cat) == pytest.approx(1.0)


def test_full_domain_range_keeps_every_row():
    cat = tiny_catalog(rows=100)
    assert selection_selectivity(Between(A, 0, 99), cat) == 1.0
    assert selection_selectivity(Comparison(A, ">=", -5), cat) == 1.0
    assert selection_selectivity(Comparison(A, "<", 0), cat) == 0.0
    assert selection_selectivity(Comparison(A, "<", 50), cat) == pytest.approx(0.5)


def test_mapped_equality_with_four_partitions_over_100_uniform_rows():
    cat = tiny_catalog(rows=100)
    schemes = build_registry(cat, b"k" * 32, override=4)
    q = parse("SELECT a FROM r WHERE a = 30", cat)
    hp = compile_query(q, cat, schemes)
    est = estimate_cardinality(hp.public[0].root, cat, schemes)
    values = np.arange(100)
    truth = int(np.sum(schemes["r.a"].map_array(values) == schemes["r.a"].map_array(np.array([30]))[0]))
    assert truth == 25
    assert abs(est - truth) <= 0.2 * truth


def test_estimates_compose_bottom_up(tpch):
    q = parse("SELECT o_orderkey FROM orders, customer WHERE o_custkey = c_custkey "
              "AND c_mktsegment = 'BUILDING'", tpch)
    plan = build_plan(q)
    est = estimate_cardinality(plan, tpch)
    o, c = tpch.stats["orders"], tpch.stats["customer"]
    d = max(o.columns["o_custkey"].distinct_count, c.columns["c_custkey"].distinct_count)
    seg = c.columns["c_mktsegment"].distinct_count
    assert est == pytest.approx(o.row_count * c.row_count / d / seg)


# -- algebra -------------------------------------------------------------------

def test_breakdown_total_is_the_sum_of_query_terms(tpch, workload):
    b = qpc(workload[:30], tpch)
    assert b.total == pytest.approx(sum(q.freq * q.c for q in b.queries))
    for qc in b.queries:
        assert qc.combine_cost == pytest.approx(DEFAULT_WEIGHTS.w4 * (qc.public_bytes + qc.private_bytes))


@settings(max_examples=60, deadline=None)
@given(qi=st.integers(0, 99), k=st.integers(1, 1000), mask=st.lists(st.booleans(), min_size=61, max_size=61))
def test_frequency_linearity_is_exact(tpch, workload, qi, k, mask):
    private = frozenset(a for a, m in zip(tpch.attribute_names, mask) if m)
    q = workload[qi]
    one = qpc([q.with_freq(1)], tpch, private).total
    assert qpc([q.with_freq(k)], tpch, private).total == k * one


@settings(max_examples=60, deadline=None)
@given(qi=st.integers(0, 99), mask=st.lists(st.booleans(), min_size=61, max_size=61))
def test_max_mode_never_exceeds_sum_mode(tpch, workload, qi, mask):
    private = frozenset(a for a, m in zip(tpch.attribute_names, mask) if m)
    s = qpc([workload[qi]], tpch, private, mode="sum").queries[0]
    m = qpc([workload[qi]], tpch, private, mode="max").queries[0]
    assert m.c <= s.c
    assert (m.c == s.c) == (s.public_cost == 0 or s.private_cost == 0)


def test_model_cache_matches_fresh_costing(tpch, workload):
    m = WorkloadCostModel(workload[:20], tpch)
    priv = frozenset(a.qualname for a in tpch.attributes_of("customer"))
    first = m.cost(priv)
    assert m.cost(priv) == first
    assert qpc(workload[:20], tpch, priv).total == first


def test_unknown_mode_rejected(tpch):
    with pytest.raises(ValueError):
        qpc([], tpch, mode="avg")


# -- calibration ---------------------------------------------------------------

class FakeHarness:
    n_queries = 4

    def __init__(self, pr=2.0, pu=1.0, fail=False):
        self.pr, self.pu, self.fail = pr, pu, fail

    def process(self, cloud, i):
        b = 100.0 * (i + 1)
        return (self.pr if cloud == "private" else self.pu) * b, b

    def transfer(self, f):
        return 3.0 * f * 10, f * 10

    def combine(self, f):
        if self.fail:
            raise RuntimeError("combine run failed")
        return 4.0 * f * 10, f * 10


def test_calibration_sums_per_query_rates_and_averages_limit_runs():
    w = calibrate(FakeHarness())
    assert w.w1 == pytest.approx(4 * 2.0) and w.w2 == pytest.approx(4 * 1.0)
    assert w.w3 == pytest.approx(3.0) and w.w4 == pytest.approx(4.0)
    assert len(LIMIT_FRACTIONS) == 10 and LIMIT_FRACTIONS[0] == 0.1 and LIMIT_FRACTIONS[-1] == 1.0


def test_failed_calibration_keeps_defaults():
    r = calibrate_report(FakeHarness(fail=True))
    assert not r.ok and r.weights == DEFAULT_WEIGHTS and "combine" in r.error


def test_identical_engines_calibrate_to_equal_w1_w2(tpch, plain, key):
    cfg = EngineConfig(public_rate=1e-6, private_rate=1e-6)
    w = calibrate(EngineHarness(tpch, plain, key, cfg))
    assert w.w1 / w.w2 == pytest.approx(1.0, rel=0.10)
