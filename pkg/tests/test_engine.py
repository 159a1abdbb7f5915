from __future__ import annotations

import numpy as np
import pytest

from conftest import THREE_WAY_SQL
from hybridcloud.bucketize import build_registry
from hybridcloud.crypto import ETuple, SecretKey
from hybridcloud.engine import (
    EngineConfig,
    audit_public_store,
    build_stores,
    execute,
    find_plaintext_leaks,
    ground_truth,
    join_indices,
    load_fragments,
    read_csv_columns,
    write_fragments,
)
from hybridcloud.errors import FragmentError, PlacementMismatchError
from hybridcloud.queryir import compile_query, parse
from hybridcloud.workload import write_tables

CACHE: dict = {}


def stores_for(cat, plain, key, override=None):
    return build_stores(cat, plain, key, build_registry(cat, key.ident_key, override=override), CACHE)


def run(q, cat, plain, key, override=None, **kw):
    st = stores_for(cat, plain, key, override)
    return execute(compile_query(q, cat, st.schemes), st, key, **kw)


def test_join_indices_matches_nested_loops():
    a = np.array([1, 2, 2, 3, 5])
    b = np.array([2, 5, 5, 7, 2])
    li, ri = join_indices(a, b)
    want = sorted((i, j) for i in range(len(a)) for j in range(len(b)) if a[i] == b[j])
    assert sorted(zip(li.tolist(), ri.tolist())) == want


def test_all_private_leaves_public_store_empty(tpch, plain, key):
    cat = tpch.with_placement(tpch.attribute_names)
    st = stores_for(cat, plain, key)
    assert st.public.tables == {}
    assert set(st.private.tables) == set(tpch.relation_names)


def test_fragments_share_tuple_ids(split_catalog, plain, key):
    cat = split_catalog.with_placement(["customer.c_mktsegment", "orders.o_orderdate"])
    st = stores_for(cat, plain, key)
    for rel in ("customer", "orders"):
        tid = f"{rel}.{cat.relation(rel).tuple_id}"
        a, b = st.public.tables[rel].columns[tid], st.private.tables[rel].columns[tid]
        assert np.array_equal(np.sort(a), np.sort(b))


def test_sensitive_public_columns_hold_only_etuples(tpch, plain, key):
    st = stores_for(tpch, plain, key)
    n = 0
    for rel, t in st.public.tables.items():
        for a in tpch.attributes_of(rel):
            if a.sensitive:
                assert a.qualname in t.encoded
                for f in t.encoded[a.qualname][:50]:
                    ETuple.decode(f)
                    n += 1
    assert n > 0


def test_public_store_audit(split_catalog, plain, key):
    cat = split_catalog.with_placement([a.qualname for a in split_catalog.attributes
                                       if a.relation not in ("orders", "nation")])
    assert audit_public_store(stores_for(cat, plain, key), key) == 1500 * 9


def test_three_way_query_equals_ground_truth(split_catalog, plain, key):
    q = parse(THREE_WAY_SQL, split_catalog)
    truth = ground_truth(q, plain)
    assert truth, "query should return rows at this scale"
    for policy in ("public", "auto"):
        st = stores_for(split_catalog, plain, key)
        rows, tr = execute(compile_query(q, split_catalog, st.schemes, join_policy=policy), st, key)
        assert sorted(rows) == sorted(truth)
        assert tr.decrypt_count > 0


def test_non_sensitive_query_decrypts_nothing(tpch, plain, key, workload):
    cat = tpch.with_sensitivity(())
    for q in workload[:5]:
        rows, tr = run(q, cat, plain, key)
        assert tr.decrypt_count == 0
        assert sorted(rows) == sorted(ground_truth(q, plain))


def test_single_partition_is_still_complete(tpch, plain, key, workload):
    for q in workload[:6]:
        rows, _ = run(q, tpch, plain, key, override=1)
        assert sorted(rows) == sorted(ground_truth(q, plain))


def test_empty_result(tpch, plain, key):
    q = parse("SELECT o_orderkey FROM orders WHERE o_orderdate < DATE '1970-01-01'", tpch)
    rows, tr = run(q, tpch, plain, key)
    assert rows == [] and tr.result_rows == 0


def test_concurrent_equals_sequential(split_catalog, plain, key):
    q = parse(THREE_WAY_SQL, split_catalog)
    a, ta = run(q, split_catalog, plain, key, concurrent=True)
    b, tb = run(q, split_catalog, plain, key, concurrent=False)
    assert sorted(a) == sorted(b)
    assert ta.sim_time == pytest.approx(tb.sim_time)


def test_trace_accounting(split_catalog, plain, key):
    q = parse(THREE_WAY_SQL, split_catalog)
    cfg = EngineConfig()
    _, tr = run(q, split_catalog, plain, key, config=cfg)
    assert tr.combine.bytes == pytest.approx(tr.transfer.bytes + _private_out(q, split_catalog, plain, key))
    assert tr.sim_time == pytest.approx(max(tr.public.sim_time + tr.transfer.sim_time, tr.private.sim_time)
                                        + tr.decrypt.sim_time + tr.combine.sim_time)
    assert tr.private.sim_time / tr.private.bytes == pytest.approx(cfg.private_rate)
    assert "combine" in tr.report()


def _private_out(q, cat, plain, key):
    """Bytes of the private intermediate results, measured directly."""
    from hybridcloud.engine import eval_plan

    st = stores_for(cat, plain, key)
    hp = compile_query(q, cat, st.schemes)
    return sum(eval_plan(sp.root, st.private.tables).select(sp.outputs).nbytes() for sp in hp.private)


def test_placement_mismatch_is_refused(tpch, plain, key, workload):
    st = stores_for(tpch, plain, key)
    other = tpch.with_placement(["customer.c_name"])
    with pytest.raises(PlacementMismatchError):
        execute(compile_query(workload[0], other, st.schemes), st, key)


def test_fragments_on_disk_round_trip_and_do_not_leak(tmp_path, tpch, plain, key, dataset, workload):
    write_tables(dataset.tables, tmp_path / "plaintext")
    cat = tpch.with_placement([a.qualname for a in tpch.attributes_of("customer")])
    st = load_fragments(cat, tmp_path, key)
    assert (tmp_path / "public" / "lineitem.csv").exists()
    assert not (tmp_path / "public" / "customer.csv").exists()
    assert find_plaintext_leaks(tmp_path / "public", cat, plain) == []
    for q in workload[:10]:
        rows, _ = execute(compile_query(q, cat, st.schemes), st, key)
        assert sorted(rows) == sorted(ground_truth(q, plain))


def test_leak_scanner_finds_planted_plaintext(tmp_path, tpch, plain, key, dataset):
    cat = tpch.with_placement(())
    write_fragments(cat, plain, tmp_path, key, build_registry(cat, key.ident_key), CACHE)
    sens = next(a for a in cat.attributes_of("customer") if a.sensitive and a.datatype == "text")
    path = tmp_path / "public" / "customer.csv"
    raw = read_csv_columns(path)
    lines = path.read_text().splitlines()
    col = list(raw).index(sens.name)
    cells = lines[1].split(",")
    cells[col] = str(plain["customer"].columns[sens.qualname][0])
    lines[1] = ",".join(cells)
    path.write_text("\n".join(lines) + "\n")
    assert find_plaintext_leaks(tmp_path / "public", cat, plain)


def test_wrong_key_cannot_read_public_fragment(tpch, plain, key, split_catalog):
    from hybridcloud.errors import DecryptionError

    q = parse(THREE_WAY_SQL, split_catalog)
    st = stores_for(split_catalog, plain, key)
    with pytest.raises(DecryptionError):
        execute(compile_query(q, split_catalog, st.schemes), st, SecretKey(b"\x07" * 32))


def test_inconsistent_fragments_are_rejected(tmp_path, tpch, key, dataset):
    write_tables(dataset.tables, tmp_path / "plaintext")
    cat = tpch.with_placement(["region.r_name"])
    load_fragments(cat, tmp_path, key)
    path = tmp_path / "private" / "region.csv"
    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines[:-1]) + "\n")
    from hybridcloud.engine import open_stores

    with pytest.raises(FragmentError):
        open_stores(cat, tmp_path, build_registry(cat, key.ident_key))
