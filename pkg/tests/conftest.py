from __future__ import annotations

import logging

import pytest

from hybridcloud.catalog import AttributeMeta, Catalog, ColumnStats, RelationSchema, RelationStats
from hybridcloud.crypto import SecretKey
from hybridcloud.engine import tables_from_columns
from hybridcloud.workload import GeneratorConfig, generate_tables, generate_workload, tpch_catalog

THREE_WAY_SQL = (
    "SELECT l_orderkey, l_extendedprice * (1 - l_discount), o_orderdate, o_shippriority "
    "FROM customer, orders, lineitem "
    "WHERE c_mktsegment = 'BUILDING' AND c_custkey = o_custkey AND l_orderkey = o_orderkey "
    "AND o_orderdate < DATE '1995-03-15' AND l_shipdate > DATE '1995-03-15'"
)


# partition clamping on tiny desk-scale domains is expected; keep the output readable
logging.getLogger("hybridcloud.bucketize").setLevel(logging.ERROR)


@pytest.fixture(scope="session")
def dataset():
    return generate_tables(GeneratorConfig(scale_factor=0.001, rng_seed=0))


@pytest.fixture(scope="session")
def tpch(dataset):
    """TPC-H-lite catalog, everything public, half the attributes sensitive."""
    return tpch_catalog(dataset.stats, sensitivity=0.5, seed=0)


@pytest.fixture(scope="session")
def plain(tpch, dataset):
    return tables_from_columns(tpch, dataset.tables)


@pytest.fixture(scope="session")
def key():
    return SecretKey(bytes(range(32)))


@pytest.fixture(scope="session")
def workload(tpch):
    return generate_workload(GeneratorConfig(scale_factor=0.001, rng_seed=0, workload_size=100), tpch)


@pytest.fixture(scope="session")
def split_catalog(dataset):
    """lineitem and orders sensitive on the public side, customer private."""
    cat = tpch_catalog(dataset.stats, sensitive=(), capacity_fraction=1.0)
    sensitive = [a.qualname for a in cat.attributes if a.relation in ("lineitem", "orders")]
    private = [a.qualname for a in cat.attributes if a.relation == "customer"]
    return cat.with_sensitivity(sensitive).with_placement(private)


def tiny_catalog(capacity: int = 10, sensitive=("r.a",), private=(), rows: int = 100) -> Catalog:
    """One relation r(a integer in [0, 99], b decimal, c text)."""
    attrs = tuple(
        AttributeMeta(n, "r", dt, f"r.{n}" in sensitive, size,
                      "private" if f"r.{n}" in private else "public")
        for n, dt, size in (("a", "integer", 4), ("b", "decimal", 3), ("c", "text", 2))
    )
    stats = {"r": RelationStats("r", rows, {
        "a": ColumnStats(min(rows, 100), 0, 99, 4),
        "b": ColumnStats(min(rows, 50), 0.0, 10.0, 8),
        "c": ColumnStats(min(rows, 20), "aa", "zz", 6),
    })}
    return Catalog((RelationSchema("r", ("a", "b", "c")),), attrs, stats, capacity=capacity, size_unit=1)


@pytest.fixture
def tiny():
    return tiny_catalog
