"""How partition granularity changes the cost of one Q10-shaped query.

Finer buckets let the public side discard more tuples before shipping them,
so the all-public time falls as P grows; the all-private time does not
depend on P at all.

    python demos/partition_sweep.py
"""
from __future__ import annotations

import logging

from hybridcloud import GeneratorConfig, SecretKey
from hybridcloud.cli import sweep
from hybridcloud.engine import tables_from_columns
from hybridcloud.workload import generate_tables, generate_workload, tpch_catalog

logging.getLogger("hybridcloud.bucketize").setLevel(logging.ERROR)


def main() -> None:
    data = generate_tables(GeneratorConfig(0.001, 0))
    catalog = tpch_catalog(data.stats, sensitivity=0.5, seed=0)
    plain = tables_from_columns(catalog, data.tables)
    workload = generate_workload(GeneratorConfig(0.001, 0, 1, templates=("Q10",)), catalog)
    print(workload[0].text, f"(freq {workload[0].freq})\n")
    result = sweep("P", (1, 2, 4, 8, 16, 32), ("all-public", "all-private", "dp"),
                   catalog, workload, plain, SecretKey.generate())
    print(result.table())


if __name__ == "__main__":
    main()
