"""TPC-H-shaped desk-scale data and randomized query workloads.

The generator is a lightweight stand-in for ``dbgen``: same 8 relations and
61 columns, the same row-count ratios and value rules where they matter for
the workload (sparse order keys, date chains, flags derived from dates),
but simpler text. It is deterministic for a given seed and is not audited
against the official benchmark.
"""

from __future__ import annotations

import csv
import datetime as _dt
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .catalog import (
    DEFAULT_TUPLE_ID,
    AttributeMeta,
    Catalog,
    ColumnStats,
    RelationSchema,
    RelationStats,
    date_to_days,
    format_value,
)
from .errors import ValidationError
from .queryir import Query, parse

MAX_DESK_SCALE = 0.1
DATE_LO = date_to_days("1992-01-01")
DATE_HI = date_to_days("1998-12-31")
CURRENT_DATE = date_to_days("1995-06-17")

SEGMENTS = ("AUTOMOBILE", "BUILDING", "FURNITURE", "MACHINERY", "HOUSEHOLD")
RETURN_FLAGS = ("R", "A", "N")
PRIORITIES = ("1-URGENT", "2-HIGH", "3-MEDIUM", "4-NOT SPECIFIED", "5-LOW")
SHIP_INSTRUCT = ("DELIVER IN PERSON", "COLLECT COD", "NONE", "TAKE BACK RETURN")
SHIP_MODES = ("REG AIR", "AIR", "RAIL", "SHIP", "TRUCK", "MAIL", "FOB")
CONTAINERS_1 = ("SM", "LG", "MED", "JUMBO", "WRAP")
CONTAINERS_2 = ("CASE", "BOX", "BAG", "JAR", "PKG", "PACK", "CAN", "DRUM")
TYPES_1 = ("STANDARD", "SMALL", "MEDIUM", "LARGE", "ECONOMY", "PROMO")
TYPES_2 = ("ANODIZED", "BURNISHED", "PLATED", "POLISHED", "BRUSHED")
TYPES_3 = ("TIN", "NICKEL", "BRASS", "STEEL", "COPPER")
COLORS = ("almond", "antique", "aquamarine", "azure", "beige", "bisque", "black", "blanched",
          "blue", "blush", "brown", "burlywood", "chartreuse", "chiffon", "chocolate", "coral",
          "cornflower", "cream", "cyan", "dark", "deep", "dim", "dodger", "drab", "firebrick",
          "forest", "frosted", "gainsboro", "ghost", "goldenrod", "green", "grey", "honeydew",
          "hot", "indian", "ivory", "khaki", "lace", "lavender", "lawn", "lemon", "light", "lime",
          "linen", "magenta", "maroon", "medium", "metallic", "midnight", "mint", "misty")
WORDS = ("furiously", "quickly", "carefully", "blithely", "slyly", "final", "regular", "ironic",
         "express", "special", "pending", "bold", "even", "silent", "unusual", "packages",
         "deposits", "requests", "accounts", "instructions", "theodolites", "pinto", "beans",
         "foxes", "ideas", "dependencies", "platelets", "asymptotes", "courts", "dolphins",
         "sleep", "wake", "haggle", "nag", "use", "boost", "affix", "detect", "integrate", "cajole")
NATIONS = (("ALGERIA", 0), ("ARGENTINA", 1), ("BRAZIL", 1), ("CANADA", 1), ("EGYPT", 4),
           ("ETHIOPIA", 0), ("FRANCE", 3), ("GERMANY", 3), ("INDIA", 2), ("INDONESIA", 2),
           ("IRAN", 4), ("IRAQ", 4), ("JAPAN", 2), ("JORDAN", 4), ("KENYA", 0), ("MOROCCO", 0),
           ("MOZAMBIQUE", 0), ("PERU", 1), ("CHINA", 2), ("ROMANIA", 3), ("SAUDI ARABIA", 4),
           ("VIETNAM", 2), ("RUSSIA", 3), ("UNITED KINGDOM", 3), ("UNITED STATES", 1))
REGIONS = ("AFRICA", "AMERICA", "ASIA", "EUROPE", "MIDDLE EAST")

# relation -> ((column, datatype), ...) in TPC-H column order
SCHEMA: dict[str, tuple[tuple[str, str], ...]] = {
    "part": (("p_partkey", "integer"), ("p_name", "text"), ("p_mfgr", "text"),
             ("p_brand", "text"), ("p_type", "text"), ("p_size", "integer"),
             ("p_container", "text"), ("p_retailprice", "decimal"), ("p_comment", "text")),
    "supplier": (("s_suppkey", "integer"), ("s_name", "text"), ("s_address", "text"),
                 ("s_nationkey", "integer"), ("s_phone", "text"), ("s_acctbal", "decimal"),
                 ("s_comment", "text")),
    "partsupp": (("ps_partkey", "integer"), ("ps_suppkey", "integer"), ("ps_availqty", "integer"),
                 ("ps_supplycost", "decimal"), ("ps_comment", "text")),
    "customer": (("c_custkey", "integer"), ("c_name", "text"), ("c_address", "text"),
                 ("c_nationkey", "integer"), ("c_phone", "text"), ("c_acctbal", "decimal"),
                 ("c_mktsegment", "text"), ("c_comment", "text")),
    "orders": (("o_orderkey", "integer"), ("o_custkey", "integer"), ("o_orderstatus", "text"),
               ("o_totalprice", "decimal"), ("o_orderdate", "date"), ("o_orderpriority", "text"),
               ("o_clerk", "text"), ("o_shippriority", "integer"), ("o_comment", "text")),
    "lineitem": (("l_orderkey", "integer"), ("l_partkey", "integer"), ("l_suppkey", "integer"),
                 ("l_linenumber", "integer"), ("l_quantity", "integer"),
                 ("l_extendedprice", "decimal"), ("l_discount", "decimal"), ("l_tax", "decimal"),
                 ("l_returnflag", "text"), ("l_linestatus", "text"), ("l_shipdate", "date"),
                 ("l_commitdate", "date"), ("l_receiptdate", "date"), ("l_shipinstruct", "text"),
                 ("l_shipmode", "text"), ("l_comment", "text")),
    "nation": (("n_nationkey", "integer"), ("n_name", "text"), ("n_regionkey", "integer"),
               ("n_comment", "text")),
    "region": (("r_regionkey", "integer"), ("r_name", "text"), ("r_comment", "text")),
}

BASE_ROWS = {"part": 200_000, "supplier": 10_000, "customer": 150_000, "orders": 1_500_000}
INTEGER_WIDTH = 4
DECIMAL_WIDTH = 8
DATE_WIDTH = 4


@dataclass(frozen=True)
class GeneratorConfig:
    scale_factor: float = 0.001
    rng_seed: int = 0
    workload_size: int = 100
    templates: tuple[str, ...] = ("Q1", "Q3", "Q6", "Q10")
    allow_large: bool = False

    def __post_init__(self):
        if not self.scale_factor > 0:
            raise ValidationError("scale_factor must be positive")
        if self.scale_factor > MAX_DESK_SCALE and not self.allow_large:
            raise ValidationError(f"scale_factor {self.scale_factor} exceeds the desk-scale guard "
                                  f"({MAX_DESK_SCALE}); pass allow_large=True to override")
        if self.workload_size < 0:
            raise ValidationError("workload_size must be non-negative")
        unknown = set(self.templates) - set(TEMPLATES)
        if unknown:
            raise ValidationError(f"unknown templates {sorted(unknown)}")


Table = dict  # column name -> numpy array


@dataclass
class Dataset:
    tables: dict[str, Table]
    stats: dict[str, RelationStats] = field(default_factory=dict)

    def rows(self, relation: str) -> int:
        return len(next(iter(self.tables[relation].values())))


def row_counts(scale_factor: float) -> dict[str, int]:
    n = {k: max(1, round(v * scale_factor)) for k, v in BASE_ROWS.items()}
    n["partsupp"] = 4 * n["part"]
    n["lineitem"] = 4 * n["orders"]
    n["nation"] = len(NATIONS)
    n["region"] = len(REGIONS)
    return n


def _pick(rng, choices, n) -> np.ndarray:
    return np.asarray(choices, dtype=object)[rng.integers(len(choices), size=n)]


def _words(rng, n: int, lo: int = 2, hi: int = 6) -> np.ndarray:
    counts = rng.integers(lo, hi + 1, size=n)
    idx = rng.integers(len(WORDS), size=int(counts.sum()))
    out = np.empty(n, dtype=object)
    pos = 0
    for i, c in enumerate(counts):
        out[i] = " ".join(WORDS[j] for j in idx[pos:pos + c])
        pos += c
    return out


def _alnum(rng, n: int, length: int = 12) -> np.ndarray:
    alphabet = np.array(list("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789"))
    chars = alphabet[rng.integers(len(alphabet), size=(n, length))]
    return np.array(["".join(row) for row in chars], dtype=object)


def _phones(rng, nationkeys: np.ndarray) -> np.ndarray:
    a = rng.integers(100, 1000, size=len(nationkeys))
    b = rng.integers(100, 1000, size=len(nationkeys))
    c = rng.integers(1000, 10000, size=len(nationkeys))
    return np.array([f"{k + 10}-{x}-{y}-{z}" for k, x, y, z in zip(nationkeys, a, b, c)], dtype=object)


def _names(prefix: str, keys: np.ndarray) -> np.ndarray:
    return np.array([f"{prefix}#{k:09d}" for k in keys], dtype=object)


def _money(rng, lo: float, hi: float, n: int) -> np.ndarray:
    cents = rng.integers(round(lo * 100), round(hi * 100) + 1, size=n)
    return cents / 100.0


def _line_counts(rng, n_orders: int) -> np.ndarray:
    """Lines per order in 1..7, rebalanced so the total is exactly 4 per order."""
    counts = rng.integers(1, 8, size=n_orders)
    diff = 4 * n_orders - int(counts.sum())
    while diff != 0:
        if diff > 0:
            room = np.flatnonzero(counts < 7)
        else:
            room = np.flatnonzero(counts > 1)
        k = min(abs(diff), len(room))
        pick = rng.choice(room, size=k, replace=False)
        counts[pick] += 1 if diff > 0 else -1
        diff += -k if diff > 0 else k
    return counts


def _supplier_for(partkey: np.ndarray, i: np.ndarray, n_supp: int) -> np.ndarray:
    return (partkey + i * (n_supp // 4 + (partkey - 1) // n_supp)) % n_supp + 1


def generate_tables(config: GeneratorConfig) -> Dataset:
    rng = np.random.default_rng(config.rng_seed)
    n = row_counts(config.scale_factor)
    t: dict[str, Table] = {}

    t["region"] = {
        "r_regionkey": np.arange(len(REGIONS), dtype=np.int64),
        "r_name": np.array(REGIONS, dtype=object),
        "r_comment": _words(rng, len(REGIONS)),
    }
    t["nation"] = {
        "n_nationkey": np.arange(len(NATIONS), dtype=np.int64),
        "n_name": np.array([x for x, _ in NATIONS], dtype=object),
        "n_regionkey": np.array([r for _, r in NATIONS], dtype=np.int64),
        "n_comment": _words(rng, len(NATIONS)),
    }

    pk = np.arange(1, n["part"] + 1, dtype=np.int64)
    retail = (90000 + (pk // 10) % 20001 + 100 * (pk % 1000)) / 100.0
    name_idx = rng.integers(len(COLORS), size=(n["part"], 5))
    mfgr = rng.integers(1, 6, size=n["part"])
    t["part"] = {
        "p_partkey": pk,
        "p_name": np.array([" ".join(COLORS[j] for j in row) for row in name_idx], dtype=object),
        "p_mfgr": np.array([f"Manufacturer#{m}" for m in mfgr], dtype=object),
        "p_brand": np.array([f"Brand#{m}{b}" for m, b in zip(mfgr, rng.integers(1, 6, size=n["part"]))],
                            dtype=object),
        "p_type": np.array([" ".join(x) for x in zip(_pick(rng, TYPES_1, n["part"]),
                                                     _pick(rng, TYPES_2, n["part"]),
                                                     _pick(rng, TYPES_3, n["part"]))], dtype=object),
        "p_size": rng.integers(1, 51, size=n["part"]).astype(np.int64),
        "p_container": np.array([" ".join(x) for x in zip(_pick(rng, CONTAINERS_1, n["part"]),
                                                          _pick(rng, CONTAINERS_2, n["part"]))],
                                dtype=object),
        "p_retailprice": retail,
        "p_comment": _words(rng, n["part"], 1, 4),
    }

    sk = np.arange(1, n["supplier"] + 1, dtype=np.int64)
    s_nation = rng.integers(0, len(NATIONS), size=n["supplier"]).astype(np.int64)
    t["supplier"] = {
        "s_suppkey": sk,
        "s_name": _names("Supplier", sk),
        "s_address": _alnum(rng, n["supplier"], 15),
        "s_nationkey": s_nation,
        "s_phone": _phones(rng, s_nation),
        "s_acctbal": _money(rng, -999.99, 9999.99, n["supplier"]),
        "s_comment": _words(rng, n["supplier"], 3, 8),
    }

    ps_part = np.repeat(pk, 4)
    ps_i = np.tile(np.arange(4, dtype=np.int64), n["part"])
    t["partsupp"] = {
        "ps_partkey": ps_part,
        "ps_suppkey": _supplier_for(ps_part, ps_i, n["supplier"]),
        "ps_availqty": rng.integers(1, 10000, size=n["partsupp"]).astype(np.int64),
        "ps_supplycost": _money(rng, 1.0, 1000.0, n["partsupp"]),
        "ps_comment": _words(rng, n["partsupp"], 3, 8),
    }

    ck = np.arange(1, n["customer"] + 1, dtype=np.int64)
    c_nation = rng.integers(0, len(NATIONS), size=n["customer"]).astype(np.int64)
    t["customer"] = {
        "c_custkey": ck,
        "c_name": _names("Customer", ck),
        "c_address": _alnum(rng, n["customer"], 15),
        "c_nationkey": c_nation,
        "c_phone": _phones(rng, c_nation),
        "c_acctbal": _money(rng, -999.99, 9999.99, n["customer"]),
        "c_mktsegment": _pick(rng, SEGMENTS, n["customer"]),
        "c_comment": _words(rng, n["customer"], 3, 8),
    }

    n_ord = n["orders"]
    i = np.arange(n_ord, dtype=np.int64)
    ok = (i // 8) * 32 + (i % 8) + 1  # sparse keys, as in the benchmark
    eligible = ck[ck % 3 != 0] if len(ck) >= 3 else ck  # a third of customers place no orders
    o_cust = eligible[rng.integers(len(eligible), size=n_ord)]
    o_date = rng.integers(DATE_LO, DATE_HI - 151 + 1, size=n_ord).astype(np.int64)

    counts = _line_counts(rng, n_ord)
    n_li = int(counts.sum())
    l_order_idx = np.repeat(i, counts)
    starts = np.cumsum(counts) - counts
    l_line = np.arange(n_li, dtype=np.int64) - np.repeat(starts, counts) + 1
    l_part = rng.integers(1, n["part"] + 1, size=n_li).astype(np.int64)
    l_supp = _supplier_for(l_part, rng.integers(0, 4, size=n_li), n["supplier"]).astype(np.int64)
    l_qty = rng.integers(1, 51, size=n_li).astype(np.int64)
    l_price = np.round(l_qty * retail[l_part - 1], 2)
    l_disc = rng.integers(0, 11, size=n_li) / 100.0
    l_tax = rng.integers(0, 9, size=n_li) / 100.0
    l_ship = o_date[l_order_idx] + rng.integers(1, 122, size=n_li)
    l_commit = o_date[l_order_idx] + rng.integers(30, 91, size=n_li)
    l_receipt = l_ship + rng.integers(1, 31, size=n_li)
    ra = _pick(rng, ("R", "A"), n_li)
    l_flag = np.where(l_receipt <= CURRENT_DATE, ra, "N").astype(object)
    l_status = np.where(l_ship > CURRENT_DATE, "O", "F").astype(object)

    n_open = np.bincount(l_order_idx, weights=(l_status == "O"), minlength=n_ord)
    o_status = np.where(n_open == counts, "O", np.where(n_open == 0, "F", "P")).astype(object)
    charge = l_price * (1 + l_tax) * (1 - l_disc)
    o_total = np.round(np.bincount(l_order_idx, weights=charge, minlength=n_ord), 2)

    t["orders"] = {
        "o_orderkey": ok,
        "o_custkey": o_cust.astype(np.int64),
        "o_orderstatus": o_status,
        "o_totalprice": o_total,
        "o_orderdate": o_date,
        "o_orderpriority": _pick(rng, PRIORITIES, n_ord),
        "o_clerk": np.array([f"Clerk#{c:09d}" for c in rng.integers(1, max(2, n_ord // 1000 + 1) + 1,
                                                                     size=n_ord)], dtype=object),
        "o_shippriority": np.zeros(n_ord, dtype=np.int64),
        "o_comment": _words(rng, n_ord, 2, 7),
    }
    t["lineitem"] = {
        "l_orderkey": ok[l_order_idx],
        "l_partkey": l_part,
        "l_suppkey": l_supp,
        "l_linenumber": l_line,
        "l_quantity": l_qty,
        "l_extendedprice": l_price,
        "l_discount": l_disc,
        "l_tax": l_tax,
        "l_returnflag": l_flag,
        "l_linestatus": l_status,
        "l_shipdate": l_ship.astype(np.int64),
        "l_commitdate": l_commit.astype(np.int64),
        "l_receiptdate": l_receipt.astype(np.int64),
        "l_shipinstruct": _pick(rng, SHIP_INSTRUCT, n_li),
        "l_shipmode": _pick(rng, SHIP_MODES, n_li),
        "l_comment": _words(rng, n_li, 1, 4),
    }
    ds = Dataset({r: t[r] for r in SCHEMA})
    ds.stats = compute_stats(ds.tables)
    return ds


def _byte_width(datatype: str, col: np.ndarray) -> int:
    if datatype == "integer":
        return INTEGER_WIDTH
    if datatype == "decimal":
        return DECIMAL_WIDTH
    if datatype == "date":
        return DATE_WIDTH
    if len(col) == 0:
        return 1
    return max(1, math.ceil(sum(len(str(v).encode()) for v in col) / len(col)))


def compute_stats(tables: Mapping[str, Table]) -> dict[str, RelationStats]:
    """Exact per-column statistics of in-memory tables."""
    out = {}
    for rel, cols in tables.items():
        types = dict(SCHEMA[rel]) if rel in SCHEMA else {}
        rows = len(next(iter(cols.values()))) if cols else 0
        cstats = {}
        for name, col in cols.items():
            dt = types.get(name) or _infer_type(col)
            if rows == 0:
                cstats[name] = ColumnStats(0, None, None, _byte_width(dt, col))
                continue
            uniq = np.unique(col)
            lo, hi = uniq[0], uniq[-1]
            if dt in ("integer", "date"):
                lo, hi = int(lo), int(hi)
            elif dt == "decimal":
                lo, hi = float(lo), float(hi)
            else:
                lo, hi = str(lo), str(hi)
            cstats[name] = ColumnStats(len(uniq), lo, hi, _byte_width(dt, col))
        out[rel] = RelationStats(rel, rows, cstats)
    return out


def _infer_type(col: np.ndarray) -> str:
    if col.dtype.kind in "iu":
        return "integer"
    if col.dtype.kind == "f":
        return "decimal"
    return "text"


def write_tables(tables: Mapping[str, Table], directory: str | Path,
                 types: Mapping[str, Mapping[str, str]] | None = None) -> None:
    """One CSV per relation with a header row; dates as ISO strings."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for rel, cols in tables.items():
        tmap = (types or {}).get(rel) or dict(SCHEMA.get(rel, ()))
        names = list(cols)
        with open(d / f"{rel}.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(names)
            fmt = [tmap.get(c, _infer_type(cols[c])) for c in names]
            for row in zip(*(cols[c] for c in names)):
                w.writerow([format_value(dt, v) if dt in ("date", "decimal") else v
                            for dt, v in zip(fmt, row)])


def tpch_catalog(stats: Mapping[str, RelationStats], sensitivity: float = 0.5, seed: int = 0,
                 capacity_fraction: float = 0.3, size_unit: int = 1024,
                 sensitive: Sequence[str] | None = None) -> Catalog:
    """Catalog over generated statistics.

    Attribute sizes are ``ceil(rows * byte_width / size_unit)`` storage units.
    ``sensitive`` fixes the sensitive set; otherwise ``round(sensitivity * n)``
    attributes are drawn with ``seed``. Capacity is ``capacity_fraction`` of
    the total size.
    """
    relations, attrs = [], []
    for rel, cols in SCHEMA.items():
        relations.append(RelationSchema(rel, tuple(c for c, _ in cols), DEFAULT_TUPLE_ID))
        rows = stats[rel].row_count
        for name, dt in cols:
            width = stats[rel].columns[name].byte_width
            attrs.append(AttributeMeta(name, rel, dt, False, max(1, math.ceil(rows * width / size_unit))))
    names = [a.qualname for a in attrs]
    if sensitive is None:
        rng = np.random.default_rng(seed)
        k = round(sensitivity * len(names))
        sensitive = [names[i] for i in sorted(rng.choice(len(names), size=k, replace=False))]
    total = sum(a.size for a in attrs)
    cat = Catalog(tuple(relations), tuple(attrs), dict(stats),
                  capacity=int(capacity_fraction * total), size_unit=size_unit)
    cat = cat.with_sensitivity(sensitive)
    cat.validate()
    return cat


def generate_data(config: GeneratorConfig, out_dir: str | Path) -> tuple[Path, dict[str, RelationStats]]:
    """Write ``<out_dir>/plaintext/*.csv``; returns the directory and the exact stats."""
    ds = generate_tables(config)
    plain = Path(out_dir) / "plaintext"
    write_tables(ds.tables, plain)
    return plain, ds.stats


# ---------------------------------------------------------------------------
# workload templates (aggregates removed)


def _d(days: int) -> str:
    return format_value("date", int(days))


def _q1(rng) -> str:
    d = int(rng.integers(DATE_LO, DATE_HI + 1))
    return ("SELECT l_returnflag, l_linestatus, l_quantity, l_extendedprice, l_discount, l_tax "
            f"FROM lineitem WHERE l_shipdate <= DATE '{_d(d)}'")


def _q3(rng) -> str:
    seg = SEGMENTS[rng.integers(len(SEGMENTS))]
    d = int(rng.integers(DATE_LO, DATE_HI + 1))
    return ("SELECT l_orderkey, l_extendedprice, l_discount, o_orderdate, o_shippriority "
            "FROM customer, orders, lineitem "
            f"WHERE c_mktsegment = '{seg}' AND c_custkey = o_custkey AND l_orderkey = o_orderkey "
            f"AND o_orderdate < DATE '{_d(d)}' AND l_shipdate > DATE '{_d(d)}'")


def _q6(rng) -> str:
    d = int(rng.integers(DATE_LO, DATE_HI - 365 + 1))
    k = int(rng.integers(1, 10))  # discount centre 0.01..0.09, bounds stay in 0.00..0.10
    q = int(rng.integers(1, 51))
    return ("SELECT l_extendedprice, l_discount FROM lineitem "
            f"WHERE l_shipdate >= DATE '{_d(d)}' AND l_shipdate < DATE '{_d(d + 365)}' "
            f"AND l_discount BETWEEN {(k - 1) / 100:.2f} AND {(k + 1) / 100:.2f} "
            f"AND l_quantity < {q}")


def _q10(rng) -> str:
    d = int(rng.integers(DATE_LO, DATE_HI - 90 + 1))
    flag = RETURN_FLAGS[rng.integers(len(RETURN_FLAGS))]
    return ("SELECT c_custkey, c_name, c_acctbal, n_name, c_address, c_phone, "
            "l_extendedprice, l_discount "
            "FROM customer, orders, lineitem, nation "
            "WHERE c_custkey = o_custkey AND l_orderkey = o_orderkey "
            f"AND o_orderdate >= DATE '{_d(d)}' AND o_orderdate < DATE '{_d(d + 90)}' "
            f"AND l_returnflag = '{flag}' AND c_nationkey = n_nationkey")


TEMPLATES = {"Q1": _q1, "Q3": _q3, "Q6": _q6, "Q10": _q10}

# Calibration set: non-aggregate forms of Q1, Q5 and Q13 plus the lineitem/orders join.
CALIBRATION_QUERIES = (
    "SELECT l_returnflag, l_linestatus, l_quantity, l_extendedprice, l_discount, l_tax "
    "FROM lineitem WHERE l_shipdate <= DATE '1998-09-02'",
    "SELECT n_name, l_extendedprice, l_discount FROM customer, orders, lineitem, supplier, nation, region "
    "WHERE c_custkey = o_custkey AND l_orderkey = o_orderkey AND l_suppkey = s_suppkey "
    "AND c_nationkey = s_nationkey AND s_nationkey = n_nationkey AND n_regionkey = r_regionkey "
    "AND r_name = 'ASIA' AND o_orderdate >= DATE '1994-01-01' AND o_orderdate < DATE '1995-01-01'",
    "SELECT c_custkey, o_orderkey FROM customer, orders WHERE c_custkey = o_custkey",
    "SELECT * FROM lineitem JOIN orders ON l_orderkey = o_orderkey",
)

# Split of lineitem used when timing the combine step.
COMBINE_SPLIT_PRIVATE = ("l_orderkey", "l_partkey", "l_quantity", "l_linestatus", "l_shipdate",
                         "l_shipinstruct")
COMBINE_SPLIT_PUBLIC_SENSITIVE = ("l_suppkey", "l_linenumber", "l_extendedprice", "l_commitdate",
                                  "l_shipmode")


def generate_workload(config: GeneratorConfig, catalog: Catalog) -> list[Query]:
    """``workload_size`` queries drawn uniformly from the templates, freq in 1..1000."""
    rng = np.random.default_rng(config.rng_seed + 1)
    names = list(config.templates)
    out = []
    for _ in range(config.workload_size):
        tpl = names[rng.integers(len(names))]
        sql = TEMPLATES[tpl](rng)
        freq = int(rng.integers(1, 1001))
        out.append(parse(sql, catalog, freq))
    return out


# ---------------------------------------------------------------------------
# small synthetic instances for the partitioning oracles


def random_instance(n_attributes: int, rng_seed: int = 0, n_queries: int = 6,
                    capacity_fraction: float = 0.4, max_size: int = 10,
                    sensitivity: float = 0.5) -> tuple[Catalog, list[Query]]:
    """A random two-relation catalog with ``n_attributes`` and a matching workload.

    Relation ``r0`` owns a key ``k0``; relation ``r1`` (present when there
    are at least 4 attributes) holds a foreign key ``f1`` into it. The other
    attributes are integer or decimal with random domains. Queries select a
    few attributes with range predicates, and some join the two relations.
    """
    if n_attributes < 2:
        raise ValueError("need at least 2 attributes")
    rng = np.random.default_rng(rng_seed)
    two = n_attributes >= 4
    n0 = n_attributes // 2 if two else n_attributes
    specs: dict[str, list[tuple[str, str]]] = {"r0": [("k0", "integer")]}
    for i in range(1, n0):
        specs["r0"].append((f"a{i}", "decimal" if rng.random() < 0.3 else "integer"))
    if two:
        specs["r1"] = [("f1", "integer")]
        for i in range(1, n_attributes - n0):
            specs["r1"].append((f"b{i}", "decimal" if rng.random() < 0.3 else "integer"))
    rows = {r: int(rng.integers(200, 5000)) for r in specs}
    relations, attrs, stats = [], [], {}
    for r, cols in specs.items():
        relations.append(RelationSchema(r, tuple(c for c, _ in cols)))
        cstats = {}
        for c, dt in cols:
            if c == "k0":
                lo, hi, distinct = 1, rows[r], rows[r]
            elif c == "f1":
                lo, hi, distinct = 1, rows["r0"], min(rows[r], rows["r0"])
            else:
                lo = int(rng.integers(0, 1000))
                hi = lo + int(rng.integers(10, 100_000))
                distinct = int(min(rows[r], hi - lo + 1, rng.integers(5, 10_000)))
            if dt == "decimal":
                lo, hi = float(lo), float(hi)
            cstats[c] = ColumnStats(distinct, lo, hi, INTEGER_WIDTH if dt == "integer" else DECIMAL_WIDTH)
            attrs.append(AttributeMeta(c, r, dt, bool(rng.random() < sensitivity),
                                       int(rng.integers(1, max_size + 1))))
        stats[r] = RelationStats(r, rows[r], cstats)
    total = sum(a.size for a in attrs)
    cat = Catalog(tuple(relations), tuple(attrs), stats, capacity=int(capacity_fraction * total))
    cat.validate()

    queries = []
    for _ in range(n_queries):
        join = two and rng.random() < 0.4
        rels = ["r0", "r1"] if join else [("r0", "r1")[rng.integers(2)] if two else "r0"]
        pool = [(r, c, dt) for r in rels for c, dt in specs[r]]
        k = int(rng.integers(1, min(3, len(pool)) + 1))
        proj = [pool[j] for j in sorted(rng.choice(len(pool), size=k, replace=False))]
        preds = []
        for _ in range(int(rng.integers(0, 3))):
            r, c, dt = pool[rng.integers(len(pool))]
            cs = stats[r].columns[c]
            cut = cs.min + (cs.max - cs.min) * rng.random()
            cut = round(cut, 2) if dt == "decimal" else int(cut)
            preds.append(f"{r}.{c} {'<' if rng.random() < 0.5 else '>='} {cut}")
        if join:
            preds.append("r0.k0 = r1.f1")
        sql = f"SELECT {', '.join(f'{r}.{c}' for r, c, _ in proj)} FROM {', '.join(rels)}"
        if preds:
            sql += " WHERE " + " AND ".join(preds)
        queries.append(parse(sql, cat, int(rng.integers(1, 1001))))
    return cat, queries
