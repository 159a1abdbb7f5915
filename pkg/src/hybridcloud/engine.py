"""Two simulated clouds, hybrid plan execution and the plaintext oracle.

Each cloud is a directory of CSV fragments plus an in-memory columnar
evaluator. Time is reported two ways: wall-clock seconds, and a
deterministic simulated clock that charges per-byte rates for processing on
each cloud, the public-to-private transfer, decryption and the combine step.
The simulated clock is what the cost-model experiments compare against.

Fragment files carry the relation's tuple id column. A sensitive attribute
stored publicly appears as two columns: ``<attr>`` holding etuple fields
(``hex(nonce):hex(ciphertext)``) and ``<attr>_id`` holding its hex
partition identifier.
"""

from __future__ import annotations

import csv
import logging
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .bucketize import BucketScheme, MappedCondition, MappedJoin, build_registry, format_id, parse_id
from .catalog import PRIVATE, PUBLIC, Catalog, coerce_value, days_to_date, format_value
from .crypto import ETuple, SecretKey, decrypt_value, encrypt_column
from .errors import FragmentError, PlacementMismatchError
from .queryir import (
    AttrRef,
    Between,
    BinOp,
    Comparison,
    HybridPlan,
    Join,
    JoinEq,
    Literal,
    Neg,
    Project,
    Query,
    Scan,
    Select,
    SubPlan,
    TidJoin,
    build_plan,
    id_column,
)

log = logging.getLogger(__name__)

ID_SUFFIX = "_id"


@dataclass(frozen=True)
class EngineConfig:
    """Simulated per-byte speeds; defaults match the default cost weights (private 7.5x slower)."""

    public_rate: float = 7.2686e-7     # s per byte processed on the public cloud
    private_rate: float = 5.45146e-6   # s per byte processed on the private cloud
    network_rate: float = 1.488e-6     # s per byte shipped public -> private
    combine_rate: float = 4.1e-6       # s per byte entering the combine step
    decrypt_cost: float = 2.0e-5       # s per etuple decrypted


# ---------------------------------------------------------------------------
# tables


@dataclass
class Table:
    """Columnar rows keyed by qualified column name.

    Encrypted columns hold int64 codes into ``encoded[col]`` (the etuple
    fields of the source fragment) so joins never copy ciphertext strings.
    ``widths`` holds average bytes per row for byte accounting.
    """

    columns: dict[str, np.ndarray]
    widths: dict[str, float] = field(default_factory=dict)
    encoded: dict[str, np.ndarray] = field(default_factory=dict)
    length: int | None = None

    def __len__(self) -> int:
        if self.length is not None:
            return self.length
        return len(next(iter(self.columns.values()))) if self.columns else 0

    def take(self, idx: np.ndarray) -> "Table":
        return Table({k: v[idx] for k, v in self.columns.items()}, dict(self.widths),
                     dict(self.encoded), len(idx))

    def select(self, names: Iterable[str]) -> "Table":
        names = list(names)
        return Table({k: self.columns[k] for k in names},
                     {k: self.widths.get(k, 8.0) for k in names},
                     {k: v for k, v in self.encoded.items() if k in names}, len(self))

    def nbytes(self, names: Iterable[str] | None = None) -> float:
        names = self.columns if names is None else names
        return len(self) * sum(self.widths.get(k, 8.0) for k in names)

    def merge(self, other: "Table", li: np.ndarray, ri: np.ndarray) -> "Table":
        cols = {k: v[li] for k, v in self.columns.items()}
        widths = dict(self.widths)
        for k, v in other.columns.items():
            if k not in cols:
                cols[k] = v[ri]
                widths[k] = other.widths.get(k, 8.0)
        enc = dict(self.encoded)
        enc.update({k: v for k, v in other.encoded.items() if k not in self.columns})
        return Table(cols, widths, enc, len(li))


def _avg_width(col: np.ndarray) -> float:
    if len(col) == 0:
        return 0.0
    if col.dtype != object:
        return float(col.dtype.itemsize)
    return sum(len(str(v)) for v in col) / len(col)


def join_indices(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row index pairs (i, j) with ``a[i] == b[j]`` (sort-based hash join)."""
    if len(a) == 0 or len(b) == 0:
        e = np.zeros(0, dtype=np.int64)
        return e, e
    order = np.argsort(b, kind="stable")
    bs = b[order]
    lo = np.searchsorted(bs, a, "left")
    hi = np.searchsorted(bs, a, "right")
    cnt = hi - lo
    total = int(cnt.sum())
    li = np.repeat(np.arange(len(a), dtype=np.int64), cnt)
    offs = np.arange(total, dtype=np.int64) - np.repeat(np.cumsum(cnt) - cnt, cnt)
    ri = order[np.repeat(lo, cnt) + offs]
    return li, ri


# ---------------------------------------------------------------------------
# stores


@dataclass
class Store:
    cloud: str
    tables: dict[str, Table] = field(default_factory=dict)
    directory: Path | None = None


@dataclass
class Stores:
    public: Store
    private: Store
    private_set: frozenset[str]
    catalog: Catalog
    schemes: dict[str, BucketScheme]

    def store(self, cloud: str) -> Store:
        return self.public if cloud == PUBLIC else self.private


def read_csv_columns(path: Path) -> dict[str, list[str]]:
    if not path.exists():
        raise FragmentError(f"missing fragment file {path}")
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        try:
            header = next(r)
        except StopIteration:
            raise FragmentError(f"{path}: empty file") from None
        cols: list[list[str]] = [[] for _ in header]
        for row in r:
            if len(row) != len(header):
                raise FragmentError(f"{path}: ragged row {row[:3]}...")
            for c, v in zip(cols, row):
                c.append(v)
    return dict(zip(header, cols))


def typed_array(datatype: str, values: Sequence[Any]) -> np.ndarray:
    if datatype in ("integer", "date"):
        return np.array([coerce_value(datatype, v) for v in values], dtype=np.int64)
    if datatype == "decimal":
        return np.array([float(v) for v in values], dtype=np.float64)
    return np.array([str(v) for v in values], dtype=object)


def read_plaintext(catalog: Catalog, directory: str | Path) -> dict[str, Table]:
    """Unpartitioned relations (``<rel>.csv``) as tables with qualified columns."""
    d = Path(directory)
    out = {}
    for rel in catalog.relations:
        raw = read_csv_columns(d / f"{rel.name}.csv")
        cols, widths = {}, {}
        for a in catalog.attributes_of(rel.name):
            if a.name not in raw:
                raise FragmentError(f"{d / rel.name}.csv lacks column {a.name}")
            arr = typed_array(a.datatype, raw[a.name])
            cols[a.qualname] = arr
            widths[a.qualname] = _plain_width(catalog, a.qualname, arr)
        out[rel.name] = Table(cols, widths)
    return out


def _plain_width(catalog: Catalog, qualname: str, arr: np.ndarray) -> float:
    try:
        return float(catalog.column_stats(qualname).byte_width)
    except KeyError:
        return _avg_width(arr)


def tables_from_columns(catalog: Catalog, data: Mapping[str, Mapping[str, np.ndarray]]) -> dict[str, Table]:
    """Wrap generator output (bare column names) as qualified tables."""
    out = {}
    for rel in catalog.relations:
        cols, widths = {}, {}
        for a in catalog.attributes_of(rel.name):
            arr = np.asarray(data[rel.name][a.name])
            cols[a.qualname] = arr
            widths[a.qualname] = _plain_width(catalog, a.qualname, arr)
        out[rel.name] = Table(cols, widths)
    return out


def _encrypted_fields(key: SecretKey, scheme: BucketScheme, values: np.ndarray,
                      cache: dict | None) -> list[str]:
    if cache is not None and scheme.attribute in cache and len(cache[scheme.attribute]) == len(values):
        return cache[scheme.attribute]
    fields, _ = encrypt_column(key, scheme, values.tolist())
    if cache is not None:
        cache[scheme.attribute] = fields
    return fields


def _fragment_rows(catalog: Catalog, rel: str, cloud: str, plain: Table, key: SecretKey,
                   schemes: Mapping[str, BucketScheme], cache: dict | None = None) -> dict[str, list]:
    """File columns (bare names) of one fragment."""
    tid = catalog.relation(rel).tuple_id
    n = len(plain)
    cols: dict[str, list] = {tid: list(range(n))}
    for a in catalog.attributes_of(rel):
        if a.placement != cloud:
            continue
        values = plain.columns[a.qualname]
        if cloud == PUBLIC and a.sensitive:
            scheme = schemes[a.qualname]
            cols[a.name] = _encrypted_fields(key, scheme, values, cache)
            cols[a.name + ID_SUFFIX] = [format_id(int(i)) for i in scheme.map_array(values)]
        else:
            cols[a.name] = [format_value(a.datatype, v) for v in values.tolist()]
    return cols


def write_fragments(catalog: Catalog, plain: Mapping[str, Table], data_dir: str | Path,
                    key: SecretKey, schemes: Mapping[str, BucketScheme],
                    cipher_cache: dict | None = None) -> None:
    """Write ``public/`` and ``private/`` fragment CSVs for the current placement."""
    root = Path(data_dir)
    for cloud in (PUBLIC, PRIVATE):
        d = root / cloud
        d.mkdir(parents=True, exist_ok=True)
        for old in d.glob("*.csv"):
            old.unlink()
    for frag in catalog.fragments():
        cols = _fragment_rows(catalog, frag.relation, frag.cloud, plain[frag.relation], key, schemes,
                              cipher_cache)
        with open(root / frag.cloud / f"{frag.relation}.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            names = list(cols)
            w.writerow(names)
            w.writerows(zip(*(cols[c] for c in names)))


def _table_from_fragment(catalog: Catalog, rel: str, cloud: str, raw: Mapping[str, list[str]]) -> Table:
    tid = catalog.relation(rel).tuple_id
    if tid not in raw:
        raise FragmentError(f"{cloud}/{rel}.csv lacks tuple id column {tid!r}")
    cols = {f"{rel}.{tid}": np.array([int(v) for v in raw[tid]], dtype=np.int64)}
    widths = {f"{rel}.{tid}": 8.0}
    encoded = {}
    for a in catalog.attributes_of(rel):
        if a.placement != cloud:
            continue
        if a.name not in raw:
            raise FragmentError(f"{cloud}/{rel}.csv lacks column {a.name}")
        if cloud == PUBLIC and a.sensitive:
            fields = np.array(raw[a.name], dtype=object)
            if (a.name + ID_SUFFIX) not in raw:
                raise FragmentError(f"{cloud}/{rel}.csv lacks index column {a.name}{ID_SUFFIX}")
            cols[a.qualname] = np.arange(len(fields), dtype=np.int64)
            encoded[a.qualname] = fields
            widths[a.qualname] = _avg_width(fields)
            cols[id_column(a.qualname)] = np.array([parse_id(v) for v in raw[a.name + ID_SUFFIX]],
                                                   dtype=np.uint64)
            widths[id_column(a.qualname)] = 8.0
        else:
            arr = typed_array(a.datatype, raw[a.name])
            cols[a.qualname] = arr
            widths[a.qualname] = _plain_width(catalog, a.qualname, arr)
    return Table(cols, widths, encoded)


def open_stores(catalog: Catalog, data_dir: str | Path, schemes: Mapping[str, BucketScheme]) -> Stores:
    """Read fragment directories back into memory and check tuple-id consistency."""
    root = Path(data_dir)
    stores = {PUBLIC: Store(PUBLIC, directory=root / PUBLIC), PRIVATE: Store(PRIVATE, directory=root / PRIVATE)}
    for frag in catalog.fragments():
        raw = read_csv_columns(root / frag.cloud / f"{frag.relation}.csv")
        stores[frag.cloud].tables[frag.relation] = _table_from_fragment(catalog, frag.relation,
                                                                        frag.cloud, raw)
    _check_fragments(catalog, stores[PUBLIC], stores[PRIVATE])
    return Stores(stores[PUBLIC], stores[PRIVATE], catalog.private_set, catalog, dict(schemes))


def _check_fragments(catalog: Catalog, public: Store, private: Store) -> None:
    for rel in catalog.relation_names:
        if rel in public.tables and rel in private.tables:
            tid = f"{rel}.{catalog.relation(rel).tuple_id}"
            a, b = public.tables[rel], private.tables[rel]
            if len(a) != len(b):
                raise FragmentError(f"{rel}: public fragment has {len(a)} rows, private has {len(b)}")
            if not np.array_equal(np.sort(a.columns[tid]), np.sort(b.columns[tid])):
                raise FragmentError(f"{rel}: fragments disagree on tuple ids")


def load_fragments(catalog: Catalog, data_dir: str | Path, key: SecretKey,
                   schemes: Mapping[str, BucketScheme] | None = None,
                   plaintext_dir: str | Path | None = None,
                   cipher_cache: dict | None = None) -> Stores:
    """Fragment ``<data_dir>/plaintext`` per the catalog placement and open both stores."""
    plain = read_plaintext(catalog, plaintext_dir or Path(data_dir) / "plaintext")
    schemes = dict(schemes) if schemes is not None else build_registry(catalog, key.ident_key)
    write_fragments(catalog, plain, data_dir, key, schemes, cipher_cache)
    return open_stores(catalog, data_dir, schemes)


def build_stores(catalog: Catalog, plain: Mapping[str, Table], key: SecretKey,
                 schemes: Mapping[str, BucketScheme] | None = None,
                 cipher_cache: dict | None = None) -> Stores:
    """In-memory equivalent of :func:`load_fragments` (no files written).

    ``cipher_cache`` maps attribute names to etuple fields already produced
    under ``key``; sweeps that only change partitioning reuse it and
    recompute the partition ids.
    """
    schemes = dict(schemes) if schemes is not None else build_registry(catalog, key.ident_key)
    stores = {PUBLIC: Store(PUBLIC), PRIVATE: Store(PRIVATE)}
    for frag in catalog.fragments():
        rel, cloud = frag.relation, frag.cloud
        src = plain[rel]
        tid = f"{rel}.{frag.tuple_id}"
        cols = {tid: np.arange(len(src), dtype=np.int64)}
        widths = {tid: 8.0}
        encoded = {}
        for a in catalog.attributes_of(rel):
            if a.placement != cloud:
                continue
            values = src.columns[a.qualname]
            if cloud == PUBLIC and a.sensitive:
                scheme = schemes[a.qualname]
                fields = np.array(_encrypted_fields(key, scheme, values, cipher_cache), dtype=object)
                cols[a.qualname] = np.arange(len(fields), dtype=np.int64)
                encoded[a.qualname] = fields
                widths[a.qualname] = _avg_width(fields)
                cols[id_column(a.qualname)] = scheme.map_array(values)
                widths[id_column(a.qualname)] = 8.0
            else:
                cols[a.qualname] = values
                widths[a.qualname] = src.widths.get(a.qualname, _avg_width(values))
        stores[cloud].tables[rel] = Table(cols, widths, encoded)
    return Stores(stores[PUBLIC], stores[PRIVATE], catalog.private_set, catalog, schemes)


def audit_public_store(stores: Stores, key: SecretKey) -> int:
    """Decrypt every public etuple and check its partition id; returns values checked."""
    checked = 0
    for rel, t in stores.public.tables.items():
        for col, fields in t.encoded.items():
            scheme = stores.schemes[col]
            ids = t.columns[id_column(col)]
            for f, pid in zip(fields, ids):
                v = decrypt_value(key, ETuple.decode(f))
                if scheme.ident_ids[scheme.partition_of(v)] != int(pid):
                    raise FragmentError(f"{col}: partition id does not match its value")
                checked += 1
    return checked


# ---------------------------------------------------------------------------
# predicate and expression evaluation


_CMP = {
    "=": np.equal, "<": np.less, "<=": np.less_equal, ">": np.greater, ">=": np.greater_equal,
}


def predicate_mask(p, t: Table) -> np.ndarray:
    if isinstance(p, Comparison):
        return _CMP[p.op](t.columns[p.attr.qualname], p.value)
    if isinstance(p, Between):
        col = t.columns[p.attr.qualname]
        return (col >= p.low) & (col <= p.high)
    if isinstance(p, MappedCondition):
        ids = np.fromiter(p.identifier_set, dtype=np.uint64, count=len(p.identifier_set))
        return np.isin(t.columns[id_column(p.attribute)], ids)
    if isinstance(p, JoinEq):
        return t.columns[p.left.qualname] == t.columns[p.right.qualname]
    if isinstance(p, MappedJoin):
        pairs = {(int(a), int(b)) for a, b in p.pairs}
        left, right = t.columns[id_column(p.left)], t.columns[id_column(p.right)]
        return np.fromiter(((int(a), int(b)) in pairs for a, b in zip(left, right)),
                           dtype=bool, count=len(t))
    raise TypeError(f"cannot evaluate predicate {p!r}")


def eval_expr(e, t: Table) -> np.ndarray:
    n = len(t)
    if isinstance(e, AttrRef):
        return t.columns[e.qualname]
    if isinstance(e, Literal):
        return np.full(n, e.value, dtype=object if isinstance(e.value, str) else None)
    if isinstance(e, Neg):
        return -eval_expr(e.operand, t)
    if isinstance(e, BinOp):
        a, b = eval_expr(e.left, t), eval_expr(e.right, t)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.true_divide(a, b)
    raise TypeError(f"cannot evaluate expression {e!r}")


def _condition_join(left: Table, right: Table, c) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(c, JoinEq):
        lq, rq = c.left.qualname, c.right.qualname
        if lq not in left.columns:
            lq, rq = rq, lq
        return join_indices(left.columns[lq], right.columns[rq])
    if isinstance(c, TidJoin):
        return join_indices(left.columns[c.column], right.columns[c.column])
    if isinstance(c, MappedJoin):
        lq, rq = c.left, c.right
        pairs = np.array(sorted(c.pairs), dtype=np.uint64).reshape(-1, 2)
        if id_column(lq) not in left.columns:
            lq, rq = rq, lq
            pairs = pairs[:, ::-1]
        li1, bi = join_indices(left.columns[id_column(lq)], pairs[:, 0].copy())
        li2, ri = join_indices(pairs[bi, 1], right.columns[id_column(rq)])
        return li1[li2], ri
    raise TypeError(f"cannot join on {c!r}")


def hash_join(left: Table, right: Table, conditions: Sequence) -> Table:
    if not conditions:
        raise FragmentError("join without condition")
    li, ri = _condition_join(left, right, conditions[0])
    out = left.merge(right, li, ri)
    for c in conditions[1:]:
        if isinstance(c, TidJoin):
            continue
        out = out.take(np.flatnonzero(predicate_mask(c, out)))
    return out


@dataclass
class _Meter:
    """Bytes handled by one evaluation (scans plus operator outputs)."""

    scanned: float = 0.0
    produced: float = 0.0

    @property
    def processed(self) -> float:
        return self.scanned + self.produced


def eval_plan(node, tables: Mapping[str, Table], meter: _Meter | None = None) -> Table:
    meter = meter if meter is not None else _Meter()
    if isinstance(node, Scan):
        t = tables[node.relation]
        if node.columns:
            names = list(node.columns)
            names += [id_column(c) for c in node.columns if id_column(c) in t.columns]
            t = t.select(names)
        meter.scanned += t.nbytes()
        return t
    if isinstance(node, Select):
        t = eval_plan(node.child, tables, meter)
        mask = np.ones(len(t), dtype=bool)
        for p in node.predicates:
            mask &= predicate_mask(p, t)
        out = t.take(np.flatnonzero(mask))
        meter.produced += out.nbytes()
        return out
    if isinstance(node, Join):
        out = hash_join(eval_plan(node.left, tables, meter), eval_plan(node.right, tables, meter),
                        node.conditions)
        meter.produced += out.nbytes()
        return out
    if isinstance(node, Project):
        return eval_plan(node.child, tables, meter)
    raise TypeError(f"unknown plan node {node!r}")


def project_rows(projections, t: Table) -> list[tuple]:
    cols = []
    for p in projections:
        v = eval_expr(p.expr, t)
        if isinstance(p.expr, AttrRef) and p.expr.datatype == "date":
            v = np.array([days_to_date(x) for x in v], dtype=object)
        cols.append(v.tolist() if hasattr(v, "tolist") else list(v))
    return list(zip(*cols)) if cols else [() for _ in range(len(t))]


# ---------------------------------------------------------------------------
# execution


@dataclass
class StageTrace:
    rows: int = 0
    bytes: float = 0.0
    sim_time: float = 0.0
    wall_time: float = 0.0


@dataclass
class ExecutionTrace:
    public: StageTrace = field(default_factory=StageTrace)
    transfer: StageTrace = field(default_factory=StageTrace)
    private: StageTrace = field(default_factory=StageTrace)
    decrypt: StageTrace = field(default_factory=StageTrace)
    combine: StageTrace = field(default_factory=StageTrace)
    decrypt_count: int = 0
    public_scanned: float = 0.0
    private_scanned: float = 0.0
    result_rows: int = 0
    sim_time: float = 0.0
    wall_time: float = 0.0

    @property
    def combine_input_bytes(self) -> float:
        return self.combine.bytes

    def report(self) -> str:
        lines = [f"{'stage':<10}{'rows':>10}{'bytes':>14}{'sim_s':>12}{'wall_s':>10}"]
        for name in ("public", "transfer", "private", "decrypt", "combine"):
            s = getattr(self, name)
            lines.append(f"{name:<10}{s.rows:>10}{s.bytes:>14.0f}{s.sim_time:>12.6f}{s.wall_time:>10.4f}")
        lines.append(f"decrypted values: {self.decrypt_count}; result rows: {self.result_rows}; "
                     f"simulated {self.sim_time:.6f} s; wall {self.wall_time:.4f} s")
        return "\n".join(lines)


def _run_subplans(subplans: Sequence[SubPlan], store: Store) -> tuple[list[Table], _Meter, float]:
    t0 = time.perf_counter()
    meter = _Meter()
    out = []
    for sp in subplans:
        t = eval_plan(sp.root, store.tables, meter)
        out.append(t.select(sp.outputs))
    return out, meter, time.perf_counter() - t0


def _decrypt_table(t: Table, columns: Sequence[str], key: SecretKey, catalog: Catalog) -> tuple[Table, int]:
    cols = dict(t.columns)
    widths = dict(t.widths)
    enc = dict(t.encoded)
    count = 0
    for c in columns:
        if c not in enc:
            continue
        codes = cols[c]
        uniq, inverse = np.unique(codes, return_inverse=True)
        fields = enc.pop(c)
        plain = [decrypt_value(key, ETuple.decode(fields[i])) for i in uniq]
        count += len(uniq)
        dt = catalog.attribute(c).datatype
        arr = typed_array(dt, plain) if plain else typed_array(dt, [])
        cols[c] = arr[inverse.reshape(-1)] if len(arr) else arr
        widths[c] = float(catalog.column_stats(c).byte_width)
    return Table(cols, widths, enc, len(t)), count


def _combine(parts: list[Table], edges: Sequence, filters: Sequence) -> Table:
    """Join intermediate results along the combine edges."""
    def cols_of(c):
        if isinstance(c, TidJoin):
            return {c.column}
        return {c.left.qualname, c.right.qualname}

    current = parts[0]
    rest = list(parts[1:])
    pending = list(edges)
    while rest:
        for k, t in enumerate(rest):
            conds = [e for e in pending if _spans(e, current, t)]
            if conds:
                break
        else:
            raise FragmentError("intermediate results are not connected by any combine condition")
        t = rest.pop(k)
        current = hash_join(current, t, conds)
        pending = [e for e in pending if e not in conds]
        # edges now internal to the joined result become filters
        for e in list(pending):
            if cols_of(e) <= set(current.columns) and not _spans_any(e, rest):
                if not isinstance(e, TidJoin):
                    current = current.take(np.flatnonzero(predicate_mask(e, current)))
                pending.remove(e)
    for e in pending:
        if not isinstance(e, TidJoin):
            current = current.take(np.flatnonzero(predicate_mask(e, current)))
    return current


def _spans(e, a: Table, b: Table) -> bool:
    if isinstance(e, TidJoin):
        return e.column in a.columns and e.column in b.columns
    l, r = e.left.qualname, e.right.qualname
    return (l in a.columns and r in b.columns) or (r in a.columns and l in b.columns)


def _spans_any(e, tables: Sequence[Table]) -> bool:
    if isinstance(e, TidJoin):
        return any(e.column in t.columns for t in tables)
    return any(e.left.qualname in t.columns or e.right.qualname in t.columns for t in tables)


def execute(hybrid: HybridPlan, stores: Stores, key: SecretKey, concurrent: bool = True,
            config: EngineConfig = EngineConfig()) -> tuple[list[tuple], ExecutionTrace]:
    """Run a hybrid plan: both clouds, then decrypt, filter, combine and project."""
    if hybrid.private_set != stores.private_set:
        raise PlacementMismatchError("plan was compiled for a different placement than the stores hold")
    trace = ExecutionTrace()
    wall0 = time.perf_counter()
    if concurrent and hybrid.public and hybrid.private:
        with ThreadPoolExecutor(max_workers=2) as pool:
            fut_pu = pool.submit(_run_subplans, hybrid.public, stores.public)
            fut_pr = pool.submit(_run_subplans, hybrid.private, stores.private)
            pub, pub_m, pub_w = fut_pu.result()
            pri, pri_m, pri_w = fut_pr.result()
    else:
        pub, pub_m, pub_w = _run_subplans(hybrid.public, stores.public)
        pri, pri_m, pri_w = _run_subplans(hybrid.private, stores.private)

    pub_bytes = sum(t.nbytes() for t in pub)
    pri_bytes = sum(t.nbytes() for t in pri)
    trace.public = StageTrace(sum(len(t) for t in pub), pub_m.processed,
                              config.public_rate * pub_m.processed, pub_w)
    trace.transfer = StageTrace(sum(len(t) for t in pub), pub_bytes, config.network_rate * pub_bytes, 0.0)
    trace.private = StageTrace(sum(len(t) for t in pri), pri_m.processed,
                               config.private_rate * pri_m.processed, pri_w)
    trace.public_scanned, trace.private_scanned = pub_m.scanned, pri_m.scanned

    t0 = time.perf_counter()
    decrypted = []
    for sp, t in zip(hybrid.public, pub):
        d, n = _decrypt_table(t, sp.encrypted, key, stores.catalog)
        trace.decrypt_count += n
        decrypted.append(d)
    trace.decrypt = StageTrace(trace.decrypt_count, 0.0, config.decrypt_cost * trace.decrypt_count,
                               time.perf_counter() - t0)

    t0 = time.perf_counter()
    parts = decrypted + pri
    applied = set()
    for i, t in enumerate(parts):
        mask = np.ones(len(t), dtype=bool)
        for k, f in enumerate(hybrid.post.filters):
            if _pred_cols(f) <= set(t.columns):
                mask &= predicate_mask(f, t)
                applied.add(k)
        if not mask.all():
            parts[i] = t.take(np.flatnonzero(mask))
    combined = _combine(parts, hybrid.post.combine, ()) if len(parts) > 1 else parts[0]
    for k, f in enumerate(hybrid.post.filters):
        if k not in applied:
            combined = combined.take(np.flatnonzero(predicate_mask(f, combined)))
    rows = project_rows(hybrid.post.projections, combined)
    comb_bytes = pub_bytes + pri_bytes
    trace.combine = StageTrace(len(rows), comb_bytes, config.combine_rate * comb_bytes,
                               time.perf_counter() - t0)
    trace.result_rows = len(rows)
    trace.sim_time = (max(trace.public.sim_time + trace.transfer.sim_time, trace.private.sim_time)
                      + trace.decrypt.sim_time + trace.combine.sim_time)
    trace.wall_time = time.perf_counter() - wall0
    return rows, trace


def _pred_cols(p) -> set[str]:
    if isinstance(p, (Comparison, Between)):
        return {p.attr.qualname}
    if isinstance(p, JoinEq):
        return {p.left.qualname, p.right.qualname}
    raise TypeError(p)


def ground_truth(query: Query, plaintext: str | Path | Mapping[str, Table],
                 catalog: Catalog | None = None) -> list[tuple]:
    """Rows of the original plan evaluated over unpartitioned plaintext."""
    if not isinstance(plaintext, Mapping):
        if catalog is None:
            raise ValueError("a catalog is needed to read a plaintext directory")
        plaintext = read_plaintext(catalog, plaintext)
    plan = build_plan(query)
    t = eval_plan(plan, plaintext)
    return project_rows(plan.projections, t)


# ---------------------------------------------------------------------------
# leakage scanner


_HEXISH = re.compile(r"^[0-9a-fA-F:]+$")


def find_plaintext_leaks(public_dir: str | Path, catalog: Catalog,
                         plain: Mapping[str, Table]) -> list[tuple[str, str]]:
    """(file, literal) pairs where a sensitive plaintext value shows up in a public file.

    Encrypted columns are checked field by field for exact matches. Every
    cell of the file is also searched for distinctive sensitive literals (at
    least 4 characters, not hex-only) that do not legitimately occur in a
    non-sensitive column of the same file. Hex cells cannot contain such a
    literal, so only the remaining cells are searched.
    """
    leaks = []
    for path in sorted(Path(public_dir).glob("*.csv")):
        rel = path.stem
        raw = read_csv_columns(path)
        public_plain = set()
        for a in catalog.attributes_of(rel):
            if a.placement == PUBLIC and not a.sensitive and a.name in raw:
                public_plain.update(raw[a.name])
        public_blob = "\x00".join(public_plain)
        suspect = "\x00".join({v for vals in raw.values() for v in vals
                               if v not in public_plain and not _HEXISH.match(v)} | set(raw))
        for a in catalog.attributes_of(rel):
            if not a.sensitive or a.placement != PUBLIC:
                continue
            literals = {format_value(a.datatype, v) for v in plain[rel].columns[a.qualname].tolist()}
            for col in (a.name, a.name + ID_SUFFIX):
                for f in raw.get(col, ()):
                    if f in literals:
                        leaks.append((path.name, f))
            for lit in literals:
                if len(lit) >= 4 and not _HEXISH.match(lit) and lit not in public_blob \
                        and lit in suspect:
                    leaks.append((path.name, lit))
    return leaks


# ---------------------------------------------------------------------------
# calibration harness


@dataclass
class EngineHarness:
    """Times calibration runs on the simulated clouds (see ``costmodel.calibrate``)."""

    catalog: Catalog
    plain: Mapping[str, Table]
    key: SecretKey
    config: EngineConfig = EngineConfig()
    queries: Sequence[str] = ()
    limit_relation: str = "lineitem"
    combine_private: Sequence[str] = ()
    combine_public_sensitive: Sequence[str] = ()

    def __post_init__(self):
        from .workload import CALIBRATION_QUERIES, COMBINE_SPLIT_PRIVATE, COMBINE_SPLIT_PUBLIC_SENSITIVE

        self.queries = tuple(self.queries) or CALIBRATION_QUERIES
        self.combine_private = tuple(self.combine_private) or COMBINE_SPLIT_PRIVATE
        self.combine_public_sensitive = (tuple(self.combine_public_sensitive)
                                         or COMBINE_SPLIT_PUBLIC_SENSITIVE)
        every = self.catalog.attribute_names
        plain_cat = self.catalog.with_sensitivity(())
        self._public = build_stores(plain_cat.with_placement(()), self.plain, self.key)
        self._private = build_stores(plain_cat.with_placement(every), self.plain, self.key)
        self._split: Stores | None = None

    @property
    def n_queries(self) -> int:
        return len(self.queries)

    def process(self, cloud: str, query_index: int) -> tuple[float, float]:
        from .queryir import compile_query, parse

        stores = self._public if cloud == PUBLIC else self._private
        q = parse(self.queries[query_index], stores.catalog)
        hp = compile_query(q, stores.catalog, stores.schemes)
        subplans = hp.public if cloud == PUBLIC else hp.private
        out, meter, _ = _run_subplans(subplans, stores.store(cloud))
        rate = self.config.public_rate if cloud == PUBLIC else self.config.private_rate
        return rate * meter.processed, sum(t.nbytes() for t in out)

    def _limited(self, fraction: float) -> Table:
        t = self.plain[self.limit_relation]
        n = max(1, int(round(fraction * len(t))))
        return t.take(np.arange(n))

    def transfer(self, fraction: float) -> tuple[float, float]:
        t = self._limited(fraction)
        b = t.nbytes()
        return self.config.network_rate * b, b

    def combine(self, fraction: float) -> tuple[float, float]:
        from .queryir import compile_query, parse

        rel = self.limit_relation
        if self._split is None:
            private = {f"{rel}.{c}" for c in self.combine_private}
            sensitive = {f"{rel}.{c}" for c in self.combine_public_sensitive}
            cat = self.catalog.with_placement(private).with_sensitivity(sensitive)
            self._split = build_stores(cat, self.plain, self.key)
        full = self._split
        n = max(1, int(round(fraction * len(self.plain[rel]))))
        idx = np.arange(n)

        def cut(store: Store) -> Store:
            return Store(store.cloud, {r: (t.take(idx) if r == rel else t) for r, t in store.tables.items()})

        stores = Stores(cut(full.public), cut(full.private), full.private_set, full.catalog, full.schemes)
        q = parse(f"SELECT * FROM {rel}", stores.catalog)
        hp = compile_query(q, stores.catalog, stores.schemes)
        _, trace = execute(hp, stores, self.key, concurrent=False, config=self.config)
        return trace.decrypt.sim_time + trace.combine.sim_time, trace.combine.bytes
