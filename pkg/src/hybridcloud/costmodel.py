"""Workload cost estimation over a placement, and weight calibration.

A query is split into public and private sub-plans; its cost is

    public   = sum over public sub-plans of w2 * input_bytes + w3 * output_bytes
    private  = sum over private sub-plans of w1 * output_bytes
    combine  = w4 * (public output bytes + private output bytes)
    c_i      = (public + private  |  max(public, private)) + combine

with the ``sum`` or ``max`` combination mode, and the workload cost is
``sum(freq_i * c_i)``. Byte counts are estimated rows times column widths;
encrypted columns count their on-disk etuple width.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Protocol, Sequence

import yaml

from .bucketize import BucketScheme, MappedCondition, MappedJoin, build_registry
from .catalog import PRIVATE, PUBLIC, Catalog, PlacementPlan
from .crypto import encrypted_width
from .errors import CalibrationError, MissingStatisticsError, ValidationError
from .queryir import (
    Between,
    Comparison,
    HybridPlan,
    Join,
    JoinEq,
    Project,
    Query,
    Scan,
    Select,
    TidJoin,
    compile_query,
)

log = logging.getLogger(__name__)

MODES = ("sum", "max")
TID_WIDTH = 8
ID_WIDTH = 8
TEXT_RANGE_SELECTIVITY = 1 / 3
COST_IDENT_KEY = b"hybridcloud-cost-model"


@dataclass(frozen=True)
class CostWeights:
    w1: float = 0.000545146   # private processing, per intermediate byte
    w2: float = 0.000072686   # public input scan, per byte
    w3: float = 0.000001488   # public -> private transfer, per byte
    w4: float = 0.0000041     # combine (decrypt, filter, join), per byte

    def __post_init__(self):
        for k, v in asdict(self).items():
            if not (v > 0 and math.isfinite(v)):
                raise ValidationError(f"weight {k} must be positive, got {v!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "CostWeights":
        return cls(**{k: float(d[k]) for k in ("w1", "w2", "w3", "w4")})

    def save(self, path: str | Path) -> None:
        Path(path).write_text(yaml.safe_dump(self.to_dict(), sort_keys=True))

    @classmethod
    def load(cls, path: str | Path) -> "CostWeights":
        doc = yaml.safe_load(Path(path).read_text())
        try:
            return cls.from_dict(doc)
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"{path}: bad weights file ({exc})") from exc


DEFAULT_WEIGHTS = CostWeights()


@dataclass(frozen=True)
class QueryCost:
    public_cost: float
    private_cost: float
    combine_cost: float
    freq: int
    c: float              # per-execution cost
    public_bytes: float = 0.0   # |R^pu_tmp|
    private_bytes: float = 0.0  # |R^pr_tmp|
    input_bytes: float = 0.0    # |R^pu_l|

    @property
    def total(self) -> float:
        return self.freq * self.c


@dataclass(frozen=True)
class CostBreakdown:
    queries: tuple[QueryCost, ...] = ()
    mode: str = "sum"

    @property
    def total(self) -> float:
        return sum(q.total for q in self.queries)


# ---------------------------------------------------------------------------
# cardinality


def _stats(catalog: Catalog, qualname: str):
    a = catalog.attribute(qualname)
    rs = catalog.stats.get(a.relation)
    if rs is None or a.name not in rs.columns:
        raise MissingStatisticsError(f"no statistics for {qualname}")
    return rs, rs.columns[a.name]


def _range_fraction(datatype: str, lo, hi, cmin, cmax) -> float:
    """Share of ``[cmin, cmax]`` inside ``[lo, hi]`` (None = unbounded)."""
    if cmin is None or cmax is None:
        return 0.0
    lo = cmin if lo is None else max(lo, cmin)
    hi = cmax if hi is None else min(hi, cmax)
    if datatype in ("integer", "date"):
        lo, hi = math.ceil(lo), math.floor(hi)
        return max(0, hi - lo + 1) / (cmax - cmin + 1)
    if cmax == cmin:
        return 1.0 if lo <= cmin <= hi else 0.0
    return max(0.0, hi - lo) / (cmax - cmin)


def selection_selectivity(p, catalog: Catalog, schemes: Mapping[str, BucketScheme] | None = None) -> float:
    """Fraction of rows a single selection predicate keeps."""
    if isinstance(p, MappedCondition):
        scheme = (schemes or {}).get(p.attribute)
        if scheme is None:
            raise MissingStatisticsError(f"no bucket scheme for {p.attribute}")
        return min(1.0, len(p.identifier_set) / scheme.partition_count)
    if isinstance(p, Comparison):
        _, cs = _stats(catalog, p.attr.qualname)
        dt = catalog.attribute(p.attr.qualname).datatype
        if p.op == "=":
            return 1.0 / max(cs.distinct_count, 1)
        if dt == "text":
            return TEXT_RANGE_SELECTIVITY
        step = 1 if dt in ("integer", "date") else 0
        v = p.value
        if p.op == "<":
            return _range_fraction(dt, None, v - step, cs.min, cs.max)
        if p.op == "<=":
            return _range_fraction(dt, None, v, cs.min, cs.max)
        if p.op == ">":
            return _range_fraction(dt, v + step, None, cs.min, cs.max)
        return _range_fraction(dt, v, None, cs.min, cs.max)
    if isinstance(p, Between):
        _, cs = _stats(catalog, p.attr.qualname)
        dt = catalog.attribute(p.attr.qualname).datatype
        if dt == "text":
            return TEXT_RANGE_SELECTIVITY if p.low <= p.high else 0.0
        if p.low > p.high:
            return 0.0
        return _range_fraction(dt, p.low, p.high, cs.min, cs.max)
    raise TypeError(f"not a selection predicate: {p!r}")


def join_selectivity(c, catalog: Catalog, schemes: Mapping[str, BucketScheme] | None = None) -> float:
    if isinstance(c, JoinEq):
        _, ls = _stats(catalog, c.left.qualname)
        _, rs = _stats(catalog, c.right.qualname)
        return 1.0 / max(ls.distinct_count, rs.distinct_count, 1)
    if isinstance(c, MappedJoin):
        schemes = schemes or {}
        ls, rs = schemes[c.left], schemes[c.right]
        return len(c.pairs) / (len(ls.ident_ids) * len(rs.ident_ids))
    if isinstance(c, TidJoin):
        return 1.0 / max(catalog.stats[c.relation].row_count, 1)
    raise TypeError(f"not a join predicate: {c!r}")


def estimate_cardinality(node, catalog: Catalog,
                         schemes: Mapping[str, BucketScheme] | None = None) -> float:
    """Estimated output rows of a plan node, composed bottom-up."""
    if isinstance(node, Scan):
        rs = catalog.stats.get(node.relation)
        if rs is None:
            raise MissingStatisticsError(f"no statistics for relation {node.relation}")
        return float(rs.row_count)
    if isinstance(node, Select):
        rows = estimate_cardinality(node.child, catalog, schemes)
        for p in node.predicates:
            if isinstance(p, (JoinEq, MappedJoin, TidJoin)):
                rows *= join_selectivity(p, catalog, schemes)
            else:
                rows *= selection_selectivity(p, catalog, schemes)
        return rows
    if isinstance(node, Join):
        rows = (estimate_cardinality(node.left, catalog, schemes)
                * estimate_cardinality(node.right, catalog, schemes))
        for c in node.conditions:
            rows *= join_selectivity(c, catalog, schemes)
        return rows
    if isinstance(node, Project):
        return estimate_cardinality(node.child, catalog, schemes)
    raise TypeError(f"unknown plan node {node!r}")


# ---------------------------------------------------------------------------
# bytes


def column_width(catalog: Catalog, qualname: str, encrypted: bool = False) -> int:
    rel, _, name = qualname.partition(".")
    if name == catalog.relation(rel).tuple_id:
        return TID_WIDTH
    _, cs = _stats(catalog, qualname)
    return encrypted_width(cs.byte_width) if encrypted else cs.byte_width


def _scans(node) -> list[Scan]:
    if isinstance(node, Scan):
        return [node]
    if isinstance(node, Join):
        return _scans(node.left) + _scans(node.right)
    return _scans(node.child)


def scan_bytes(scan: Scan, catalog: Catalog) -> float:
    """Bytes read by a fragment scan (encrypted columns include their id column)."""
    rows = catalog.stats[scan.relation].row_count
    width = 0
    for c in scan.columns:
        enc = (scan.cloud == PUBLIC and catalog.has_attribute(c) and catalog.attribute(c).sensitive)
        width += column_width(catalog, c, enc) + (ID_WIDTH if enc else 0)
    return float(rows * width)


def subplan_bytes(sp, catalog: Catalog, schemes) -> tuple[float, float]:
    """(input bytes, output bytes) of one sub-plan."""
    inp = sum(scan_bytes(s, catalog) for s in _scans(sp.root))
    rows = estimate_cardinality(sp.root, catalog, schemes)
    enc = set(sp.encrypted)
    width = sum(column_width(catalog, c, c in enc) for c in sp.outputs)
    return inp, rows * width


def hybrid_cost(hp: HybridPlan, catalog: Catalog, schemes, weights: CostWeights,
                mode: str = "sum", freq: int = 1) -> QueryCost:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    pub_in = pub_out = pr_out = 0.0
    public = private = 0.0
    for sp in hp.public:
        i, o = subplan_bytes(sp, catalog, schemes)
        pub_in += i
        pub_out += o
        public += weights.w2 * i + weights.w3 * o
    for sp in hp.private:
        _, o = subplan_bytes(sp, catalog, schemes)
        pr_out += o
        private += weights.w1 * o
    combine = weights.w4 * (pub_out + pr_out)
    local = public + private if mode == "sum" else max(public, private)
    return QueryCost(public, private, combine, freq, local + combine, pub_out, pr_out, pub_in)


# ---------------------------------------------------------------------------
# workload cost


def cost_schemes(catalog: Catalog, partition_override: int | None = None) -> dict[str, BucketScheme]:
    """Bucket schemes for estimation; identifiers are irrelevant so the key is fixed."""
    return build_registry(catalog, COST_IDENT_KEY, override=partition_override)


def _private_of(catalog: Catalog, plan) -> frozenset[str]:
    if plan is None:
        return catalog.private_set
    if isinstance(plan, PlacementPlan):
        return plan.private_set
    return frozenset(plan)


class WorkloadCostModel:
    """qpc for one workload and catalog, memoised per query and relevant placement.

    A query's plan depends only on where its referenced attributes live, so
    each query's cost is cached under (query index, referenced private set).
    Instances are safe to share between threads: the cache only ever gains
    entries computed from immutable inputs.
    """

    def __init__(self, workload: Sequence[Query], catalog: Catalog,
                 weights: CostWeights = DEFAULT_WEIGHTS, mode: str = "sum",
                 schemes: Mapping[str, BucketScheme] | None = None,
                 join_policy: str = "auto"):
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        self.workload = list(workload)
        self.catalog = catalog
        self.weights = weights
        self.mode = mode
        self.schemes = dict(schemes) if schemes is not None else cost_schemes(catalog)
        self.join_policy = join_policy
        self._refs = [frozenset(q.referenced()) for q in self.workload]
        self._cache: dict[tuple[int, frozenset[str]], QueryCost] = {}
        self.evaluations = 0

    def query_cost(self, i: int, private: frozenset[str]) -> QueryCost:
        key = (i, private & self._refs[i])
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        q = self.workload[i]
        cat = self.catalog.with_placement(key[1])
        hp = compile_query(q, cat, self.schemes, self.join_policy)
        qc = hybrid_cost(hp, cat, self.schemes, self.weights, self.mode, q.freq)
        self._cache[key] = qc
        return qc

    def breakdown(self, private: Iterable[str] | PlacementPlan | None = None) -> CostBreakdown:
        priv = _private_of(self.catalog, private)
        self.evaluations += 1
        return CostBreakdown(tuple(self.query_cost(i, priv) for i in range(len(self.workload))),
                             self.mode)

    def cost(self, private: Iterable[str] | PlacementPlan | None = None) -> float:
        return self.breakdown(private).total


def qpc(workload: Sequence[Query], catalog: Catalog, plan: PlacementPlan | Iterable[str] | None = None,
        weights: CostWeights = DEFAULT_WEIGHTS, mode: str = "sum",
        schemes: Mapping[str, BucketScheme] | None = None,
        join_policy: str = "auto") -> CostBreakdown:
    """Cost of running ``workload`` under ``plan`` (default: the catalog's placement)."""
    return WorkloadCostModel(workload, catalog, weights, mode, schemes, join_policy).breakdown(plan)


# ---------------------------------------------------------------------------
# calibration


class CalibrationHarness(Protocol):
    """What :func:`calibrate` needs from an execution environment.

    Each call returns ``(seconds, result_bytes)`` for one measurement.
    """

    def process(self, cloud: str, query_index: int) -> tuple[float, float]: ...

    def transfer(self, fraction: float) -> tuple[float, float]: ...

    def combine(self, fraction: float) -> tuple[float, float]: ...

    n_queries: int


@dataclass
class CalibrationReport:
    weights: CostWeights
    ok: bool
    samples: dict[str, list[tuple[float, float]]] = field(default_factory=dict)
    error: str = ""


LIMIT_FRACTIONS = tuple(round(0.1 * k, 1) for k in range(1, 11))


def _per_byte(t: float, b: float, what: str) -> float:
    if b <= 0:
        raise CalibrationError(f"{what}: measurement produced no bytes")
    return t / b


def calibrate_report(harness: CalibrationHarness) -> CalibrationReport:
    samples: dict[str, list[tuple[float, float]]] = {"w1": [], "w2": [], "w3": [], "w4": []}
    try:
        w1 = w2 = 0.0
        for i in range(harness.n_queries):
            t, b = harness.process(PRIVATE, i)
            samples["w1"].append((t, b))
            w1 += _per_byte(t, b, f"private query {i}")
            t, b = harness.process(PUBLIC, i)
            samples["w2"].append((t, b))
            w2 += _per_byte(t, b, f"public query {i}")
        w3 = w4 = 0.0
        for f in LIMIT_FRACTIONS:
            t, b = harness.transfer(f)
            samples["w3"].append((t, b))
            w3 += _per_byte(t, b, f"transfer {f:.0%}")
            t, b = harness.combine(f)
            samples["w4"].append((t, b))
            w4 += _per_byte(t, b, f"combine {f:.0%}")
        weights = CostWeights(w1, w2, w3 / len(LIMIT_FRACTIONS), w4 / len(LIMIT_FRACTIONS))
        return CalibrationReport(weights, True, samples)
    except Exception as exc:  # any failure aborts calibration; defaults stay in force
        log.warning("calibration aborted, keeping default weights: %s", exc)
        return CalibrationReport(DEFAULT_WEIGHTS, False, samples, str(exc))


def calibrate(harness: CalibrationHarness) -> CostWeights:
    """Estimate w1..w4 from timed runs; falls back to the defaults on any failure."""
    return calibrate_report(harness).weights
