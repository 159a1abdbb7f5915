"""Domain partitioning (bucketization) of sensitive attributes.

Each sensitive attribute's domain is cut into partitions; every partition
gets an opaque identifier from a keyed SHA-256 (``ident``). A value maps to
the identifier of its partition (``Map``) and query predicates map to sets
of identifiers, so the public cloud can pre-filter encrypted rows. Mapped
predicates are always a superset of the exact answer.

Numeric and date domains use equal-width partitions over the statistics'
``[min, max]``. The first and last partitions are open-ended so stale
statistics never lose a row. Text domains use 36 partitions keyed on the
lowercased first character (``a``-``z`` then ``0``-``9``) plus one overflow
partition for everything else.
"""

from __future__ import annotations

import bisect
import hashlib
import logging
import math
import string
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

import numpy as np

from .catalog import AttributeMeta, Catalog, ColumnStats, ORDERED_DATATYPES
from .errors import DomainError, UnsupportedDatatypeError, UnsupportedPredicateError

log = logging.getLogger(__name__)
_clamp_warned: set[tuple[str, int]] = set()   # warn once per attribute and count

TEXT_ALPHABET = string.ascii_lowercase + string.digits
TEXT_PARTITIONS = len(TEXT_ALPHABET)  # 36
ID_BYTES = 8

# Default partition counts per datatype, from log2 of the datatype range.
INTEGER_RANGE = (-2_147_483_646, 2_147_483_647)
DECIMAL_RANGE = (-9_999_999_999.99, 9_999_999_999.99)


def compute_num_partitions(lo: float, hi: float) -> int:
    """``floor(log2(hi - lo))``, never below one."""
    if hi < lo:
        raise DomainError(f"empty domain: max {hi!r} < min {lo!r}")
    span = hi - lo
    if span <= 1:
        return 1
    return max(1, math.floor(math.log2(span)))


def default_partition_count(datatype: str) -> int:
    if datatype == "text":
        return TEXT_PARTITIONS
    if datatype == "decimal":
        return compute_num_partitions(*DECIMAL_RANGE)
    if datatype in ("integer", "date"):
        return compute_num_partitions(*INTEGER_RANGE)
    raise UnsupportedDatatypeError(datatype)


def ident(key: bytes, attribute: str, ordinal: int) -> int:
    h = hashlib.sha256(key + b"\x00" + attribute.encode() + b"\x00" + ordinal.to_bytes(4, "big"))
    return int.from_bytes(h.digest()[:ID_BYTES], "big")


def format_id(pid: int) -> str:
    return f"{pid:016x}"


def parse_id(text: str) -> int:
    return int(text, 16)


@dataclass(frozen=True)
class BucketScheme:
    attribute: str          # qualified attribute name
    datatype: str
    partition_count: int
    boundaries: tuple[float, ...]   # partition_count + 1 cut points; empty for text
    ident_key: bytes = field(repr=False)
    ident_ids: tuple[int, ...] = ()

    def __post_init__(self):
        if len(set(self.ident_ids)) != len(self.ident_ids):
            raise ValueError(f"identifier collision in scheme for {self.attribute}")
        object.__setattr__(self, "_ordinal", {pid: i for i, pid in enumerate(self.ident_ids)})

    @property
    def is_text(self) -> bool:
        return self.datatype == "text"

    @property
    def overflow_id(self) -> int | None:
        return self.ident_ids[TEXT_PARTITIONS] if self.is_text else None

    def ordinal(self, pid: int) -> int:
        return self._ordinal[pid]

    def partition_of(self, v: Any) -> int:
        """Ordinal of the partition holding ``v`` (out-of-domain values clamp)."""
        if self.is_text:
            if not v:
                return TEXT_PARTITIONS
            pos = TEXT_ALPHABET.find(str(v)[0].lower())
            return TEXT_PARTITIONS if pos < 0 else pos
        i = bisect.bisect_right(self.boundaries, v) - 1
        return min(max(i, 0), self.partition_count - 1)

    def interval(self, ordinal: int) -> tuple[float, float]:
        """Value interval ``[lo, hi)`` of a numeric partition, ends extended to infinity."""
        lo = -math.inf if ordinal == 0 else self.boundaries[ordinal]
        hi = math.inf if ordinal == self.partition_count - 1 else self.boundaries[ordinal + 1]
        return lo, hi

    def map_array(self, values: np.ndarray) -> np.ndarray:
        """Vectorised :func:`map_value` returning uint64 identifiers."""
        ids = np.asarray(self.ident_ids, dtype=np.uint64)
        if self.is_text:
            ords = np.fromiter((self.partition_of(v) for v in values), dtype=np.int64,
                               count=len(values))
        else:
            cuts = np.asarray(self.boundaries, dtype=np.float64)
            ords = np.searchsorted(cuts, np.asarray(values, dtype=np.float64), side="right") - 1
            ords = np.clip(ords, 0, self.partition_count - 1)
        return ids[ords]

    def to_dict(self, include_key: bool = True) -> dict:
        d = {
            "attribute": self.attribute,
            "datatype": self.datatype,
            "partition_count": self.partition_count,
            "boundaries": list(self.boundaries),
            "ident_ids": [format_id(i) for i in self.ident_ids],
        }
        if include_key:
            d["ident_key"] = self.ident_key.hex()
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "BucketScheme":
        return cls(
            attribute=d["attribute"],
            datatype=d["datatype"],
            partition_count=int(d["partition_count"]),
            boundaries=tuple(float(b) for b in d["boundaries"]),
            ident_key=bytes.fromhex(d.get("ident_key", "")),
            ident_ids=tuple(parse_id(i) for i in d["ident_ids"]),
        )


def _discrete_span(datatype: str, cs: ColumnStats) -> tuple[float, float]:
    lo, hi = cs.min, cs.max
    if datatype in ("integer", "date"):
        return float(lo), float(hi) + 1.0  # [min, max + 1) over integers
    return float(lo), float(hi)


def build_scheme(attr: AttributeMeta, stats: ColumnStats, partition_count: int,
                 ident_key: bytes) -> BucketScheme:
    if attr.datatype == "text":
        n = TEXT_PARTITIONS
        ids = tuple(ident(ident_key, attr.qualname, i) for i in range(TEXT_PARTITIONS + 1))
        return BucketScheme(attr.qualname, "text", n, (), ident_key, ids)
    if attr.datatype not in ORDERED_DATATYPES:
        raise UnsupportedDatatypeError(attr.datatype)
    if partition_count < 1:
        raise DomainError("partition_count must be at least 1")
    n = partition_count
    if stats.distinct_count and n > stats.distinct_count:
        if (attr.qualname, n) not in _clamp_warned:
            _clamp_warned.add((attr.qualname, n))
            log.warning("%s: %d partitions exceed %d distinct values; clamping",
                        attr.qualname, n, stats.distinct_count)
        n = stats.distinct_count
    if stats.min is None or stats.max is None:
        lo, hi = 0.0, 1.0
        n = 1
    else:
        lo, hi = _discrete_span(attr.datatype, stats)
    width = hi - lo
    # lo + width * i / n keeps doubled partition counts exact refinements.
    cuts = tuple(lo + width * i / n for i in range(n)) + (hi,)
    ids = tuple(ident(ident_key, attr.qualname, i) for i in range(n))
    return BucketScheme(attr.qualname, attr.datatype, n, cuts, ident_key, ids)


def map_value(scheme: BucketScheme, v: Any) -> int:
    return scheme.ident_ids[scheme.partition_of(v)]


SchemeRegistry = dict  # qualified attribute name -> BucketScheme


def build_registry(catalog: Catalog, ident_key: bytes,
                   partition_counts: Mapping[str, int] | None = None,
                   override: int | None = None) -> dict[str, BucketScheme]:
    """Schemes for every sensitive attribute of ``catalog``.

    ``override`` forces one partition count on every ordered attribute (text
    keeps its fixed 36); ``partition_counts`` sets it per attribute.
    """
    partition_counts = partition_counts or {}
    reg = {}
    for a in catalog.attributes:
        if not a.sensitive:
            continue
        n = partition_counts.get(a.qualname)
        if n is None:
            n = override if override is not None else default_partition_count(a.datatype)
        reg[a.qualname] = build_scheme(a, catalog.column_stats(a.qualname), n, ident_key)
    return reg


def registry_to_dict(reg: Mapping[str, BucketScheme], include_key: bool = True) -> dict:
    return {name: s.to_dict(include_key) for name, s in sorted(reg.items())}


def registry_from_dict(d: Mapping) -> dict[str, BucketScheme]:
    return {name: BucketScheme.from_dict(s) for name, s in d.items()}


# -- predicate mapping -------------------------------------------------

@dataclass(frozen=True)
class MappedCondition:
    """Identifier-set form of a selection predicate over one attribute."""

    attribute: str
    identifier_set: frozenset[int]
    original: Any = field(default=None, compare=False)

    def public_dict(self) -> dict:
        """Serialisable form safe to ship to the public cloud."""
        return {"kind": "mapped_select", "attribute": self.attribute,
                "ids": sorted(format_id(i) for i in self.identifier_set)}


@dataclass(frozen=True)
class MappedJoin:
    """Pairs of partition identifiers whose partitions can hold equal values."""

    left: str
    right: str
    pairs: frozenset[tuple[int, int]]
    original: Any = field(default=None, compare=False)

    def public_dict(self) -> dict:
        return {"kind": "mapped_join", "left": self.left, "right": self.right,
                "pairs": sorted([format_id(a), format_id(b)] for a, b in self.pairs)}


def _text_candidates(lo: str | None, hi: str | None) -> set[int]:
    """Text partitions that could contain a string in ``[lo, hi]`` (conservative)."""
    out = {TEXT_PARTITIONS}
    for i, ch in enumerate(TEXT_ALPHABET):
        for c in {ch, ch.upper()}:
            if lo is not None and lo and c < lo[0]:
                continue
            if hi is not None and (not hi or c > hi[0]):
                continue
            out.add(i)
    return out


def _range_ordinals(scheme: BucketScheme, lo: float | None, lo_strict: bool,
                    hi: float | None, hi_strict: bool) -> set[int]:
    out = set()
    for i in range(scheme.partition_count):
        plo, phi = scheme.interval(i)
        # the partition holds values v with plo <= v < phi
        if lo is not None and not (phi > lo):
            continue
        if hi is not None and (plo > hi or (hi_strict and plo >= hi)):
            continue
        out.add(i)
    return out


def condition_ordinals(scheme: BucketScheme, op: str, value: Any, value2: Any = None) -> set[int]:
    """Partition ordinals that can satisfy ``attr <op> value``."""
    if scheme.is_text:
        if op == "=":
            return {scheme.partition_of(value)}
        if op in ("<", "<="):
            return _text_candidates(None, value)
        if op in (">", ">="):
            return _text_candidates(value, None)
        if op == "between":
            if value > value2:
                return set()
            return _text_candidates(value, value2)
        raise UnsupportedPredicateError(f"operator {op!r}")
    if op == "=":
        return {scheme.partition_of(value)}
    if op in ("<", "<="):
        return _range_ordinals(scheme, None, False, value, op == "<")
    if op in (">", ">="):
        return _range_ordinals(scheme, value, op == ">", None, False)
    if op == "between":
        if value > value2:
            return set()
        return _range_ordinals(scheme, value, False, value2, False)
    raise UnsupportedPredicateError(f"operator {op!r}")


def map_condition(registry: Mapping[str, BucketScheme], predicate: Any):
    """Map a predicate onto identifier columns.

    Comparisons/BETWEEN over a bucketized attribute become a
    :class:`MappedCondition`; an equi-join between two bucketized attributes
    becomes a :class:`MappedJoin`; anything over non-bucketized attributes
    is returned unchanged.
    """
    from .queryir import Between, Comparison, JoinEq  # local: queryir imports this module

    if isinstance(predicate, JoinEq):
        ls = registry.get(predicate.left.qualname)
        rs = registry.get(predicate.right.qualname)
        if ls is None and rs is None:
            return predicate
        if ls is None or rs is None:
            raise UnsupportedPredicateError(
                f"join {predicate} mixes a bucketized and a plaintext attribute")
        return MappedJoin(ls.attribute, rs.attribute, frozenset(join_pairs(ls, rs)), predicate)
    if isinstance(predicate, Comparison):
        scheme = registry.get(predicate.attr.qualname)
        if scheme is None:
            return predicate
        ords = condition_ordinals(scheme, predicate.op, predicate.value)
    elif isinstance(predicate, Between):
        scheme = registry.get(predicate.attr.qualname)
        if scheme is None:
            return predicate
        ords = condition_ordinals(scheme, "between", predicate.low, predicate.high)
    else:
        raise UnsupportedPredicateError(f"cannot map predicate {predicate!r}")
    ids = frozenset(scheme.ident_ids[i] for i in ords)
    return MappedCondition(scheme.attribute, ids, predicate)


def join_pairs(left: BucketScheme, right: BucketScheme) -> set[tuple[int, int]]:
    if left.is_text != right.is_text:
        raise UnsupportedPredicateError("join between text and ordered bucketized attributes")
    if left.is_text:
        return {(left.ident_ids[i], right.ident_ids[i]) for i in range(TEXT_PARTITIONS + 1)}
    pairs = set()
    for i in range(left.partition_count):
        alo, ahi = left.interval(i)
        for j in range(right.partition_count):
            blo, bhi = right.interval(j)
            if max(alo, blo) < min(ahi, bhi):
                pairs.add((left.ident_ids[i], right.ident_ids[j]))
    return pairs


def mapped_fraction(scheme: BucketScheme, ids: Iterable[int]) -> float:
    """Share of partitions selected, used for cardinality estimates."""
    return min(1.0, len(set(ids)) / scheme.partition_count)
