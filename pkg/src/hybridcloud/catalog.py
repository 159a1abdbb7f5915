"""Schema, statistics and placement state for a hybrid-cloud deployment.

The catalog is the single source of truth shared by every other module. It
is an immutable value: placement changes produce a new catalog.

Catalog file format (YAML)::

    capacity: 120            # private-cloud capacity in storage units
    size_unit: 1024          # bytes per storage unit
    relations:
      customer:
        tuple_id: _tid       # synthetic row id replicated into every fragment
        attributes:
          - {name: c_custkey, type: integer, sensitive: false, size: 1}
          - {name: c_mktsegment, type: text, sensitive: true, size: 2, placement: private}
    stats:
      customer:
        row_count: 150
        columns:
          c_custkey: {distinct: 150, min: 1, max: 150, byte_width: 4}
          c_mktsegment: {distinct: 5, min: AUTOMOBILE, max: MACHINERY, byte_width: 9}

Dates are written as ISO strings and held internally as days since
1970-01-01. ``placement`` is optional and defaults to ``public``.
"""

from __future__ import annotations

import datetime as _dt
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Mapping

import yaml

from .errors import CapacityError, CatalogParseError, CoverageError, ValidationError

DATATYPES = ("integer", "decimal", "text", "date")
ORDERED_DATATYPES = ("integer", "decimal", "date")
PUBLIC = "public"
PRIVATE = "private"
DEFAULT_TUPLE_ID = "_tid"
EPOCH = _dt.date(1970, 1, 1)


def date_to_days(value: _dt.date | str) -> int:
    if isinstance(value, str):
        value = _dt.date.fromisoformat(value.strip())
    return (value - EPOCH).days


def days_to_date(days: int) -> _dt.date:
    return EPOCH + _dt.timedelta(days=int(days))


def coerce_value(datatype: str, value: Any) -> Any:
    """Convert a raw value (file field, literal) into its internal domain form."""
    if datatype == "integer":
        if isinstance(value, float) and not value.is_integer():
            raise ValueError(f"non-integral value {value!r} for integer attribute")
        return int(value)
    if datatype == "decimal":
        return float(value)
    if datatype == "date":
        if isinstance(value, (int,)) and not isinstance(value, bool):
            return int(value)
        if isinstance(value, _dt.date):
            return date_to_days(value)
        return date_to_days(str(value))
    if datatype == "text":
        return str(value)
    raise ValidationError(f"unknown datatype {datatype!r}")


def format_value(datatype: str, value: Any) -> str:
    """Inverse of :func:`coerce_value` for text files."""
    if datatype == "date":
        return days_to_date(value).isoformat()
    if datatype == "decimal":
        return repr(float(value))
    return str(value)


@dataclass(frozen=True)
class AttributeMeta:
    name: str
    relation: str
    datatype: str
    sensitive: bool = False
    size: int = 0
    placement: str = PUBLIC

    @property
    def qualname(self) -> str:
        return f"{self.relation}.{self.name}"


@dataclass(frozen=True)
class ColumnStats:
    distinct_count: int
    min: Any
    max: Any
    byte_width: int


@dataclass(frozen=True)
class RelationStats:
    relation: str
    row_count: int
    columns: Mapping[str, ColumnStats] = field(default_factory=dict)


@dataclass(frozen=True)
class RelationSchema:
    name: str
    attributes: tuple[str, ...]
    tuple_id: str = DEFAULT_TUPLE_ID


@dataclass(frozen=True)
class FragmentSpec:
    """Columns of one relation stored on one cloud (tuple id first)."""

    relation: str
    cloud: str
    tuple_id: str
    attributes: tuple[str, ...]


@dataclass(frozen=True)
class PlacementPlan:
    """A split of the attribute set into private and public parts."""

    private_set: frozenset[str]
    public_set: frozenset[str]
    achieved_cost: float | None = None
    method: str = "manual"

    @classmethod
    def from_private(cls, catalog: "Catalog", private: Iterable[str], **kw) -> "PlacementPlan":
        private = frozenset(private)
        return cls(private, frozenset(catalog.attribute_names) - private, **kw)

    def private_size(self, catalog: "Catalog") -> int:
        return sum(catalog.attribute(a).size for a in self.private_set)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "achieved_cost": self.achieved_cost,
            "private": sorted(self.private_set),
            "public": sorted(self.public_set),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "PlacementPlan":
        return cls(frozenset(d["private"]), frozenset(d["public"]),
                   d.get("achieved_cost"), d.get("method", "manual"))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "PlacementPlan":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class Catalog:
    relations: tuple[RelationSchema, ...]
    attributes: tuple[AttributeMeta, ...]
    stats: Mapping[str, RelationStats]
    capacity: int = 0
    size_unit: int = 1024 * 1024

    def __post_init__(self):
        index = {a.qualname: a for a in self.attributes}
        object.__setattr__(self, "_index", index)
        by_name: dict[str, list[AttributeMeta]] = {}
        for a in self.attributes:
            by_name.setdefault(a.name, []).append(a)
        object.__setattr__(self, "_by_name", by_name)

    # -- lookup -------------------------------------------------------
    @property
    def attribute_names(self) -> tuple[str, ...]:
        return tuple(a.qualname for a in self.attributes)

    @property
    def relation_names(self) -> tuple[str, ...]:
        return tuple(r.name for r in self.relations)

    def attribute(self, qualname: str) -> AttributeMeta:
        try:
            return self._index[qualname]
        except KeyError:
            raise KeyError(f"no attribute {qualname!r} in catalog") from None

    def has_attribute(self, qualname: str) -> bool:
        return qualname in self._index

    def relation(self, name: str) -> RelationSchema:
        for r in self.relations:
            if r.name == name:
                return r
        raise KeyError(f"no relation {name!r} in catalog")

    def resolve(self, name: str, relations: Iterable[str] | None = None) -> list[AttributeMeta]:
        """Attributes called ``name``, restricted to ``relations`` if given."""
        found = self._by_name.get(name, [])
        if relations is not None:
            allowed = set(relations)
            found = [a for a in found if a.relation in allowed]
        return list(found)

    def attributes_of(self, relation: str) -> tuple[AttributeMeta, ...]:
        return tuple(a for a in self.attributes if a.relation == relation)

    def column_stats(self, qualname: str) -> ColumnStats:
        a = self.attribute(qualname)
        return self.stats[a.relation].columns[a.name]

    # -- placement ----------------------------------------------------
    @property
    def private_set(self) -> frozenset[str]:
        return frozenset(a.qualname for a in self.attributes if a.placement == PRIVATE)

    @property
    def public_set(self) -> frozenset[str]:
        return frozenset(a.qualname for a in self.attributes if a.placement == PUBLIC)

    @property
    def private_size(self) -> int:
        return sum(a.size for a in self.attributes if a.placement == PRIVATE)

    @property
    def total_size(self) -> int:
        return sum(a.size for a in self.attributes)

    def with_placement(self, private: Iterable[str]) -> "Catalog":
        """Placement update without capacity checks (used for what-if costing)."""
        private = frozenset(private)
        attrs = tuple(replace(a, placement=PRIVATE if a.qualname in private else PUBLIC)
                      for a in self.attributes)
        return replace(self, attributes=attrs)

    def with_sensitivity(self, sensitive: Iterable[str]) -> "Catalog":
        sensitive = frozenset(sensitive)
        attrs = tuple(replace(a, sensitive=a.qualname in sensitive) for a in self.attributes)
        return replace(self, attributes=attrs)

    def fragments(self) -> list[FragmentSpec]:
        """Vertical fragments implied by the current placement.

        A relation split across clouds yields two fragments, each carrying
        the relation's tuple id.
        """
        out = []
        for rel in self.relations:
            for cloud in (PUBLIC, PRIVATE):
                names = tuple(a.name for a in self.attributes_of(rel.name) if a.placement == cloud)
                if names:
                    out.append(FragmentSpec(rel.name, cloud, rel.tuple_id, names))
        return out

    def validate(self) -> None:
        seen = set()
        rel_names = set()
        for rel in self.relations:
            if rel.name in rel_names:
                raise ValidationError(f"duplicate relation {rel.name!r}")
            rel_names.add(rel.name)
            if rel.tuple_id in rel.attributes:
                raise ValidationError(f"tuple id {rel.tuple_id!r} of {rel.name!r} clashes with an attribute")
        for a in self.attributes:
            if a.qualname in seen:
                raise ValidationError(f"duplicate attribute {a.qualname!r}")
            seen.add(a.qualname)
            if a.relation not in rel_names:
                raise ValidationError(f"attribute {a.qualname!r} names unknown relation")
            if a.datatype not in DATATYPES:
                raise ValidationError(f"attribute {a.qualname!r}: unknown datatype {a.datatype!r}")
            if a.size < 0:
                raise ValidationError(f"attribute {a.qualname!r}: negative size")
            if a.placement not in (PUBLIC, PRIVATE):
                raise ValidationError(f"attribute {a.qualname!r}: bad placement {a.placement!r}")
        if self.capacity < 0:
            raise ValidationError("capacity must be non-negative")
        for rel in self.relations:
            st = self.stats.get(rel.name)
            if st is None:
                raise ValidationError(f"missing stats for relation {rel.name!r}")
            if st.row_count < 0:
                raise ValidationError(f"{rel.name}: negative row_count")
            for name in rel.attributes:
                cs = st.columns.get(name)
                if cs is None:
                    raise ValidationError(f"missing stats for column {rel.name}.{name}")
                if cs.distinct_count > st.row_count:
                    raise ValidationError(f"{rel.name}.{name}: distinct_count exceeds row_count")
                if st.row_count and cs.min is not None and cs.min > cs.max:
                    raise ValidationError(f"{rel.name}.{name}: min > max")
        if self.private_size > self.capacity:
            raise CapacityError(
                f"private attributes need {self.private_size} units, capacity is {self.capacity}")


def apply_placement(catalog: Catalog, plan: PlacementPlan) -> Catalog:
    names = set(catalog.attribute_names)
    if plan.private_set & plan.public_set:
        dup = sorted(plan.private_set & plan.public_set)
        raise CoverageError(f"attributes placed on both clouds: {dup}")
    covered = plan.private_set | plan.public_set
    if covered != names:
        missing = sorted(names - covered)
        extra = sorted(covered - names)
        raise CoverageError(f"plan coverage mismatch: missing={missing} unknown={extra}")
    size = sum(catalog.attribute(a).size for a in plan.private_set)
    if size > catalog.capacity:
        raise CapacityError(f"plan needs {size} private units, capacity is {catalog.capacity}")
    return catalog.with_placement(plan.private_set)


# -- file format -------------------------------------------------------

def _stat_value(datatype: str, raw: Any) -> Any:
    if raw is None:
        return None
    return coerce_value(datatype, raw)


def catalog_from_dict(doc: Mapping) -> Catalog:
    if not isinstance(doc, Mapping):
        raise CatalogParseError("catalog document must be a mapping")
    try:
        rels_doc = doc["relations"]
        stats_doc = doc.get("stats", {}) or {}
        relations, attributes, stats = [], [], {}
        for rel_name, rdoc in rels_doc.items():
            rdoc = rdoc or {}
            names = []
            for adoc in rdoc.get("attributes", []):
                datatype = str(adoc["type"])
                attributes.append(AttributeMeta(
                    name=str(adoc["name"]),
                    relation=str(rel_name),
                    datatype=datatype,
                    sensitive=bool(adoc.get("sensitive", False)),
                    size=int(adoc.get("size", 0)),
                    placement=str(adoc.get("placement", PUBLIC)),
                ))
                names.append(str(adoc["name"]))
            relations.append(RelationSchema(str(rel_name), tuple(names),
                                            str(rdoc.get("tuple_id", DEFAULT_TUPLE_ID))))
        types = {(a.relation, a.name): a.datatype for a in attributes}
        for rel_name, sdoc in stats_doc.items():
            cols = {}
            for col, cdoc in (sdoc.get("columns") or {}).items():
                dt = types.get((str(rel_name), str(col)), "text")
                cols[str(col)] = ColumnStats(
                    distinct_count=int(cdoc["distinct"]),
                    min=_stat_value(dt, cdoc.get("min")),
                    max=_stat_value(dt, cdoc.get("max")),
                    byte_width=int(cdoc.get("byte_width", 8)),
                )
            stats[str(rel_name)] = RelationStats(str(rel_name), int(sdoc["row_count"]), cols)
        catalog = Catalog(
            relations=tuple(relations),
            attributes=tuple(attributes),
            stats=stats,
            capacity=int(doc.get("capacity", 0)),
            size_unit=int(doc.get("size_unit", 1024 * 1024)),
        )
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise CatalogParseError(f"malformed catalog: {exc!r}") from exc
    catalog.validate()
    return catalog


def catalog_to_dict(catalog: Catalog) -> dict:
    rels = {}
    for rel in catalog.relations:
        attrs = []
        for a in catalog.attributes_of(rel.name):
            attrs.append({"name": a.name, "type": a.datatype, "sensitive": a.sensitive,
                          "size": a.size, "placement": a.placement})
        rels[rel.name] = {"tuple_id": rel.tuple_id, "attributes": attrs}
    stats = {}
    for rel in catalog.relations:
        st = catalog.stats[rel.name]
        cols = {}
        for a in catalog.attributes_of(rel.name):
            cs = st.columns[a.name]
            cols[a.name] = {
                "distinct": cs.distinct_count,
                "min": None if cs.min is None else _yaml_scalar(a.datatype, cs.min),
                "max": None if cs.max is None else _yaml_scalar(a.datatype, cs.max),
                "byte_width": cs.byte_width,
            }
        stats[rel.name] = {"row_count": st.row_count, "columns": cols}
    return {"capacity": catalog.capacity, "size_unit": catalog.size_unit,
            "relations": rels, "stats": stats}


def _yaml_scalar(datatype: str, v: Any) -> Any:
    if datatype == "date":
        return days_to_date(v).isoformat()
    return v


def load_catalog(path: str | Path) -> Catalog:
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise CatalogParseError(f"{path}: {exc}") from exc
    return catalog_from_dict(doc)


def save_catalog(catalog: Catalog, path: str | Path) -> None:
    text = yaml.safe_dump(catalog_to_dict(catalog), sort_keys=False, default_flow_style=None,
                          width=120)
    Path(path).write_text(text)
