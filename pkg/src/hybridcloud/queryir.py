"""SQL subset parsing, logical plans, rearrangement and hybrid splitting.

Supported grammar (case-insensitive keywords)::

    SELECT expr [AS name] {, expr [AS name]} | *
    FROM rel {, rel} {JOIN rel ON cond {AND cond}}
    [WHERE cond {AND cond}] [;]

    cond  := operand (= | < | <= | > | >=) operand
           | column BETWEEN literal AND literal
    expr  := arithmetic over columns and numeric literals (+ - * / parentheses)

Literals are numbers, 'quoted strings', DATE 'yyyy-mm-dd', bare dates
(1995-03-15) and bare words, which bind as text constants when they do not
name a column. Grouping, aggregates, OR/NOT, LIKE, IN, subqueries, ORDER BY
and LIMIT raise :class:`UnsupportedFeatureError`.

Columns are addressed as ``relation.attribute`` everywhere after binding.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Mapping, Sequence

from .bucketize import BucketScheme, MappedCondition, MappedJoin, map_condition, parse_id
from .catalog import PRIVATE, PUBLIC, Catalog, coerce_value, format_value
from .errors import (
    BindError,
    QuerySyntaxError,
    UnsupportedFeatureError,
    UnsupportedPredicateError,
)

# ---------------------------------------------------------------------------
# expressions and predicates


@dataclass(frozen=True)
class AttrRef:
    relation: str | None
    name: str
    datatype: str | None = None

    @property
    def qualname(self) -> str:
        return f"{self.relation}.{self.name}" if self.relation else self.name

    def __str__(self):
        return self.qualname


@dataclass(frozen=True)
class Literal:
    value: Any
    kind: str  # number | string | date | word

    def __str__(self):
        return repr(self.value) if self.kind != "number" else str(self.value)


@dataclass(frozen=True)
class BinOp:
    op: str
    left: Any
    right: Any

    def __str__(self):
        return f"({self.left} {self.op} {self.right})"


@dataclass(frozen=True)
class Neg:
    operand: Any

    def __str__(self):
        return f"-{self.operand}"


@dataclass(frozen=True)
class Star:
    def __str__(self):
        return "*"


@dataclass(frozen=True)
class Projection:
    expr: Any
    label: str

    def __str__(self):
        return str(self.expr)


@dataclass(frozen=True)
class Comparison:
    attr: AttrRef
    op: str
    value: Any

    def __str__(self):
        return f"{self.attr} {self.op} {_fmt_const(self.attr, self.value)}"


@dataclass(frozen=True)
class Between:
    attr: AttrRef
    low: Any
    high: Any

    def __str__(self):
        return (f"{self.attr} BETWEEN {_fmt_const(self.attr, self.low)} "
                f"AND {_fmt_const(self.attr, self.high)}")


@dataclass(frozen=True)
class JoinEq:
    left: AttrRef
    right: AttrRef

    def __str__(self):
        return f"{self.left} = {self.right}"


@dataclass(frozen=True)
class TidJoin:
    """Reassembles two vertical fragments of one relation on its tuple id."""

    relation: str
    tuple_id: str

    @property
    def column(self) -> str:
        return f"{self.relation}.{self.tuple_id}"

    def __str__(self):
        return f"{self.column}[pu] = {self.column}[pr]"


def _fmt_const(attr: AttrRef, v: Any) -> str:
    if isinstance(v, Literal):
        return str(v)
    if attr.datatype == "date":
        return format_value("date", v)
    if isinstance(v, str):
        return repr(v)
    return str(v)


def expr_columns(expr) -> set[str]:
    if isinstance(expr, AttrRef):
        return {expr.qualname}
    if isinstance(expr, BinOp):
        return expr_columns(expr.left) | expr_columns(expr.right)
    if isinstance(expr, Neg):
        return expr_columns(expr.operand)
    if isinstance(expr, Projection):
        return expr_columns(expr.expr)
    return set()


def predicate_columns(p) -> set[str]:
    if isinstance(p, (Comparison, Between)):
        return {p.attr.qualname}
    if isinstance(p, JoinEq):
        return {p.left.qualname, p.right.qualname}
    if isinstance(p, TidJoin):
        return {p.column}
    if isinstance(p, MappedCondition):
        return {p.attribute}
    if isinstance(p, MappedJoin):
        return {p.left, p.right}
    raise TypeError(p)


# ---------------------------------------------------------------------------
# query


@dataclass(frozen=True)
class Query:
    projections: tuple[Projection, ...]
    sources: tuple[str, ...]
    predicates: tuple[Any, ...]
    freq: int = 1
    text: str = field(default="", compare=False)
    bound: bool = field(default=False, compare=False)

    @property
    def selections(self) -> list:
        return [p for p in self.predicates if not isinstance(p, JoinEq)]

    @property
    def joins(self) -> list[JoinEq]:
        return [p for p in self.predicates if isinstance(p, JoinEq)]

    def referenced(self) -> set[str]:
        cols = set()
        for pr in self.projections:
            cols |= expr_columns(pr.expr)
        for p in self.predicates:
            cols |= predicate_columns(p)
        return cols

    def with_freq(self, freq: int) -> "Query":
        if freq < 1:
            raise ValueError("freq must be a positive integer")
        return replace(self, freq=int(freq))

    def to_sql(self) -> str:
        sel = ", ".join(_expr_sql(p.expr) + ("" if p.label == _expr_sql(p.expr) else f" AS {p.label}")
                        for p in self.projections)
        sql = f"SELECT {sel} FROM {', '.join(self.sources)}"
        if self.predicates:
            sql += " WHERE " + " AND ".join(_pred_sql(p) for p in self.predicates)
        return sql


def _expr_sql(e) -> str:
    if isinstance(e, AttrRef):
        return e.qualname
    if isinstance(e, Literal):
        return str(e.value)
    if isinstance(e, BinOp):
        return f"({_expr_sql(e.left)} {e.op} {_expr_sql(e.right)})"
    if isinstance(e, Neg):
        return f"-{_expr_sql(e.operand)}"
    if isinstance(e, Star):
        return "*"
    return str(e)


def _const_sql(attr: AttrRef, v) -> str:
    if isinstance(v, Literal):
        if v.kind in ("string", "word"):
            return "'" + str(v.value).replace("'", "''") + "'"
        if v.kind == "date":
            return f"DATE '{v.value}'"
        return str(v.value)
    if attr.datatype == "date":
        return f"DATE '{format_value('date', v)}'"
    if isinstance(v, str):
        return "'" + v.replace("'", "''") + "'"
    return repr(v) if isinstance(v, float) else str(v)


def _pred_sql(p) -> str:
    if isinstance(p, Comparison):
        return f"{p.attr.qualname} {p.op} {_const_sql(p.attr, p.value)}"
    if isinstance(p, Between):
        return f"{p.attr.qualname} BETWEEN {_const_sql(p.attr, p.low)} AND {_const_sql(p.attr, p.high)}"
    if isinstance(p, JoinEq):
        return f"{p.left.qualname} = {p.right.qualname}"
    raise TypeError(p)


# ---------------------------------------------------------------------------
# lexer / parser

_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+|--[^\n]*)
  | (?P<date>\d{4}-\d{2}-\d{2}(?![\d.]))
  | (?P<number>\d+\.\d*|\.\d+|\d+)
  | (?P<string>'(?:[^']|'')*')
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><=|>=|<>|!=|[=<>*/+\-(),.;])
""", re.VERBOSE)

_UNSUPPORTED_WORDS = {
    "GROUP": "GROUP BY", "HAVING": "HAVING", "ORDER": "ORDER BY", "OR": "OR",
    "NOT": "NOT", "LIKE": "LIKE", "IN": "IN", "EXISTS": "EXISTS", "UNION": "UNION",
    "DISTINCT": "DISTINCT", "LIMIT": "LIMIT", "CASE": "CASE", "INTERVAL": "INTERVAL",
    "LEFT": "outer join", "RIGHT": "outer join", "OUTER": "outer join", "IS": "IS NULL",
    "EXTRACT": "EXTRACT",
}
_AGGREGATES = {"SUM", "AVG", "COUNT", "MIN", "MAX"}
_KEYWORDS = {"SELECT", "FROM", "WHERE", "AND", "BETWEEN", "AS", "DATE", "JOIN", "ON", "INNER"}


@dataclass
class _Tok:
    kind: str
    text: str
    pos: int

    @property
    def upper(self):
        return self.text.upper()


def _tokenize(sql: str) -> list[_Tok]:
    toks, pos = [], 0
    while pos < len(sql):
        m = _TOKEN_RE.match(sql, pos)
        if not m:
            raise QuerySyntaxError(f"unexpected character {sql[pos]!r}", pos)
        kind = m.lastgroup
        if kind != "ws":
            toks.append(_Tok(kind, m.group(), pos))
        pos = m.end()
    toks.append(_Tok("eof", "", len(sql)))
    return toks


class _Parser:
    def __init__(self, sql: str):
        self.sql = sql
        self.toks = _tokenize(sql)
        self.i = 0

    # token helpers
    @property
    def cur(self) -> _Tok:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> _Tok:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def advance(self) -> _Tok:
        t = self.toks[self.i]
        self.i += 1
        return t

    def is_kw(self, word: str) -> bool:
        return self.cur.kind == "ident" and self.cur.upper == word

    def expect_kw(self, word: str) -> None:
        if not self.is_kw(word):
            self._check_unsupported()
            raise QuerySyntaxError(f"expected {word}, found {self.cur.text or 'end of input'!r}",
                                   self.cur.pos)
        self.advance()

    def expect_op(self, op: str) -> None:
        if self.cur.kind != "op" or self.cur.text != op:
            raise QuerySyntaxError(f"expected {op!r}, found {self.cur.text or 'end of input'!r}",
                                   self.cur.pos)
        self.advance()

    def _check_unsupported(self) -> None:
        t = self.cur
        if t.kind == "ident":
            if t.upper in _UNSUPPORTED_WORDS:
                raise UnsupportedFeatureError(_UNSUPPORTED_WORDS[t.upper], f"position {t.pos}")
            if t.upper in _AGGREGATES and self.peek().text == "(":
                raise UnsupportedFeatureError(f"aggregate {t.upper}()", f"position {t.pos}")
        if t.kind == "op" and t.text in ("<>", "!="):
            raise UnsupportedFeatureError("inequality (<>)", f"position {t.pos}")

    # grammar
    def parse(self) -> tuple[list, list, list]:
        self.expect_kw("SELECT")
        projections = self.select_list()
        self.expect_kw("FROM")
        sources, predicates = self.from_list()
        if self.is_kw("WHERE"):
            self.advance()
            predicates += self.conjunction()
        if self.cur.kind == "op" and self.cur.text == ";":
            self.advance()
        if self.cur.kind != "eof":
            self._check_unsupported()
            raise QuerySyntaxError(f"unexpected {self.cur.text!r}", self.cur.pos)
        return projections, sources, predicates

    def select_list(self) -> list[Projection]:
        if self.cur.kind == "op" and self.cur.text == "*":
            self.advance()
            return [Projection(Star(), "*")]
        out = []
        while True:
            start = self.cur.pos
            e = self.expr()
            end = self.cur.pos
            label = self.sql[start:end].strip()
            if self.is_kw("AS"):
                self.advance()
                if self.cur.kind != "ident":
                    raise QuerySyntaxError("expected alias after AS", self.cur.pos)
                label = self.advance().text
            out.append(Projection(e, label))
            if self.cur.kind == "op" and self.cur.text == ",":
                self.advance()
                continue
            return out

    def relation_name(self) -> str:
        self._check_unsupported()
        if self.cur.kind == "op" and self.cur.text == "(":
            raise UnsupportedFeatureError("subquery", f"position {self.cur.pos}")
        if self.cur.kind != "ident" or self.cur.upper in _KEYWORDS:
            raise QuerySyntaxError("expected relation name", self.cur.pos)
        name = self.advance().text
        if self.cur.kind == "ident" and self.cur.upper not in _KEYWORDS \
                and self.cur.upper not in _UNSUPPORTED_WORDS:
            raise UnsupportedFeatureError("relation alias", f"position {self.cur.pos}")
        return name

    def from_list(self) -> tuple[list[str], list]:
        sources, preds = [self.relation_name()], []
        while True:
            if self.cur.kind == "op" and self.cur.text == ",":
                self.advance()
                sources.append(self.relation_name())
            elif self.is_kw("JOIN") or (self.is_kw("INNER") and self.peek().upper == "JOIN"):
                if self.is_kw("INNER"):
                    self.advance()
                self.advance()
                sources.append(self.relation_name())
                self.expect_kw("ON")
                preds += self.conjunction()
            else:
                self._check_unsupported()
                return sources, preds

    def conjunction(self) -> list:
        preds = [self.condition()]
        while self.is_kw("AND"):
            self.advance()
            preds.append(self.condition())
        self._check_unsupported()
        return preds

    def condition(self):
        self._check_unsupported()
        if self.cur.kind == "op" and self.cur.text == "(":
            if self.peek().kind == "ident" and self.peek().upper == "SELECT":
                raise UnsupportedFeatureError("subquery", f"position {self.cur.pos}")
            raise UnsupportedFeatureError("parenthesised condition", f"position {self.cur.pos}")
        pos = self.cur.pos
        left = self.operand()
        self._check_unsupported()
        if self.is_kw("BETWEEN"):
            self.advance()
            if not isinstance(left, AttrRef):
                raise QuerySyntaxError("BETWEEN needs a column on the left", pos)
            lo = self.literal()
            self.expect_kw("AND")
            hi = self.literal()
            return Between(left, lo, hi)
        if self.cur.kind != "op" or self.cur.text not in ("=", "<", "<=", ">", ">="):
            raise QuerySyntaxError(f"expected comparison operator, found {self.cur.text!r}",
                                   self.cur.pos)
        op = self.advance().text
        right = self.operand()
        if isinstance(left, AttrRef) and isinstance(right, AttrRef):
            if op != "=":
                raise UnsupportedFeatureError("non-equi column comparison", f"position {pos}")
            return JoinEq(left, right)
        if isinstance(left, AttrRef):
            return Comparison(left, op, right)
        if isinstance(right, AttrRef):
            flipped = {"=": "=", "<": ">", "<=": ">=", ">": "<", ">=": "<="}[op]
            return Comparison(right, flipped, left)
        raise QuerySyntaxError("comparison between two constants", pos)

    def operand(self):
        t = self.cur
        if t.kind == "ident" and t.upper not in _KEYWORDS:
            self._check_unsupported()
            return self.column()
        return self.literal()

    def column(self) -> AttrRef:
        name = self.advance().text
        if self.cur.kind == "op" and self.cur.text == "." and self.peek().kind == "ident":
            self.advance()
            return AttrRef(name, self.advance().text)
        return AttrRef(None, name)

    def literal(self) -> Literal:
        t = self.cur
        neg = False
        if t.kind == "op" and t.text == "-":
            self.advance()
            neg = True
            t = self.cur
        if t.kind == "number":
            self.advance()
            v = float(t.text) if ("." in t.text) else int(t.text)
            return Literal(-v if neg else v, "number")
        if neg:
            raise QuerySyntaxError("expected number after '-'", t.pos)
        if t.kind == "string":
            self.advance()
            return Literal(t.text[1:-1].replace("''", "'"), "string")
        if t.kind == "date":
            self.advance()
            return Literal(t.text, "date")
        if t.kind == "ident" and t.upper == "DATE":
            self.advance()
            s = self.cur
            if s.kind != "string":
                raise QuerySyntaxError("expected 'yyyy-mm-dd' after DATE", s.pos)
            self.advance()
            return Literal(s.text[1:-1], "date")
        if t.kind == "ident" and t.upper not in _KEYWORDS:
            self._check_unsupported()
            self.advance()
            return Literal(t.text, "word")
        self._check_unsupported()
        raise QuerySyntaxError(f"expected literal, found {t.text or 'end of input'!r}", t.pos)

    # arithmetic
    def expr(self):
        e = self.term()
        while self.cur.kind == "op" and self.cur.text in "+-" and self.cur.text:
            op = self.advance().text
            e = BinOp(op, e, self.term())
        return e

    def term(self):
        e = self.factor()
        while self.cur.kind == "op" and self.cur.text in ("*", "/"):
            op = self.advance().text
            e = BinOp(op, e, self.factor())
        return e

    def factor(self):
        t = self.cur
        self._check_unsupported()
        if t.kind == "op" and t.text == "(":
            if self.peek().kind == "ident" and self.peek().upper == "SELECT":
                raise UnsupportedFeatureError("subquery", f"position {t.pos}")
            self.advance()
            e = self.expr()
            self.expect_op(")")
            return e
        if t.kind == "op" and t.text == "-":
            self.advance()
            return Neg(self.factor())
        if t.kind == "number":
            self.advance()
            return Literal(float(t.text) if "." in t.text else int(t.text), "number")
        if t.kind == "ident" and t.upper not in _KEYWORDS:
            if self.peek().kind == "op" and self.peek().text == "(":
                raise UnsupportedFeatureError(f"function call {t.text}()", f"position {t.pos}")
            return self.column()
        raise QuerySyntaxError(f"unexpected {t.text or 'end of input'!r} in expression", t.pos)


def parse(sql_text: str, catalog: Catalog | None = None, freq: int = 1) -> Query:
    """Parse one statement; bind it against ``catalog`` when given."""
    projections, sources, predicates = _Parser(sql_text).parse()
    if len(set(sources)) != len(sources):
        raise UnsupportedFeatureError("self-join", "a relation appears twice in FROM")
    q = Query(tuple(projections), tuple(sources), tuple(predicates), freq, sql_text.strip())
    return bind(q, catalog) if catalog is not None else q


_FREQ_RE = re.compile(r"--\s*freq\s*:\s*(\d+)", re.IGNORECASE)


def parse_workload(text: str, catalog: Catalog | None = None) -> list[Query]:
    """Parse ``;``-separated statements, each optionally preceded by ``-- freq: N``."""
    out = []
    for chunk in _split_statements(text):
        m = _FREQ_RE.search(chunk)
        freq = int(m.group(1)) if m else 1
        body = "\n".join(line for line in chunk.splitlines()
                         if not line.strip().startswith("--")).strip()
        if body:
            out.append(parse(body, catalog, freq))
    return out


def _split_statements(text: str) -> list[str]:
    parts, buf, in_str = [], [], False
    for ch in text:
        if ch == "'":
            in_str = not in_str
        if ch == ";" and not in_str:
            parts.append("".join(buf))
            buf = []
        else:
            buf.append(ch)
    parts.append("".join(buf))
    return parts


def format_workload(queries: Sequence[Query]) -> str:
    return "".join(f"-- freq: {q.freq}\n{q.text or q.to_sql()};\n\n" for q in queries)


# ---------------------------------------------------------------------------
# binding


def _resolve(catalog: Catalog, ref: AttrRef, sources: Sequence[str]) -> AttrRef | None:
    if ref.relation is not None:
        if ref.relation not in sources:
            raise BindError(f"{ref.qualname}: relation {ref.relation!r} not in FROM")
        qn = f"{ref.relation}.{ref.name}"
        if not catalog.has_attribute(qn):
            raise BindError(f"unknown attribute {qn!r}")
        return AttrRef(ref.relation, ref.name, catalog.attribute(qn).datatype)
    found = catalog.resolve(ref.name, sources)
    if len(found) > 1:
        raise BindError(f"ambiguous attribute {ref.name!r}: "
                        + ", ".join(a.qualname for a in found))
    if not found:
        return None
    a = found[0]
    return AttrRef(a.relation, a.name, a.datatype)


def _bind_const(attr: AttrRef, lit) -> Any:
    if not isinstance(lit, Literal):
        return lit
    dt = attr.datatype
    try:
        if dt in ("integer", "decimal"):
            if lit.kind != "number":
                raise BindError(f"{attr}: numeric attribute compared with {lit}")
            return coerce_value(dt, lit.value)
        if dt == "date":
            if lit.kind not in ("date", "string"):
                raise BindError(f"{attr}: date attribute compared with {lit}")
            return coerce_value("date", lit.value)
        if lit.kind == "number":
            raise BindError(f"{attr}: text attribute compared with number {lit}")
        return str(lit.value)
    except ValueError as exc:
        raise BindError(f"{attr}: bad constant {lit}: {exc}") from exc


def _bind_expr(catalog, e, sources):
    if isinstance(e, AttrRef):
        r = _resolve(catalog, e, sources)
        if r is None:
            raise BindError(f"unknown attribute {e.name!r}")
        return r
    if isinstance(e, BinOp):
        return BinOp(e.op, _bind_expr(catalog, e.left, sources), _bind_expr(catalog, e.right, sources))
    if isinstance(e, Neg):
        return Neg(_bind_expr(catalog, e.operand, sources))
    return e


def bind(query: Query, catalog: Catalog) -> Query:
    """Resolve names against ``catalog`` and convert constants to domain values."""
    for s in query.sources:
        try:
            catalog.relation(s)
        except KeyError:
            raise BindError(f"unknown relation {s!r}") from None
    sources = query.sources
    projections = []
    for p in query.projections:
        if isinstance(p.expr, Star):
            for rel in sources:
                for a in catalog.attributes_of(rel):
                    projections.append(Projection(AttrRef(rel, a.name, a.datatype), a.qualname))
            continue
        projections.append(Projection(_bind_expr(catalog, p.expr, sources), p.label))
    preds = []
    for p in query.predicates:
        if isinstance(p, JoinEq):
            left = _resolve(catalog, p.left, sources)
            right = _resolve(catalog, p.right, sources)
            if left is None:
                raise BindError(f"unknown attribute {p.left.name!r}")
            if right is None:
                # bare word on the right of '=': a text constant
                if p.right.relation is None and left.datatype == "text":
                    preds.append(Comparison(left, "=", p.right.name))
                    continue
                raise BindError(f"unknown attribute {p.right.name!r}")
            if left.relation == right.relation:
                raise UnsupportedFeatureError("column comparison within one relation", str(p))
            if (left.datatype == "text") != (right.datatype == "text"):
                raise BindError(f"join {p} compares text with a non-text attribute")
            preds.append(JoinEq(left, right))
        elif isinstance(p, Comparison):
            attr = _resolve(catalog, p.attr, sources)
            if attr is None:
                raise BindError(f"unknown attribute {p.attr.name!r}")
            preds.append(Comparison(attr, p.op, _bind_const(attr, p.value)))
        elif isinstance(p, Between):
            attr = _resolve(catalog, p.attr, sources)
            if attr is None:
                raise BindError(f"unknown attribute {p.attr.name!r}")
            preds.append(Between(attr, _bind_const(attr, p.low), _bind_const(attr, p.high)))
        else:
            raise TypeError(p)
    q = Query(tuple(projections), tuple(sources), tuple(preds), query.freq, query.text, True)
    _check_connected(q)
    return q


def _check_connected(q: Query) -> None:
    if len(q.sources) <= 1:
        return
    reached = {q.sources[0]}
    changed = True
    while changed:
        changed = False
        for j in q.joins:
            a, b = j.left.relation, j.right.relation
            if (a in reached) != (b in reached):
                reached |= {a, b}
                changed = True
    missing = [s for s in q.sources if s not in reached]
    if missing:
        raise UnsupportedFeatureError("cross product",
                                      f"no equi-join connects {', '.join(missing)}")


# ---------------------------------------------------------------------------
# logical plans


@dataclass(frozen=True)
class Scan:
    relation: str
    cloud: str | None = None
    columns: tuple[str, ...] = ()  # qualified columns read from a fragment


@dataclass(frozen=True)
class Select:
    child: Any
    predicates: tuple[Any, ...]


@dataclass(frozen=True)
class Join:
    left: Any
    right: Any
    conditions: tuple[Any, ...]


@dataclass(frozen=True)
class Project:
    child: Any
    projections: tuple[Projection, ...]


def plan_relations(node) -> list[str]:
    """Leaf relations of a plan, left to right."""
    if isinstance(node, Scan):
        return [node.relation]
    if isinstance(node, Join):
        return plan_relations(node.left) + plan_relations(node.right)
    return plan_relations(node.child)


def build_plan(query: Query) -> Project:
    """Canonical plan: left-deep joins in FROM order, selections on top."""
    order = _connected_order(list(query.sources), query.joins)
    tree = Scan(order[0])
    have = {order[0]}
    pending = list(query.joins)
    for rel in order[1:]:
        have.add(rel)
        conds = tuple(j for j in pending if {j.left.relation, j.right.relation} <= have)
        pending = [j for j in pending if j not in conds]
        tree = Join(tree, Scan(rel), conds)
    sels = tuple(query.selections)
    if sels:
        tree = Select(tree, sels)
    return Project(tree, query.projections)


def _connected_order(rels: list[str], joins: Sequence[JoinEq]) -> list[str]:
    if not rels:
        return []
    order, rest = [rels[0]], list(rels[1:])
    while rest:
        for r in rest:
            if any({j.left.relation, j.right.relation} == {r, o} for j in joins for o in order):
                order.append(r)
                rest.remove(r)
                break
        else:
            order.append(rest.pop(0))
    return order


def flatten(plan) -> tuple[list[str], list, list[JoinEq], tuple[Projection, ...]]:
    """(relations, selection predicates, join predicates, projections) of a plan."""
    rels, sels, joins = [], [], []
    projections: tuple[Projection, ...] = ()

    def walk(n):
        nonlocal projections
        if isinstance(n, Project):
            projections = n.projections
            walk(n.child)
        elif isinstance(n, Select):
            sels.extend(n.predicates)
            walk(n.child)
        elif isinstance(n, Join):
            walk(n.left)
            walk(n.right)
            joins.extend(n.conditions)
        elif isinstance(n, Scan):
            rels.append(n.relation)
        else:
            raise TypeError(n)

    walk(plan)
    return rels, sels, joins, projections


def relation_classes(query_cols: Iterable[str], rels: Sequence[str], catalog: Catalog) -> dict[str, str]:
    """``public``, ``private`` or ``mixed`` per relation for the referenced columns."""
    clouds: dict[str, set[str]] = {r: set() for r in rels}
    for qn in query_cols:
        a = catalog.attribute(qn)
        clouds[a.relation].add(a.placement)
    out = {}
    for r in rels:
        c = clouds[r]
        out[r] = PUBLIC if c == {PUBLIC} else PRIVATE if c == {PRIVATE} else "mixed" if c else PUBLIC
    return out


def _build_subtree(rels: list[str], sel_by_rel: Mapping[str, list], joins: list[JoinEq],
                   scan=Scan):
    """Left-deep trees over ``rels`` with selections pushed onto scans.

    Returns one tree per connected component plus the join conditions used.
    """
    def leaf(r):
        node = scan(r)
        if sel_by_rel.get(r):
            node = Select(node, tuple(sel_by_rel[r]))
        return node

    trees, used = [], set()
    remaining = list(rels)
    while remaining:
        first = remaining.pop(0)
        members = {first}
        tree = leaf(first)
        progress = True
        while progress:
            progress = False
            for r in list(remaining):
                conds = tuple(j for j in joins if j not in used and
                              {j.left.relation, j.right.relation} <= members | {r} and
                              r in (j.left.relation, j.right.relation))
                if conds:
                    tree = Join(tree, leaf(r), conds)
                    used.update(conds)
                    members.add(r)
                    remaining.remove(r)
                    progress = True
        trees.append((tree, members))
    return trees, used


def rearrange(plan, catalog: Catalog):
    """Reorder joins so same-cloud relations form adjacent subtrees.

    Selections are pushed onto their scans. Relations are grouped by cloud
    class (public, mixed, private); each group becomes left-deep subtrees
    which are then joined together, so cross-cloud joins sit at the top.
    """
    rels, sels, joins, projections = flatten(plan)
    cols = set()
    for p in projections:
        cols |= expr_columns(p.expr)
    for p in list(sels) + list(joins):
        cols |= predicate_columns(p)
    classes = relation_classes(cols, rels, catalog)
    sel_by_rel: dict[str, list] = {}
    for p in sels:
        sel_by_rel.setdefault(p.attr.relation, []).append(p)

    groups = []
    used: set = set()
    for cls in (PUBLIC, "mixed", PRIVATE):
        members = [r for r in rels if classes[r] == cls]
        trees, u = _build_subtree(members, sel_by_rel, joins)
        used |= u
        groups.extend(trees)
    tree, have = groups[0]
    rest = groups[1:]
    while rest:
        for k, (t, mem) in enumerate(rest):
            conds = tuple(j for j in joins if j not in used and
                          {j.left.relation, j.right.relation} <= have | mem and
                          {j.left.relation, j.right.relation} & mem)
            if conds:
                break
        else:
            k, conds = 0, ()
        t, mem = rest.pop(k)
        tree = Join(tree, t, conds)
        used |= set(conds)
        have = have | mem
    leftover = tuple(j for j in joins if j not in used)
    if leftover:
        tree = Select(tree, leftover)
    return Project(tree, projections)


# ---------------------------------------------------------------------------
# hybrid plans


def id_column(qualname: str) -> str:
    return f"{qualname}#id"


@dataclass(frozen=True)
class SubPlan:
    """One sub-query executed entirely on a single cloud."""

    cloud: str
    root: Any
    outputs: tuple[str, ...]
    encrypted: tuple[str, ...] = ()   # outputs carried as etuple fields

    @property
    def relations(self) -> list[str]:
        return plan_relations(self.root)


@dataclass(frozen=True)
class PostPlan:
    decrypt: tuple[str, ...]
    filters: tuple[Any, ...]
    combine: tuple[Any, ...]          # JoinEq / TidJoin between sub-plan outputs
    projections: tuple[Projection, ...]


@dataclass(frozen=True)
class HybridPlan:
    public: tuple[SubPlan, ...]
    private: tuple[SubPlan, ...]
    post: PostPlan
    private_set: frozenset[str] = frozenset()

    @property
    def subplans(self) -> tuple[SubPlan, ...]:
        return self.public + self.private


def _placement_fragments(rels, cols, catalog: Catalog) -> dict[tuple[str, str], set[str]]:
    frags: dict[tuple[str, str], set[str]] = {}
    for qn in sorted(cols):
        a = catalog.attribute(qn)
        frags.setdefault((a.relation, a.placement), set()).add(qn)
    for r in rels:
        if not any(k[0] == r for k in frags):
            # relation referenced only through its tuple id
            frags[(r, PUBLIC)] = set()
    return frags


JOIN_POLICIES = ("auto", "public")


def split(plan, catalog: Catalog, schemes: Mapping[str, BucketScheme],
          join_policy: str = "auto") -> HybridPlan:
    """Divide a (rearranged) plan into public and private sub-plans plus post-processing.

    Public sub-plans see only mapped identifier predicates for sensitive
    attributes; the original predicates are re-applied after decryption.
    Joins that cannot run inside one cloud move to the post-processing
    combine step, and relations split across clouds are reassembled on
    their tuple ids.

    A join between two encrypted attributes runs on the public cloud over
    partition identifiers. With ``join_policy="public"`` it always does;
    with ``"auto"`` it does only when the estimated identifier-join output
    is no larger than shipping both inputs, since coarse partitions turn
    the join into a near cross product.
    """
    if join_policy not in JOIN_POLICIES:
        raise ValueError(f"join_policy must be one of {JOIN_POLICIES}")
    rels, sels, joins, projections = flatten(plan)
    cols = set()
    for p in projections:
        cols |= expr_columns(p.expr)
    for p in list(sels) + list(joins):
        cols |= predicate_columns(p)
    frags = _placement_fragments(rels, cols, catalog)

    def cloud_of(qn):
        return catalog.attribute(qn).placement

    def sensitive(qn):
        return catalog.attribute(qn).sensitive

    frag_preds: dict[tuple[str, str], list] = {k: [] for k in frags}
    post_filters: list = []
    for p in sels:
        qn = p.attr.qualname
        key = (p.attr.relation, cloud_of(qn))
        if key[1] == PUBLIC and sensitive(qn):
            try:
                frag_preds[key].append(map_condition(schemes, p))
            except (UnsupportedPredicateError, KeyError):
                pass  # no usable mapping: the public side returns the whole fragment
            post_filters.append(p)
        else:
            frag_preds[key].append(p)

    internal: dict[str, list] = {PUBLIC: [], PRIVATE: []}
    combine: list = []
    for j in joins:
        lq, rq = j.left.qualname, j.right.qualname
        lc, rc = cloud_of(lq), cloud_of(rq)
        if lc != rc:
            combine.append(j)
        elif lc == PRIVATE:
            internal[PRIVATE].append(j)
        elif not sensitive(lq) and not sensitive(rq):
            internal[PUBLIC].append(j)
        else:
            try:
                mj = map_condition(schemes, j)
            except (UnsupportedPredicateError, KeyError):
                combine.append(j)
                continue
            if join_policy == "auto" and not _mapped_join_pays(mj, j, frag_preds, catalog, schemes):
                combine.append(j)
                continue
            internal[PUBLIC].append(mj)
            post_filters.append(j)
    for r in rels:
        if (r, PUBLIC) in frags and (r, PRIVATE) in frags:
            combine.append(TidJoin(r, catalog.relation(r).tuple_id))

    needed = set()
    for p in projections:
        needed |= expr_columns(p.expr)
    for p in post_filters + [c for c in combine if isinstance(c, JoinEq)]:
        needed |= predicate_columns(p)
    tid_needed = {c.relation for c in combine if isinstance(c, TidJoin)}

    order = {r: i for i, r in enumerate(rels)}
    subplans: dict[str, list[SubPlan]] = {PUBLIC: [], PRIVATE: []}
    for cloud in (PUBLIC, PRIVATE):
        members = sorted((r for (r, c) in frags if c == cloud), key=order.get)
        if not members:
            continue
        edges = [_as_edge(e) for e in internal[cloud]]
        comps = _components(members, edges)
        for comp in comps:
            comp_rels = [r for r in members if r in comp]

            def scan(r, cloud=cloud):
                read = set(frags[(r, cloud)])
                tid = catalog.relation(r).tuple_id
                columns = sorted(read)
                if r in tid_needed:
                    columns = [f"{r}.{tid}"] + columns
                return Scan(r, cloud, tuple(columns))

            sel_by_rel = {r: frag_preds[(r, cloud)] for r in comp_rels}
            root, _ = _build_subtree_edges(comp_rels, sel_by_rel, internal[cloud], scan)
            outputs = []
            for r in comp_rels:
                if r in tid_needed:
                    outputs.append(f"{r}.{catalog.relation(r).tuple_id}")
                outputs.extend(sorted(c for c in frags[(r, cloud)] if c in needed))
            enc = tuple(c for c in outputs if cloud == PUBLIC and catalog.has_attribute(c)
                        and sensitive(c))
            subplans[cloud].append(SubPlan(cloud, root, tuple(outputs), enc))

    decrypt = tuple(c for sp in subplans[PUBLIC] for c in sp.encrypted)
    post = PostPlan(decrypt, tuple(post_filters), tuple(combine), tuple(projections))
    return HybridPlan(tuple(subplans[PUBLIC]), tuple(subplans[PRIVATE]), post,
                      catalog.private_set)


def _mapped_join_pays(mj: MappedJoin, j: JoinEq, frag_preds, catalog: Catalog,
                      schemes: Mapping[str, BucketScheme]) -> bool:
    from .costmodel import selection_selectivity  # costmodel imports this module

    def filtered_rows(rel):
        rows = float(catalog.stats[rel].row_count)
        for p in frag_preds.get((rel, PUBLIC), ()):
            rows *= selection_selectivity(p, catalog, schemes)
        return rows

    lr, rr = filtered_rows(j.left.relation), filtered_rows(j.right.relation)
    ls, rs = schemes[mj.left], schemes[mj.right]
    frac = len(mj.pairs) / (len(ls.ident_ids) * len(rs.ident_ids))
    return lr * rr * frac <= lr + rr


def _as_edge(p) -> tuple[str, str]:
    if isinstance(p, JoinEq):
        return p.left.relation, p.right.relation
    return p.left.split(".", 1)[0], p.right.split(".", 1)[0]


def _components(members: list[str], edges: list[tuple[str, str]]) -> list[set[str]]:
    parent = {m: m for m in members}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in edges:
        if a in parent and b in parent:
            parent[find(a)] = find(b)
    groups: dict[str, set[str]] = {}
    for m in members:
        groups.setdefault(find(m), set()).add(m)
    return sorted(groups.values(), key=lambda g: members.index(min(g, key=members.index)))


def _build_subtree_edges(rels, sel_by_rel, conds, scan):
    """Left-deep tree over one connected component of fragments."""
    def leaf(r):
        node = scan(r)
        if sel_by_rel.get(r):
            node = Select(node, tuple(sel_by_rel[r]))
        return node

    tree, have = leaf(rels[0]), {rels[0]}
    remaining = list(rels[1:])
    used = set()
    while remaining:
        for r in remaining:
            cs = tuple(c for c in conds if id(c) not in used and r in _as_edge(c)
                       and set(_as_edge(c)) <= have | {r})
            if cs:
                break
        else:  # pragma: no cover - components are connected by construction
            raise AssertionError("disconnected component")
        tree = Join(tree, leaf(r), cs)
        used.update(id(c) for c in cs)
        have.add(r)
        remaining.remove(r)
    return tree, used


def compile_query(query: Query, catalog: Catalog, schemes: Mapping[str, BucketScheme],
                  join_policy: str = "auto") -> HybridPlan:
    """plan -> rearrange -> split for an already bound query."""
    return split(rearrange(build_plan(query), catalog), catalog, schemes, join_policy)


# ---------------------------------------------------------------------------
# rendering and serialisation


def _pred_text(p) -> str:
    if isinstance(p, MappedCondition):
        return f"Map({p.attribute}) IN {{{len(p.identifier_set)} ids}}"
    if isinstance(p, MappedJoin):
        return f"Map({p.left}) ~ Map({p.right}) [{len(p.pairs)} pairs]"
    return str(p)


def render_node(node, indent: int = 0) -> str:
    pad = "  " * indent
    if isinstance(node, Project):
        return (f"{pad}PROJECT {', '.join(str(p) for p in node.projections)}\n"
                + render_node(node.child, indent + 1))
    if isinstance(node, Select):
        return (f"{pad}SELECT {' AND '.join(_pred_text(p) for p in node.predicates)}\n"
                + render_node(node.child, indent + 1))
    if isinstance(node, Join):
        conds = " AND ".join(_pred_text(c) for c in node.conditions) or "true"
        return (f"{pad}JOIN {conds}\n" + render_node(node.left, indent + 1)
                + render_node(node.right, indent + 1))
    if isinstance(node, Scan):
        where = f"[{node.cloud}]" if node.cloud else ""
        cols = f" ({', '.join(node.columns)})" if node.columns else ""
        return f"{pad}SCAN {node.relation}{where}{cols}\n"
    raise TypeError(node)


def render_hybrid(hp: HybridPlan) -> str:
    out = []
    for i, sp in enumerate(hp.public, 1):
        out.append(f"PUBLIC q{i} -> {', '.join(sp.outputs)}\n" + render_node(sp.root, 1))
    for i, sp in enumerate(hp.private, 1):
        out.append(f"PRIVATE q{i} -> {', '.join(sp.outputs)}\n" + render_node(sp.root, 1))
    post = hp.post
    lines = ["POST"]
    if post.decrypt:
        lines.append(f"  DECRYPT {', '.join(post.decrypt)}")
    if post.filters:
        lines.append(f"  FILTER {' AND '.join(str(f) for f in post.filters)}")
    if post.combine:
        lines.append(f"  COMBINE {' AND '.join(str(c) for c in post.combine)}")
    lines.append(f"  PROJECT {', '.join(str(p) for p in post.projections)}")
    out.append("\n".join(lines) + "\n")
    return "".join(out)


def _attr_d(a: AttrRef) -> dict:
    return {"relation": a.relation, "name": a.name, "datatype": a.datatype}


def _attr_from(d) -> AttrRef:
    return AttrRef(d["relation"], d["name"], d.get("datatype"))


def expr_to_dict(e) -> Any:
    if isinstance(e, AttrRef):
        return {"col": _attr_d(e)}
    if isinstance(e, Literal):
        return {"lit": e.value, "kind": e.kind}
    if isinstance(e, BinOp):
        return {"op": e.op, "l": expr_to_dict(e.left), "r": expr_to_dict(e.right)}
    if isinstance(e, Neg):
        return {"neg": expr_to_dict(e.operand)}
    raise TypeError(e)


def expr_from_dict(d) -> Any:
    if "col" in d:
        return _attr_from(d["col"])
    if "lit" in d:
        return Literal(d["lit"], d["kind"])
    if "neg" in d:
        return Neg(expr_from_dict(d["neg"]))
    return BinOp(d["op"], expr_from_dict(d["l"]), expr_from_dict(d["r"]))


def pred_to_dict(p, public: bool = False) -> dict:
    if isinstance(p, Comparison):
        return {"kind": "cmp", "attr": _attr_d(p.attr), "op": p.op, "value": p.value}
    if isinstance(p, Between):
        return {"kind": "between", "attr": _attr_d(p.attr), "low": p.low, "high": p.high}
    if isinstance(p, JoinEq):
        return {"kind": "join", "left": _attr_d(p.left), "right": _attr_d(p.right)}
    if isinstance(p, TidJoin):
        return {"kind": "tid", "relation": p.relation, "tuple_id": p.tuple_id}
    if isinstance(p, (MappedCondition, MappedJoin)):
        d = p.public_dict()
        if not public and p.original is not None:
            d["original"] = pred_to_dict(p.original)
        return d
    raise TypeError(p)


def pred_from_dict(d) -> Any:
    k = d["kind"]
    if k == "cmp":
        return Comparison(_attr_from(d["attr"]), d["op"], d["value"])
    if k == "between":
        return Between(_attr_from(d["attr"]), d["low"], d["high"])
    if k == "join":
        return JoinEq(_attr_from(d["left"]), _attr_from(d["right"]))
    if k == "tid":
        return TidJoin(d["relation"], d["tuple_id"])
    orig = pred_from_dict(d["original"]) if "original" in d else None
    if k == "mapped_select":
        return MappedCondition(d["attribute"], frozenset(parse_id(i) for i in d["ids"]), orig)
    if k == "mapped_join":
        return MappedJoin(d["left"], d["right"],
                          frozenset((parse_id(a), parse_id(b)) for a, b in d["pairs"]), orig)
    raise ValueError(f"unknown predicate kind {k!r}")


def node_to_dict(n, public: bool = False) -> dict:
    if isinstance(n, Scan):
        return {"node": "scan", "relation": n.relation, "cloud": n.cloud, "columns": list(n.columns)}
    if isinstance(n, Select):
        return {"node": "select", "child": node_to_dict(n.child, public),
                "predicates": [pred_to_dict(p, public) for p in n.predicates]}
    if isinstance(n, Join):
        return {"node": "join", "left": node_to_dict(n.left, public),
                "right": node_to_dict(n.right, public),
                "conditions": [pred_to_dict(p, public) for p in n.conditions]}
    if isinstance(n, Project):
        return {"node": "project", "child": node_to_dict(n.child, public),
                "projections": [{"expr": expr_to_dict(p.expr), "label": p.label}
                                for p in n.projections]}
    raise TypeError(n)


def node_from_dict(d) -> Any:
    k = d["node"]
    if k == "scan":
        return Scan(d["relation"], d["cloud"], tuple(d["columns"]))
    if k == "select":
        return Select(node_from_dict(d["child"]), tuple(pred_from_dict(p) for p in d["predicates"]))
    if k == "join":
        return Join(node_from_dict(d["left"]), node_from_dict(d["right"]),
                    tuple(pred_from_dict(p) for p in d["conditions"]))
    if k == "project":
        return Project(node_from_dict(d["child"]),
                       tuple(Projection(expr_from_dict(p["expr"]), p["label"])
                             for p in d["projections"]))
    raise ValueError(f"unknown node kind {k!r}")


def subplan_to_dict(sp: SubPlan) -> dict:
    return {"cloud": sp.cloud, "outputs": list(sp.outputs), "encrypted": list(sp.encrypted),
            "root": node_to_dict(sp.root, public=sp.cloud == PUBLIC)}


def hybrid_to_dict(hp: HybridPlan) -> dict:
    return {
        "private_set": sorted(hp.private_set),
        "public": [subplan_to_dict(sp) for sp in hp.public],
        "private": [subplan_to_dict(sp) for sp in hp.private],
        "post": {
            "decrypt": list(hp.post.decrypt),
            "filters": [pred_to_dict(p) for p in hp.post.filters],
            "combine": [pred_to_dict(p) for p in hp.post.combine],
            "projections": [{"expr": expr_to_dict(p.expr), "label": p.label}
                            for p in hp.post.projections],
        },
    }


def hybrid_from_dict(d) -> HybridPlan:
    def sp(x):
        return SubPlan(x["cloud"], node_from_dict(x["root"]), tuple(x["outputs"]),
                       tuple(x["encrypted"]))

    post = d["post"]
    return HybridPlan(
        tuple(sp(x) for x in d["public"]),
        tuple(sp(x) for x in d["private"]),
        PostPlan(tuple(post["decrypt"]),
                 tuple(pred_from_dict(p) for p in post["filters"]),
                 tuple(pred_from_dict(p) for p in post["combine"]),
                 tuple(Projection(expr_from_dict(p["expr"]), p["label"])
                       for p in post["projections"])),
        frozenset(d["private_set"]),
    )


def dumps_hybrid(hp: HybridPlan) -> str:
    return json.dumps(hybrid_to_dict(hp), indent=1, sort_keys=True)
