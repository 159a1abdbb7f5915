"""Choosing which attributes go to the private cloud.

Every strategy works against a :class:`WorkloadCostModel` and respects the
capacity constraint ``sum(size of private attributes) <= capacity``.

* :func:`css_dp` treats each attribute's stand-alone saving (profit) as a
  knapsack item and solves the 0/1 knapsack exactly.
* :func:`css_hc` starts from a greedy seed and hill-climbs with random
  public/private swaps, keeping only swaps that lower the full cost.
* :func:`brute_force_optimum` and :func:`brute_force_knapsack` are the
  exhaustive oracles used to check both on small instances.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .bucketize import BucketScheme
from .catalog import Catalog, PlacementPlan
from .costmodel import DEFAULT_WEIGHTS, CostWeights, WorkloadCostModel
from .errors import InstanceTooLargeError
from .queryir import Query

log = logging.getLogger(__name__)

METHODS = ("dp", "hc-query", "hc-sensitivity", "brute", "all-public", "all-private")
SEED_STRATEGIES = ("query", "sensitivity")
BRUTE_FORCE_LIMIT = 20
SWAP_RETRIES = 100

__all__ = [
    "DPTable", "PlacementPlan", "attribute_profit", "profit_vector", "knapsack",
    "brute_force_knapsack", "css_dp", "css_hc", "brute_force_optimum", "partition",
    "make_model",
]


def make_model(catalog: Catalog, workload: Sequence[Query], weights: CostWeights = DEFAULT_WEIGHTS,
               mode: str = "sum", schemes: Mapping[str, BucketScheme] | None = None,
               join_policy: str = "auto") -> WorkloadCostModel:
    return WorkloadCostModel(workload, catalog, weights, mode, schemes, join_policy)


def attribute_profit(attr: str, model: WorkloadCostModel, c_in: float | None = None) -> float:
    """Cost saved by moving only ``attr`` private, starting from all-public (may be negative)."""
    if c_in is None:
        c_in = model.cost(frozenset())
    return c_in - model.cost(frozenset([attr]))


def profit_vector(model: WorkloadCostModel, attributes: Sequence[str]) -> tuple[float, np.ndarray]:
    c_in = model.cost(frozenset())
    return c_in, np.array([attribute_profit(a, model, c_in) for a in attributes], dtype=float)


@dataclass
class DPTable:
    attributes: tuple[str, ...]
    sizes: np.ndarray
    profits: np.ndarray
    c_in: float
    p: np.ndarray        # (n + 1) x (cap + 1) best profit
    take: np.ndarray     # (n + 1) x (cap + 1) bool, item i taken at capacity j

    def best(self) -> float:
        return float(self.p[-1, -1])


def knapsack(profits: np.ndarray, sizes: np.ndarray, capacity: int) -> tuple[np.ndarray, np.ndarray, list[int]]:
    """0/1 knapsack table, take flags and the chosen item indices.

    Item ``i`` is taken at capacity ``j`` when ``profit_i + p[i-1, j-size_i]``
    beats ``p[i-1, j]``; the chosen set is traced back from ``p[n, cap]``.
    """
    n = len(profits)
    cap = int(capacity)
    p = np.zeros((n + 1, cap + 1))
    take = np.zeros((n + 1, cap + 1), dtype=bool)
    for i in range(1, n + 1):
        s, c = int(sizes[i - 1]), float(profits[i - 1])
        prev = p[i - 1]
        row = prev.copy()
        if s <= cap:
            cand = c + prev[: cap + 1 - s]
            better = cand > prev[s:]
            row[s:] = np.where(better, cand, prev[s:])
            take[i, s:] = better
        p[i] = row
    chosen, j = [], cap
    for i in range(n, 0, -1):
        if take[i, j]:
            chosen.append(i - 1)
            j -= int(sizes[i - 1])
    return p, take, sorted(chosen)


def brute_force_knapsack(profits: Sequence[float], sizes: Sequence[int], capacity: int) -> tuple[float, list[int]]:
    """Exhaustive 0/1 knapsack; sums follow item order so values match :func:`knapsack` bit for bit."""
    n = len(profits)
    if n > BRUTE_FORCE_LIMIT:
        raise InstanceTooLargeError(f"{n} items exceed the brute-force limit of {BRUTE_FORCE_LIMIT}")
    masks = np.arange(1 << n, dtype=np.int64)
    total = np.zeros(len(masks))
    weight = np.zeros(len(masks), dtype=np.int64)
    for i in range(n):
        bit = ((masks >> i) & 1).astype(bool)
        total = np.where(bit, total + profits[i], total)
        weight += bit * int(sizes[i])
    total = np.where(weight <= capacity, total, -np.inf)
    best = int(np.argmax(total))
    return float(total[best]), [i for i in range(n) if best >> i & 1]


def _sizes(catalog: Catalog, attributes: Sequence[str]) -> np.ndarray:
    return np.array([catalog.attribute(a).size for a in attributes], dtype=np.int64)


def css_dp(catalog: Catalog, workload: Sequence[Query], weights: CostWeights = DEFAULT_WEIGHTS,
           mode: str = "sum", schemes: Mapping[str, BucketScheme] | None = None,
           capacity: int | None = None, model: WorkloadCostModel | None = None,
           return_table: bool = False):
    """Knapsack over per-attribute profits (computed once, reused for every cell)."""
    model = model or make_model(catalog, workload, weights, mode, schemes)
    cap = catalog.capacity if capacity is None else capacity
    attrs = tuple(catalog.attribute_names)
    sizes = _sizes(catalog, attrs)
    c_in, profits = profit_vector(model, attrs)
    p, take, chosen = knapsack(profits, sizes, cap)
    private = frozenset(attrs[i] for i in chosen)
    plan = PlacementPlan.from_private(catalog, private, achieved_cost=model.cost(private), method="dp")
    if return_table:
        return plan, DPTable(attrs, sizes, profits, c_in, p, take)
    return plan


def greedy_seed(catalog: Catalog, model: WorkloadCostModel, strategy: str,
                capacity: int) -> frozenset[str]:
    """Fill the private cloud with candidate attributes by descending profit per size."""
    if strategy == "query":
        refs = set()
        for q in model.workload:
            refs |= q.referenced()
        candidates = sorted(a for a in refs if catalog.has_attribute(a))
    elif strategy == "sensitivity":
        candidates = sorted(a.qualname for a in catalog.attributes if a.sensitive)
    else:
        raise ValueError(f"seed strategy must be one of {SEED_STRATEGIES}")
    c_in = model.cost(frozenset())
    scored = []
    for a in candidates:
        size = catalog.attribute(a).size
        profit = attribute_profit(a, model, c_in)
        density = profit / size if size else np.inf * (1 if profit >= 0 else -1)
        scored.append((-density, a))
    scored.sort()
    private, used = set(), 0
    for _, a in scored:
        size = catalog.attribute(a).size
        if used + size <= capacity:
            private.add(a)
            used += size
    return frozenset(private)


def css_hc(catalog: Catalog, workload: Sequence[Query], weights: CostWeights = DEFAULT_WEIGHTS,
           seed_strategy: str = "query", bound: int = 500, rng_seed: int = 0,
           mode: str = "sum", schemes: Mapping[str, BucketScheme] | None = None,
           capacity: int | None = None, model: WorkloadCostModel | None = None,
           history: list | None = None) -> PlacementPlan:
    """Hill climbing over pairwise public/private swaps.

    ``bound`` caps the number of swap attempts. A swap that would overflow
    the capacity is resampled (up to 100 times per attempt); a feasible swap
    is kept only if the full workload cost strictly drops. Accepted costs
    are appended to ``history`` when given.
    """
    if bound < 0:
        raise ValueError("bound must be non-negative")
    model = model or make_model(catalog, workload, weights, mode, schemes)
    cap = catalog.capacity if capacity is None else capacity
    rng = np.random.default_rng(rng_seed)
    sizes = {a: catalog.attribute(a).size for a in catalog.attribute_names}
    private = greedy_seed(catalog, model, seed_strategy, cap)
    cost = model.cost(private)
    if history is not None:
        history.append(cost)
    used = sum(sizes[a] for a in private)
    for _ in range(bound):
        pub = sorted(set(sizes) - private)
        pri = sorted(private)
        if not pub or not pri:
            break
        for _ in range(SWAP_RETRIES):
            a = pub[rng.integers(len(pub))]
            b = pri[rng.integers(len(pri))]
            if used - sizes[b] + sizes[a] <= cap:
                break
        else:
            continue
        cand = (private - {b}) | {a}
        c = model.cost(cand)
        if c < cost:
            private, cost = cand, c
            used = used - sizes[b] + sizes[a]
            if history is not None:
                history.append(cost)
    return PlacementPlan.from_private(catalog, private, achieved_cost=cost,
                                      method=f"hc-{seed_strategy}")


def brute_force_optimum(catalog: Catalog, workload: Sequence[Query],
                        weights: CostWeights = DEFAULT_WEIGHTS, mode: str = "sum",
                        schemes: Mapping[str, BucketScheme] | None = None,
                        capacity: int | None = None,
                        model: WorkloadCostModel | None = None) -> PlacementPlan:
    """Exact qpc-minimal placement by enumerating every feasible private set."""
    attrs = tuple(catalog.attribute_names)
    n = len(attrs)
    if n > BRUTE_FORCE_LIMIT:
        raise InstanceTooLargeError(f"{n} attributes exceed the brute-force limit of {BRUTE_FORCE_LIMIT}")
    model = model or make_model(catalog, workload, weights, mode, schemes)
    cap = catalog.capacity if capacity is None else capacity
    sizes = _sizes(catalog, attrs)
    masks = np.arange(1 << n, dtype=np.int64)
    weight = np.zeros(len(masks), dtype=np.int64)
    for i in range(n):
        weight += ((masks >> i) & 1) * sizes[i]
    best_cost, best = np.inf, frozenset()
    for m in masks[weight <= cap]:
        priv = frozenset(attrs[i] for i in range(n) if m >> i & 1)
        c = model.cost(priv)
        if c < best_cost:
            best_cost, best = c, priv
    return PlacementPlan.from_private(catalog, best, achieved_cost=float(best_cost),
                                      method="brute-force")


def partition(method: str, catalog: Catalog, workload: Sequence[Query],
              weights: CostWeights = DEFAULT_WEIGHTS, mode: str = "sum",
              schemes: Mapping[str, BucketScheme] | None = None, bound: int = 500,
              rng_seed: int = 0, join_policy: str = "auto") -> PlacementPlan:
    """Dispatch on a method name from :data:`METHODS`."""
    model = make_model(catalog, workload, weights, mode, schemes, join_policy)
    if method == "dp":
        return css_dp(catalog, workload, model=model)
    if method in ("hc-query", "hc-sensitivity"):
        return css_hc(catalog, workload, seed_strategy=method[3:], bound=bound,
                      rng_seed=rng_seed, model=model)
    if method == "brute":
        return brute_force_optimum(catalog, workload, model=model)
    if method == "all-public":
        return PlacementPlan.from_private(catalog, (), achieved_cost=model.cost(frozenset()),
                                          method="all-public")
    if method == "all-private":
        everything = frozenset(catalog.attribute_names)
        return PlacementPlan.from_private(catalog, everything, achieved_cost=model.cost(everything),
                                          method="all-private")
    raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
