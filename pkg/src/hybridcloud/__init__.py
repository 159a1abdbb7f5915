"""Hybrid-cloud secure query processing.

Vertical partitioning of relations between a private and a public store,
bucketized encryption of sensitive public attributes, a workload cost
model, placement search, and a split query executor.
"""

from .bucketize import BucketScheme, build_registry, compute_num_partitions, map_condition
from .catalog import Catalog, PlacementPlan, apply_placement, load_catalog, save_catalog
from .costmodel import CostBreakdown, CostWeights, WorkloadCostModel, calibrate, qpc
from .crypto import ETuple, SecretKey, decrypt_value, encrypt_value
from .engine import EngineConfig, ExecutionTrace, execute, ground_truth, load_fragments
from .partitioner import brute_force_optimum, css_dp, css_hc
from .queryir import HybridPlan, Query, compile_query, parse, rearrange, split
from .workload import GeneratorConfig, generate_data, generate_workload

__version__ = "0.1.0"

__all__ = [
    "BucketScheme", "build_registry", "compute_num_partitions", "map_condition",
    "Catalog", "PlacementPlan", "apply_placement", "load_catalog", "save_catalog",
    "CostBreakdown", "CostWeights", "WorkloadCostModel", "calibrate", "qpc",
    "ETuple", "SecretKey", "decrypt_value", "encrypt_value",
    "EngineConfig", "ExecutionTrace", "execute", "ground_truth", "load_fragments",
    "brute_force_optimum", "css_dp", "css_hc",
    "HybridPlan", "Query", "compile_query", "parse", "rearrange", "split",
    "GeneratorConfig", "generate_data", "generate_workload",
]
