"""Command-line pipeline: generate, calibrate, partition, rewrite, run, report.

Every subcommand exits 0 on success. Failures print one ``error:`` line on
stderr and exit with a class-specific status: 2 for configuration problems
(catalog, weights, key, flags), 3 for data problems (fragments, stats,
domains), 4 for planning problems (SQL, binding, placement search) and 5
for execution problems.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import errors
from .bucketize import build_registry
from .catalog import Catalog, PlacementPlan, apply_placement, load_catalog, save_catalog
from .costmodel import MODES, DEFAULT_WEIGHTS, CostWeights, WorkloadCostModel, calibrate_report, cost_schemes
from .crypto import KEY_ENV, SecretKey
from .engine import (
    EngineConfig,
    EngineHarness,
    build_stores,
    execute,
    ground_truth,
    load_fragments,
    read_plaintext,
)
from .partitioner import METHODS, partition
from .queryir import Query, compile_query, dumps_hybrid, format_workload, parse, parse_workload, render_hybrid
from .workload import GeneratorConfig, generate_data, generate_workload, tpch_catalog

log = logging.getLogger("hybridcloud")

EXIT_CONFIG, EXIT_DATA, EXIT_PLANNING, EXIT_EXECUTION = 2, 3, 4, 5
DEFAULT_DIR = "hc-data"
CATALOG_FILE = "catalog.yaml"
KEY_FILE = "secret.key"
SWEEP_DEFAULTS = {
    "P": (1, 2, 4, 8, 16, 32),
    "W": (0.1, 0.2, 0.3, 0.4, 0.5),
    "S": (0.1, 0.3, 0.5, 0.7, 0.9),
}

_EXIT_CLASSES = (
    ((errors.CatalogParseError, errors.ValidationError, errors.KeyLengthError,
      errors.UnsupportedDatatypeError), EXIT_CONFIG),
    ((errors.FragmentError, errors.DomainError, errors.MissingStatisticsError), EXIT_DATA),
    ((errors.QuerySyntaxError, errors.UnsupportedFeatureError, errors.BindError,
      errors.UnsupportedPredicateError, errors.InstanceTooLargeError), EXIT_PLANNING),
    ((errors.DecryptionError, errors.PlacementMismatchError, errors.CalibrationError), EXIT_EXECUTION),
)


class UsageError(Exception):
    """Bad or missing flag/file; reported with the config exit status."""


def exit_status(exc: BaseException) -> int:
    for classes, code in _EXIT_CLASSES:
        if isinstance(exc, classes):
            return code
    if isinstance(exc, (UsageError, FileNotFoundError)):
        return EXIT_CONFIG
    return EXIT_EXECUTION


# ---------------------------------------------------------------------------
# shared inputs


def _data_dir(args) -> Path:
    return Path(getattr(args, "data_dir", None) or getattr(args, "out_dir", None) or DEFAULT_DIR)


def _catalog_path(args) -> Path:
    return Path(args.catalog) if args.catalog else _data_dir(args) / CATALOG_FILE


def _key_path(args) -> Path:
    if args.key_file:
        return Path(args.key_file)
    if os.environ.get(KEY_ENV):
        return Path(os.environ[KEY_ENV])
    return _data_dir(args) / KEY_FILE


def _need(path: Path, what: str) -> Path:
    if not path.exists():
        raise UsageError(f"{what} not found: {path}")
    return path


def _catalog(args) -> Catalog:
    return load_catalog(_need(_catalog_path(args), "catalog"))


def _key(args) -> SecretKey:
    return SecretKey.load(_need(_key_path(args), "key file"))


def _weights(args) -> CostWeights:
    return CostWeights.load(_need(Path(args.weights), "weights file")) if args.weights else DEFAULT_WEIGHTS


def _workload(args, catalog: Catalog) -> list[Query]:
    return parse_workload(_need(Path(args.workload), "workload").read_text(), catalog)


def _placed(args, catalog: Catalog) -> Catalog:
    plan = getattr(args, "plan", None)
    if not plan:
        return catalog
    return apply_placement(catalog, PlacementPlan.load(_need(Path(plan), "plan file")))


def _write(path: str | Path | None, text: str) -> None:
    if path:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)


# ---------------------------------------------------------------------------
# subcommands


def cmd_generate(args) -> int:
    out = Path(args.out_dir)
    config = GeneratorConfig(scale_factor=args.scale, rng_seed=args.seed,
                             workload_size=args.workload_size)
    plain_dir, stats = generate_data(config, out)
    catalog = tpch_catalog(stats, sensitivity=args.sensitivity, seed=args.seed,
                           capacity_fraction=args.capacity_fraction)
    cat_path = _catalog_path(args)
    save_catalog(catalog, cat_path)
    key_path = _key_path(args)
    if not key_path.exists():
        key_path.parent.mkdir(parents=True, exist_ok=True)
        SecretKey.generate().save(key_path)
    wl_path = Path(args.workload_out) if args.workload_out else out / "workload.sql"
    _write(wl_path, format_workload(generate_workload(config, catalog)))
    print(f"plaintext: {plain_dir}")
    print(f"catalog:   {cat_path} ({len(catalog.attributes)} attributes, "
          f"{len(catalog.private_set)} private, capacity {catalog.capacity})")
    print(f"workload:  {wl_path} ({args.workload_size} queries)")
    print(f"key:       {key_path}")
    return 0


def cmd_calibrate(args) -> int:
    catalog = _catalog(args)
    plain = read_plaintext(catalog, _need(_data_dir(args) / "plaintext", "plaintext directory"))
    base = EngineConfig()
    config = EngineConfig(public_rate=base.public_rate, private_rate=base.public_rate * args.slowdown,
                          network_rate=base.network_rate, combine_rate=base.combine_rate,
                          decrypt_cost=base.decrypt_cost)
    report = calibrate_report(EngineHarness(catalog, plain, _key(args), config))
    if not report.ok:
        print(f"warning: calibration failed ({report.error}); writing default weights", file=sys.stderr)
    w = report.weights
    out = Path(args.out) if args.out else _data_dir(args) / "weights.yaml"
    w.save(out)
    print(f"w1 = {w.w1:.9g}\nw2 = {w.w2:.9g}\nw3 = {w.w3:.9g}\nw4 = {w.w4:.9g}")
    print(f"w1/w2 = {w.w1 / w.w2:.4f}")
    print(f"weights: {out}")
    return 0


def cmd_partition(args) -> int:
    catalog = _catalog(args)
    workload = _workload(args, catalog)
    weights = _weights(args)
    schemes = cost_schemes(catalog, args.partitions)
    plan = partition(args.method, catalog, workload, weights, args.cost_mode, schemes,
                     bound=args.bound, rng_seed=args.seed)
    out = Path(args.out) if args.out else _data_dir(args) / f"plan-{args.method}.json"
    plan.save(out)
    model = WorkloadCostModel(workload, catalog, weights, args.cost_mode, schemes)
    print(_placement_summary(catalog, plan))
    for name, priv in (("all-public", ()), ("all-private", catalog.attribute_names),
                       (plan.method, plan.private_set)):
        print(f"qpc {name:<16}{model.cost(frozenset(priv)):>16.6f}")
    print(f"plan: {out}")
    return 0


def _placement_summary(catalog: Catalog, plan: PlacementPlan) -> str:
    def size(attrs):
        return sum(catalog.attribute(a).size for a in attrs)

    return (f"method {plan.method}: public: {len(plan.public_set)} ({size(plan.public_set)} units), "
            f"private: {len(plan.private_set)} ({size(plan.private_set)} units), "
            f"capacity {catalog.capacity}")


def cmd_rewrite(args) -> int:
    catalog = _placed(args, _catalog(args))
    key = _key(args)
    schemes = build_registry(catalog, key.ident_key, override=args.partitions)
    if args.query:
        queries = [parse(args.query, catalog)]
    elif args.workload:
        queries = _workload(args, catalog)
    else:
        raise UsageError("rewrite needs --query or --workload")
    texts, docs = [], []
    for i, q in enumerate(queries):
        hp = compile_query(q, catalog, schemes)
        texts.append(f"-- query {i} (freq {q.freq})\n{q.text}\n{render_hybrid(hp)}")
        docs.append(json.loads(dumps_hybrid(hp)))
    print("\n\n".join(texts))
    if args.out:
        _write(args.out, json.dumps(docs, indent=2) + "\n")
    return 0


def cmd_run(args) -> int:
    data_dir = _data_dir(args)
    catalog = _placed(args, _catalog(args))
    key = _key(args)
    weights = _weights(args)
    schemes = build_registry(catalog, key.ident_key, override=args.partitions)
    stores = load_fragments(catalog, data_dir, key, schemes)
    workload = _workload(args, catalog)
    model = WorkloadCostModel(workload, catalog, weights, args.cost_mode, cost_schemes(catalog, args.partitions))
    plain = read_plaintext(catalog, data_dir / "plaintext") if args.check else None
    lines = [f"{'query':>5}{'freq':>6}{'rows':>8}{'modeled':>14}{'measured':>14}"]
    traces, modeled_total, measured_total, mismatches = [], 0.0, 0.0, 0
    for i, q in enumerate(workload):
        hp = compile_query(q, catalog, schemes)
        rows, trace = execute(hp, stores, key)
        modeled = model.query_cost(i, catalog.private_set).total
        measured = q.freq * trace.sim_time
        modeled_total += modeled
        measured_total += measured
        lines.append(f"{i:>5}{q.freq:>6}{len(rows):>8}{modeled:>14.4f}{measured:>14.4f}")
        traces.append(f"-- query {i} (freq {q.freq})\n{trace.report()}")
        if plain is not None and sorted(rows) != sorted(ground_truth(q, plain)):
            mismatches += 1
            print(f"query {i}: result differs from plaintext evaluation", file=sys.stderr)
    lines.append(f"{'total':>5}{'':>6}{'':>8}{modeled_total:>14.4f}{measured_total:>14.4f}")
    plan = PlacementPlan.from_private(catalog, catalog.private_set, method="catalog")
    print(_placement_summary(catalog, plan))
    print("\n".join(lines))
    _write(args.trace_out, "\n\n".join(traces) + "\n")
    if mismatches:
        raise errors.HybridCloudError(f"{mismatches} queries differ from plaintext evaluation")
    return 0


# ---------------------------------------------------------------------------
# sweeps


@dataclass
class SweepRow:
    axis: str
    value: float
    method: str
    private_attrs: int
    modeled: float
    measured: float


@dataclass
class Sweep:
    axis: str
    rows: list[SweepRow] = field(default_factory=list)

    def column(self, method: str, what: str = "measured") -> list[float]:
        return [getattr(r, what) for r in self.rows if r.method == method]

    def table(self) -> str:
        head = f"{self.axis:>8}  {'method':<16}{'private':>8}{'modeled':>16}{'measured':>16}"
        body = [f"{r.value:>8g}  {r.method:<16}{r.private_attrs:>8}{r.modeled:>16.4f}{r.measured:>16.4f}"
                for r in self.rows]
        return "\n".join([head, *body])

    def tsv(self) -> str:
        out = ["axis\tvalue\tmethod\tprivate_attrs\tmodeled\tmeasured"]
        out += [f"{r.axis}\t{r.value:g}\t{r.method}\t{r.private_attrs}\t{r.modeled:.6f}\t{r.measured:.6f}"
                for r in self.rows]
        return "\n".join(out) + "\n"


def sweep(axis: str, values: Sequence[float], methods: Sequence[str], catalog: Catalog,
          workload: Sequence[Query], plain, key: SecretKey, weights: CostWeights = DEFAULT_WEIGHTS,
          mode: str = "sum", seed: int = 0, bound: int = 500, partitions: int | None = None,
          config: EngineConfig = EngineConfig()) -> Sweep:
    """Vary one of P (partitions), W (capacity fraction) or S (sensitive fraction).

    Each point re-runs the placement search, then executes the workload under
    the chosen placement; measured time is the frequency-weighted simulated
    time of the engine traces.
    """
    if axis not in SWEEP_DEFAULTS:
        raise UsageError(f"axis must be one of {sorted(SWEEP_DEFAULTS)}")
    out = Sweep(axis)
    cache: dict = {}
    total = sum(a.size for a in catalog.attributes)
    for v in values:
        cat, p = catalog, partitions
        if axis == "P":
            p = int(v)
        elif axis == "W":
            cat = Catalog(catalog.relations, catalog.attributes, catalog.stats,
                          capacity=int(v * total), size_unit=catalog.size_unit)
        else:
            n = len(catalog.attributes)
            rng = np.random.default_rng(seed)
            names = catalog.attribute_names
            chosen = [names[i] for i in sorted(rng.choice(n, size=round(v * n), replace=False))]
            cat = catalog.with_sensitivity(chosen)
        cat = cat.with_placement(())
        schemes = cost_schemes(cat, p)
        model = WorkloadCostModel(workload, cat, weights, mode, schemes)
        for m in methods:
            plan = partition(m, cat, workload, weights, mode, schemes, bound=bound, rng_seed=seed)
            placed = cat.with_placement(plan.private_set)
            run_schemes = build_registry(placed, key.ident_key, override=p)
            stores = build_stores(placed, plain, key, run_schemes, cache)
            measured = 0.0
            for q in workload:
                _, trace = execute(compile_query(q, placed, run_schemes), stores, key, concurrent=False,
                                   config=config)
                measured += q.freq * trace.sim_time
            out.rows.append(SweepRow(axis, float(v), m, len(plan.private_set),
                                     model.cost(plan.private_set), measured))
            log.info("%s=%g %s: modeled %.4f measured %.4f", axis, v, m, out.rows[-1].modeled, measured)
    return out


def cmd_report(args) -> int:
    data_dir = _data_dir(args)
    catalog = _catalog(args)
    key = _key(args)
    workload = _workload(args, catalog)
    plain = read_plaintext(catalog, _need(data_dir / "plaintext", "plaintext directory"))
    values = args.values or SWEEP_DEFAULTS[args.axis]
    methods = args.methods or ("all-public", "all-private", "dp")
    for m in methods:
        if m not in METHODS:
            raise UsageError(f"unknown method {m!r}; choose from {', '.join(METHODS)}")
    result = sweep(args.axis, values, methods, catalog, workload, plain, key, _weights(args),
                   args.cost_mode, args.seed, args.bound, args.partitions)
    print(result.table())
    tsv = Path(args.tsv_out) if args.tsv_out else data_dir / f"sweep-{args.axis}.tsv"
    _write(tsv, result.tsv())
    print(f"tsv: {tsv}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers: {text!r}") from exc


def _methods(text: str) -> list[str]:
    return [m.strip() for m in text.split(",") if m.strip()]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hybridcloud", description=__doc__.splitlines()[0])
    ap.add_argument("--catalog", help=f"catalog YAML (default <data-dir>/{CATALOG_FILE})")
    ap.add_argument("--weights", help="cost weights YAML (default: built-in weights)")
    ap.add_argument("--key-file", help=f"hex key file (default ${KEY_ENV} or <data-dir>/{KEY_FILE})")
    ap.add_argument("--seed", type=int, default=0, help="seed for generation and search")
    ap.add_argument("--verbose", "-v", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    def cost_flags(p):
        p.add_argument("--cost-mode", choices=MODES, default="sum")
        p.add_argument("--partitions", type=int, help="partition count for every ordered attribute")

    g = sub.add_parser("generate", help="write plaintext data, catalog, key and workload")
    g.add_argument("--scale", type=float, default=0.001)
    g.add_argument("--out-dir", default=DEFAULT_DIR)
    g.add_argument("--workload-out")
    g.add_argument("--workload-size", type=int, default=100)
    g.add_argument("--sensitivity", type=float, default=0.5, help="fraction of sensitive attributes")
    g.add_argument("--capacity-fraction", type=float, default=0.3, help="private capacity as a fraction of total size")
    g.set_defaults(func=cmd_generate)

    c = sub.add_parser("calibrate", help="estimate cost weights from timed runs")
    c.add_argument("--data-dir", default=DEFAULT_DIR)
    c.add_argument("--out")
    c.add_argument("--slowdown", type=float, default=7.5, help="private/public per-byte speed ratio")
    c.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("partition", help="choose a private attribute set")
    p.add_argument("--data-dir", default=DEFAULT_DIR)
    p.add_argument("--workload", required=True)
    p.add_argument("--method", choices=METHODS, default="dp")
    p.add_argument("--bound", type=int, default=500, help="hill-climbing swap attempts")
    p.add_argument("--out")
    cost_flags(p)
    p.set_defaults(func=cmd_partition)

    r = sub.add_parser("rewrite", help="print the public/private split of queries")
    r.add_argument("--data-dir", default=DEFAULT_DIR)
    src = r.add_mutually_exclusive_group()
    src.add_argument("--query")
    src.add_argument("--workload")
    r.add_argument("--plan", help="placement plan JSON (default: catalog placement)")
    r.add_argument("--partitions", type=int)
    r.add_argument("--out", help="machine-readable plans (JSON)")
    r.set_defaults(func=cmd_rewrite)

    u = sub.add_parser("run", help="fragment the data and execute a workload")
    u.add_argument("--data-dir", default=DEFAULT_DIR)
    u.add_argument("--workload", required=True)
    u.add_argument("--plan")
    u.add_argument("--trace-out")
    u.add_argument("--check", action="store_true", help="compare every result with plaintext evaluation")
    cost_flags(u)
    u.set_defaults(func=cmd_run)

    s = sub.add_parser("report", help="sweep P, W or S and tabulate modeled and measured cost")
    s.add_argument("--data-dir", default=DEFAULT_DIR)
    s.add_argument("--workload", required=True)
    s.add_argument("--axis", choices=sorted(SWEEP_DEFAULTS), default="P")
    s.add_argument("--values", type=_floats)
    s.add_argument("--methods", type=_methods)
    s.add_argument("--bound", type=int, default=500)
    s.add_argument("--tsv-out")
    cost_flags(s)
    s.set_defaults(func=cmd_report)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (errors.HybridCloudError, UsageError, OSError, ValueError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"error: {msg}", file=sys.stderr)
        return exit_status(exc)


if __name__ == "__main__":
    sys.exit(main())
