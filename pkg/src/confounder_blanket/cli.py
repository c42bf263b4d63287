"""Command-line entry points.

Exit codes: 0 on success, 2 on configuration errors, 3 on data errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .bench import load_plan, run_bench
from .graphs import GraphError, TieredGraph
from .metrics import metric_accuracy
from .oracle import run_cbl_oracle
from .sample import RunConfig, run_cbl_sample
from .selection import SelectorSpec
from .serialize import (
    DataError,
    load_matrix_document,
    read_csv,
    read_tiers,
    sample_result_document,
    write_atomic,
    write_csv,
    write_tiers,
)
from .simulate import Regime, SimSpec, gen_dataset
from .stability import max_errors_bound, rconcave_tail_bound

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3


class ConfigError(ValueError):
    pass


def _load_json(path: str, kind: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"{kind} file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}")


def _sim_spec_from(doc: dict, seed_override: int | None) -> SimSpec:
    try:
        return SimSpec(
            n=int(doc.get("n", 1000)),
            d_z=int(doc.get("d_z", 50)),
            d_x=int(doc.get("d_x", 2)),
            sparsity=float(doc.get("sparsity", 0.5)),
            rho=float(doc.get("rho", 0.25)),
            snr=float(doc.get("snr", 2.0)),
            nonlinear=bool(doc.get("nonlinear", False)),
            regime=Regime(doc.get("regime", "edge")),
            seed=int(seed_override if seed_override is not None else doc.get("seed", 0)),
            x_sparsity=doc.get("x_sparsity"),
        )
    except ValueError as exc:
        raise ConfigError(f"invalid simulation spec: {exc}")


def _run_config_from(doc: dict, seed_override: int | None, threads: int) -> RunConfig:
    try:
        selector = SelectorSpec(**doc.get("selector", {}))
        return RunConfig(
            b_pairs=int(doc.get("b_pairs", 50)),
            gamma=float(doc.get("gamma", 0.5)),
            selector=selector,
            seed=int(seed_override if seed_override is not None else doc.get("seed", 0)),
            max_passes=doc.get("max_passes"),
            n_jobs=threads,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid run config: {exc}")


def cmd_simulate(args) -> int:
    doc = _load_json(args.spec, "simulation spec") if args.spec else {}
    spec = _sim_spec_from(doc, args.seed)
    dataset = gen_dataset(spec)
    write_csv(args.out, dataset.values, dataset.columns)
    if args.truth:
        write_atomic(args.truth, dataset.truth.to_json() + "\n")
    if args.tiers:
        write_tiers(args.tiers, dataset.tiers)
    print(f"wrote {dataset.values.shape[0]} rows x {dataset.values.shape[1]} columns to {args.out}")
    return EXIT_OK


def cmd_discover(args) -> int:
    values, columns = read_csv(args.data)
    z_cols, x_cols = read_tiers(args.tiers, columns)
    doc = _load_json(args.config, "run config") if args.config else {}
    config = _run_config_from(doc, args.seed, args.threads)
    result = run_cbl_sample(values, z_cols, x_cols, config)
    names = {c: name for c, name in enumerate(columns)}
    payload = sample_result_document(result, names, evidence=args.evidence)
    write_atomic(args.out, json.dumps(payload, indent=2) + "\n")
    decided = sum(1 for _, kind in result.matrix.items() if kind.value != "na")
    print(f"decided {decided}/{len(result.matrix.pairs())} pairs in {result.passes} passes")
    return EXIT_OK


def cmd_oracle(args) -> int:
    try:
        graph = TieredGraph.from_json(Path(args.graph).read_text())
    except FileNotFoundError:
        raise ConfigError(f"graph file not found: {args.graph}")
    result = run_cbl_oracle(graph, record_transcript=args.transcript)
    names = {v.id: v.display_name() for v in graph.vertices}
    payload = result.matrix.to_json_dict(names)
    payload["passes"] = result.passes
    payload["n_queries"] = result.n_queries
    if args.transcript and result.transcript is not None:
        payload["transcript"] = [
            {
                "kind": q.kind.value,
                "i": names[q.i],
                "j": names[q.j],
                "witness": None if q.w is None else names[q.w],
                "include_other": q.include_j,
                "separated": answer,
                "sweep": sweep,
            }
            for q, answer, sweep in result.transcript.entries
        ]
    write_atomic(args.out, json.dumps(payload, indent=2) + "\n")
    print(f"oracle finished in {result.passes} passes, {result.n_queries} queries")
    return EXIT_OK


def cmd_bound(args) -> int:
    if not (0 < args.tau <= 1):
        raise ConfigError("tau must lie in (0, 1]")
    if args.r >= 0:
        raise ConfigError("r must be negative")
    d_value = rconcave_tail_bound(args.theta, args.tau, args.B, args.r)
    print(f"D(theta={args.theta}, tau={args.tau}, B={args.B}, r={args.r}) = {d_value:.6g}")
    composite = max_errors_bound(args.theta, args.tau, args.B, args.low_count)
    print(
        f"expected low-rate selections cap at tau={args.tau} with {args.low_count} "
        f"low-rate candidates: {composite:.6g}"
    )
    return EXIT_OK


def cmd_bench(args) -> int:
    doc = _load_json(args.config, "bench config")
    if args.seed is not None:
        doc["seed"] = args.seed
    try:
        plan = load_plan(doc)
    except ValueError as exc:
        raise ConfigError(str(exc))
    aggregate = run_bench(plan, args.out, threads=args.threads)
    print(f"bench complete: {len(aggregate)} cells in {args.out}")
    return EXIT_OK


def cmd_score(args) -> int:
    matrix_doc = _load_json(args.matrix, "matrix document")
    try:
        truth = TieredGraph.from_json(Path(args.truth).read_text())
    except FileNotFoundError:
        raise ConfigError(f"graph file not found: {args.truth}")
    matrix, ids = load_matrix_document(matrix_doc)
    name_to_vertex = {v.display_name(): v.id for v in truth.vertices}
    id_map = {}
    for label, mid in ids.items():
        if isinstance(label, str):
            if label not in name_to_vertex:
                raise DataError(f"matrix variable {label!r} missing from the truth graph")
            id_map[mid] = name_to_vertex[label]
        else:
            id_map[mid] = label
    report = metric_accuracy(matrix, truth, id_map)
    payload = report.to_json_dict()
    if args.out:
        write_atomic(args.out, json.dumps(payload, indent=2) + "\n")
    print(json.dumps(payload, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cbl",
        description="Ancestral discovery behind a background covariate tier",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw a synthetic dataset")
    p.add_argument("--spec", help="simulation spec JSON")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--truth", help="write the truth graph JSON here")
    p.add_argument("--tiers", help="write the tier manifest JSON here")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("discover", help="run finite-sample discovery on a data table")
    p.add_argument("--data", required=True, help="input CSV")
    p.add_argument("--tiers", required=True, help="tier manifest JSON")
    p.add_argument("--config", help="run config JSON")
    p.add_argument("--out", required=True, help="result JSON path")
    p.add_argument("--evidence", choices=("summary", "full"), default="summary")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_discover)

    p = sub.add_parser("oracle", help="run exact discovery on a known graph")
    p.add_argument("--graph", required=True, help="graph JSON")
    p.add_argument("--out", required=True, help="matrix JSON path")
    p.add_argument("--transcript", action="store_true", help="record every query")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("bound", help="print the worst-case tail bound")
    p.add_argument("--theta", type=float, required=True)
    p.add_argument("--tau", type=float, required=True)
    p.add_argument("--B", type=int, required=True)
    p.add_argument("--r", type=float, default=-0.25)
    p.add_argument("--low-count", type=int, default=1)
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("bench", help="run a simulation grid")
    p.add_argument("--config", required=True, help="bench config JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("score", help="score a matrix against a truth graph")
    p.add_argument("--matrix", required=True, help="matrix or result JSON")
    p.add_argument("--truth", required=True, help="truth graph JSON")
    p.add_argument("--out", help="optional score JSON path")
    p.set_defaults(func=cmd_score)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, GraphError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
