"""Simulation benchmark harness: simulate, discover, score over a seeded grid.

Each grid cell runs a fixed number of replicates with seeds derived from the
base seed and the cell/replicate indices, so any row is reproducible in
isolation. Science rows never contain timings (those go to a sidecar file),
which keeps result files byte-identical across reruns and worker counts.
Completed cells are recorded in a manifest with content checksums and skipped
when the harness is re-invoked on the same output directory.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional

import numpy as np

from .metrics import metric_accuracy
from .sample import RunConfig, run_cbl_sample
from .selection import SelectorSpec
from .serialize import write_atomic
from .simulate import Regime, SimSpec, gen_dataset

_GRID_KEYS = ("n", "d_z", "d_x", "sparsity", "snr", "regime", "nonlinear", "method")

_ROW_FIELDS = (
    "cell",
    "rep",
    "n",
    "d_z",
    "d_x",
    "sparsity",
    "snr",
    "regime",
    "nonlinear",
    "method",
    "seed",
    "accuracy",
    "na_rate",
    "n_pairs",
    "n_decided",
    "n_correct",
    "n_precedes",
    "n_preceded_by",
    "n_not_descendant",
    "n_not_ancestor",
    "n_unordered",
    "passes",
    "selector_calls",
)


@dataclass(frozen=True)
class BenchPlan:
    cells: tuple  # tuple of dicts, one per grid cell
    replicates: int
    seed: int
    b_pairs: int
    gamma: float
    max_passes: Optional[int]
    selector_overrides: Mapping


def load_plan(doc: Mapping) -> BenchPlan:
    grid = doc.get("grid")
    if not isinstance(grid, Mapping):
        raise ValueError("bench config needs a 'grid' object")
    defaults = {
        "n": [1000],
        "d_z": [50],
        "d_x": [2],
        "sparsity": [0.5],
        "snr": [2.0],
        "regime": ["edge"],
        "nonlinear": [False],
        "method": ["lasso"],
    }
    axes = []
    for key in _GRID_KEYS:
        raw = grid.get(key, defaults[key])
        if not isinstance(raw, list) or not raw:
            raise ValueError(f"grid.{key} must be a nonempty list")
        axes.append(raw)
    cells = tuple(dict(zip(_GRID_KEYS, combo)) for combo in itertools.product(*axes))
    replicates = int(doc.get("replicates", 1))
    if replicates < 1:
        raise ValueError("replicates must be positive")
    return BenchPlan(
        cells=cells,
        replicates=replicates,
        seed=int(doc.get("seed", 0)),
        b_pairs=int(doc.get("b_pairs", 50)),
        gamma=float(doc.get("gamma", 0.5)),
        max_passes=doc.get("max_passes"),
        selector_overrides=doc.get("selector", {}),
    )


def _derive(*parts: int) -> int:
    return int(np.random.SeedSequence([int(p) & 0xFFFFFFFF for p in parts]).generate_state(1)[0])


def run_replicate(plan: BenchPlan, cell_idx: int, rep: int) -> tuple[dict, float]:
    """One simulate-discover-score pass; returns the science row and wall time."""
    cell = plan.cells[cell_idx]
    seed = _derive(plan.seed, cell_idx, rep)
    spec = SimSpec(
        n=int(cell["n"]),
        d_z=int(cell["d_z"]),
        d_x=int(cell["d_x"]),
        sparsity=float(cell["sparsity"]),
        snr=float(cell["snr"]),
        nonlinear=bool(cell["nonlinear"]),
        regime=Regime(cell["regime"]),
        seed=_derive(seed, 0),
    )
    selector = SelectorSpec(method=str(cell["method"]), **dict(plan.selector_overrides))
    config = RunConfig(
        b_pairs=plan.b_pairs,
        gamma=plan.gamma,
        selector=selector,
        seed=_derive(seed, 1),
        max_passes=plan.max_passes,
    )
    start = time.perf_counter()
    dataset = gen_dataset(spec)
    result = run_cbl_sample(dataset.values, dataset.z_indices, dataset.x_indices, config)
    id_map = {c: dataset.column_vertex(c) for c in dataset.x_indices}
    report = metric_accuracy(result.matrix, dataset.truth, id_map)
    elapsed = time.perf_counter() - start

    kind_counts = {k: 0 for k in ("precedes", "preceded_by", "not_descendant", "not_ancestor", "unordered")}
    for _, kind in result.matrix.items():
        if kind.value in kind_counts:
            kind_counts[kind.value] += 1
    row = {
        "cell": cell_idx,
        "rep": rep,
        **cell,
        "seed": seed,
        "accuracy": "" if report.accuracy is None else repr(report.accuracy),
        "na_rate": repr(report.na_rate),
        "n_pairs": report.n_pairs,
        "n_decided": report.n_decided,
        "n_correct": report.n_correct,
        "n_precedes": kind_counts["precedes"],
        "n_preceded_by": kind_counts["preceded_by"],
        "n_not_descendant": kind_counts["not_descendant"],
        "n_not_ancestor": kind_counts["not_ancestor"],
        "n_unordered": kind_counts["unordered"],
        "passes": result.passes,
        "selector_calls": result.selector_calls,
    }
    return row, elapsed


def _format_rows(rows: list[dict]) -> str:
    lines = [",".join(_ROW_FIELDS)]
    for row in rows:
        lines.append(",".join(str(row[f]) for f in _ROW_FIELDS))
    return "\n".join(lines) + "\n"


def _task(args):
    plan, cell_idx, rep = args
    row, elapsed = run_replicate(plan, cell_idx, rep)
    return cell_idx, rep, row, elapsed


def run_bench(plan: BenchPlan, out_dir: str | Path, threads: int = 1) -> dict:
    """Execute all pending cells; returns the aggregate document.

    Rows are computed possibly out of order, then sorted by (cell, replicate)
    before writing, so outputs are independent of scheduling.
    """
    out = Path(out_dir)
    cells_dir = out / "cells"
    cells_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = out / "manifest.json"
    manifest = {}
    if manifest_path.exists():
        manifest = json.loads(manifest_path.read_text())

    pending = []
    for cell_idx, cell in enumerate(plan.cells):
        entry = manifest.get(str(cell_idx))
        cell_file = cells_dir / f"cell_{cell_idx:04d}.csv"
        if entry and entry.get("params") == cell and cell_file.exists():
            digest = hashlib.sha256(cell_file.read_bytes()).hexdigest()
            if digest == entry.get("sha256"):
                continue
        pending.append(cell_idx)

    tasks = [(plan, c, r) for c in pending for r in range(plan.replicates)]
    results: list[tuple[int, int, dict, float]] = []
    if threads > 1 and tasks:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_task, tasks))
    else:
        results = [_task(t) for t in tasks]
    results.sort(key=lambda item: (item[0], item[1]))

    by_cell: dict[int, list[tuple[int, dict, float]]] = {}
    for cell_idx, rep, row, elapsed in results:
        by_cell.setdefault(cell_idx, []).append((rep, row, elapsed))

    for cell_idx, packed in by_cell.items():
        rows = [row for _, row, _ in packed]
        text = _format_rows(rows)
        cell_file = cells_dir / f"cell_{cell_idx:04d}.csv"
        write_atomic(cell_file, text)
        timing_lines = ["cell,rep,seconds"]
        timing_lines += [f"{cell_idx},{rep},{elapsed:.6f}" for rep, _, elapsed in packed]
        write_atomic(cells_dir / f"cell_{cell_idx:04d}_timing.csv", "\n".join(timing_lines) + "\n")
        manifest[str(cell_idx)] = {
            "params": dict(plan.cells[cell_idx]),
            "replicates": plan.replicates,
            "sha256": hashlib.sha256(text.encode()).hexdigest(),
        }
    write_atomic(manifest_path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    # stitch the full results file and the aggregate from the per-cell files
    all_rows: list[str] = []
    aggregate = {}
    for cell_idx, cell in enumerate(plan.cells):
        cell_file = cells_dir / f"cell_{cell_idx:04d}.csv"
        if not cell_file.exists():
            continue
        lines = cell_file.read_text().strip().split("\n")
        all_rows.extend(lines[1:])
        header = lines[0].split(",")
        acc_idx = header.index("accuracy")
        na_idx = header.index("na_rate")
        accs, nas = [], []
        for line in lines[1:]:
            fields = line.split(",")
            if fields[acc_idx] != "":
                accs.append(float(fields[acc_idx]))
            nas.append(float(fields[na_idx]))
        aggregate[str(cell_idx)] = {
            "params": dict(cell),
            "replicates": len(lines) - 1,
            "accuracy_mean": float(np.mean(accs)) if accs else None,
            "accuracy_se": float(np.std(accs, ddof=1) / np.sqrt(len(accs))) if len(accs) > 1 else None,
            "na_rate_mean": float(np.mean(nas)) if nas else None,
        }
    write_atomic(out / "results.csv", ",".join(_ROW_FIELDS) + "\n" + "\n".join(all_rows) + "\n")
    write_atomic(out / "aggregate.json", json.dumps(aggregate, indent=2, sort_keys=True) + "\n")
    return aggregate
