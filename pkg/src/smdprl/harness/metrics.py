"""Append-only metrics rows and figure-data emission.

Metrics files are CSV with the fixed header
``run,seed,algo,dataset,index,metric,value``; one metric per row.
Values are rendered with ``repr`` so identical runs produce
byte-identical files.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Iterable, NamedTuple

CSV_FIELDS = ("run", "seed", "algo", "dataset", "index", "metric", "value")


class MetricsRow(NamedTuple):
    run: str
    seed: int
    algo: str
    dataset: str
    index: int
    metric: str
    value: float


def _check(row: MetricsRow) -> MetricsRow:
    if not math.isfinite(row.value):
        raise ValueError(f"metric {row.metric!r} has non-finite value {row.value}")
    return row


def write_metrics(rows: Iterable[MetricsRow], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(CSV_FIELDS)
        for row in rows:
            _check(row)
            writer.writerow(
                [row.run, row.seed, row.algo, row.dataset, row.index, row.metric, repr(row.value)]
            )


def read_metrics(path: str | Path) -> list[MetricsRow]:
    rows = []
    with Path(path).open("r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if tuple(header or ()) != CSV_FIELDS:
            raise ValueError(f"{path}: unexpected metrics header {header}")
        for record in reader:
            run, seed, algo, dataset, index, metric, value = record
            rows.append(MetricsRow(run, int(seed), algo, dataset, int(index), metric, float(value)))
    return rows


def _seed_columns(rows: list[MetricsRow]) -> list[int]:
    return sorted({row.seed for row in rows})


def emit_plot_data(rows: Iterable[MetricsRow], grouping: str, path: str | Path) -> None:
    """Write per-figure CSV with one mean column plus one column per seed.

    ``grouping="figure2"`` pivots the online evaluation traces: one row
    per (algo, evaluation index).  ``grouping="figure3"`` pivots offline
    test returns: one row per (algo, dataset descriptor).
    """
    rows = list(rows)
    if grouping == "figure2":
        picked = [r for r in rows if r.metric == "eval_return_undiscounted"]
        key_fields = ("algo", "index")
    elif grouping == "figure3":
        picked = [r for r in rows if r.metric == "test_return_mean"]
        key_fields = ("algo", "dataset")
    else:
        raise ValueError(f"unknown grouping {grouping!r}")
    if not picked:
        raise ValueError(f"no rows matched grouping {grouping!r}")
    seeds = _seed_columns(picked)
    cells: dict[tuple, dict[int, float]] = {}
    for row in picked:
        key = tuple(getattr(row, field) for field in key_fields)
        cells.setdefault(key, {})[row.seed] = row.value
    with Path(path).open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow([*key_fields, *(f"seed_{s}" for s in seeds), "mean"])
        for key in sorted(cells):
            by_seed = cells[key]
            values = [by_seed[s] for s in seeds if s in by_seed]
            mean = sum(values) / len(values)
            writer.writerow(
                [*key, *(repr(by_seed[s]) if s in by_seed else "" for s in seeds), repr(mean)]
            )
