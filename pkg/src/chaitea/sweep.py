"""Hyper-parameter grid sweeps and latency-budget selection.

The default grid varies n_c over {3,4,5}, n_t over {3,5,10,20} and the
context cap over {50, 250, 1000, full} characters (48 configurations),
evaluating each at k=100 (all generated candidates).  The budget table
picks, per latency budget, the qualifying row (p90 <= budget) with the
highest saved@100, breaking ties toward lower p90.
"""
from __future__ import annotations

import csv
import time
from dataclasses import dataclass
from itertools import product
from typing import IO, Callable, Sequence

from .boundaries import SuggestionMode
from .candgen import ExpansionPolicy, GenConfig
from .corpus import PrefixInstance
from .metrics import aggregate
from .provider import CompletionProvider
from .simulator import Clock, RequestCache, run_dataset

DEFAULT_GRID_N_C = (3, 4, 5)
DEFAULT_GRID_N_T = (3, 5, 10, 20)
DEFAULT_GRID_HISTORY_CAP: tuple[int | None, ...] = (50, 250, 1000, None)
DEFAULT_BUDGETS_MS: tuple[float, ...] = (150.0, 300.0, 450.0, 600.0, 750.0, float("inf"))

SWEEP_K = 100


@dataclass(frozen=True)
class SweepRow:
    n_c: int
    n_t: int
    history_cap: int | None
    saved_at_100: float
    latency_p90_ms: float

    def to_dict(self) -> dict:
        return {
            "n_c": self.n_c,
            "n_t": self.n_t,
            "history_cap": self.history_cap,
            "saved_at_100": self.saved_at_100,
            "latency_p90_ms": self.latency_p90_ms,
        }


@dataclass
class SweepResult:
    rows: list[SweepRow]
    budget_table: list[tuple[float, SweepRow | None]]

    def to_dict(self) -> dict:
        return {
            "rows": [row.to_dict() for row in self.rows],
            "budget_table": [
                {
                    "budget_ms": None if budget == float("inf") else budget,
                    "row": None if row is None else row.to_dict(),
                }
                for budget, row in self.budget_table
            ],
        }


def _cap_sort_key(cap: int | None) -> float:
    return float("inf") if cap is None else float(cap)


def select_budget_table(
    rows: Sequence[SweepRow], budgets: Sequence[float]
) -> list[tuple[float, SweepRow | None]]:
    """Per budget: the max-saved row with p90 <= budget, or None if no row fits."""
    table = []
    for budget in budgets:
        qualifying = [r for r in rows if r.latency_p90_ms <= budget]
        if not qualifying:
            table.append((budget, None))
            continue
        best = min(
            qualifying,
            key=lambda r: (-r.saved_at_100, r.latency_p90_ms, r.n_c, r.n_t, _cap_sort_key(r.history_cap)),
        )
        table.append((budget, best))
    return table


def run_sweep(
    instances: Sequence[PrefixInstance],
    provider: CompletionProvider,
    *,
    mode: SuggestionMode = SuggestionMode.WORD,
    policy: ExpansionPolicy = ExpansionPolicy.PARTIAL,
    temperature: float = 1.0,
    grid_n_c: Sequence[int] = DEFAULT_GRID_N_C,
    grid_n_t: Sequence[int] = DEFAULT_GRID_N_T,
    grid_history_cap: Sequence[int | None] = DEFAULT_GRID_HISTORY_CAP,
    budgets: Sequence[float] = DEFAULT_BUDGETS_MS,
    seed: int | None = None,
    workers: int = 1,
    clock: Clock = time.perf_counter,
    progress: Callable[[int, int, SweepRow], None] | None = None,
) -> SweepResult:
    """Evaluate every grid point at k=100 and build the budget table.

    Rows are returned sorted by saved@100 descending (ties by p90, then
    grid order) like the full trade-off table.
    """
    instances = list(instances)
    grid = list(product(grid_n_c, grid_n_t, grid_history_cap))
    rows = []
    cache = RequestCache()
    for i, (n_c, n_t, cap) in enumerate(grid):
        cfg = GenConfig(
            n_c=n_c, n_t=n_t, k=SWEEP_K, policy=policy,
            temperature=temperature, history_cap_chars=cap,
        )
        traces = run_dataset(
            instances, provider, cfg, mode, [SWEEP_K],
            seed=seed, cache=cache, workers=workers, clock=clock,
        )
        report = aggregate(traces)
        row = SweepRow(
            n_c=n_c, n_t=n_t, history_cap=cap,
            saved_at_100=report.saved_at_k, latency_p90_ms=report.latency_p90_ms,
        )
        rows.append(row)
        if progress is not None:
            progress(i + 1, len(grid), row)

    rows.sort(key=lambda r: (-r.saved_at_100, r.latency_p90_ms, r.n_c, r.n_t, _cap_sort_key(r.history_cap)))
    return SweepResult(rows=rows, budget_table=select_budget_table(rows, budgets))


def _cap_label(cap: int | None) -> str:
    return "full" if cap is None else str(cap)


def write_rows_csv(rows: Sequence[SweepRow], fp: IO[str]) -> None:
    writer = csv.writer(fp, lineterminator="\n")
    writer.writerow(["n_c", "n_t", "history_cap", "saved_at_100", "latency_p90_ms"])
    for row in rows:
        writer.writerow([row.n_c, row.n_t, _cap_label(row.history_cap), row.saved_at_100, row.latency_p90_ms])


def write_budget_csv(table: Sequence[tuple[float, SweepRow | None]], fp: IO[str]) -> None:
    writer = csv.writer(fp, lineterminator="\n")
    writer.writerow(["budget_ms", "n_c", "n_t", "history_cap", "saved_at_100", "latency_p90_ms"])
    for budget, row in table:
        label = "inf" if budget == float("inf") else budget
        if row is None:
            writer.writerow([label, "", "", "", "", ""])
        else:
            writer.writerow(
                [label, row.n_c, row.n_t, _cap_label(row.history_cap), row.saved_at_100, row.latency_p90_ms]
            )
