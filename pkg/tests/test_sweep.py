from __future__ import annotations

import io
import math

import pytest

from chaitea import SuggestionMode, turn_instances
from chaitea.simulator import NULL_CLOCK
from chaitea.sweep import (
    DEFAULT_BUDGETS_MS,
    DEFAULT_GRID_HISTORY_CAP,
    DEFAULT_GRID_N_C,
    DEFAULT_GRID_N_T,
    SweepRow,
    run_sweep,
    select_budget_table,
    write_budget_csv,
    write_rows_csv,
)
from synthproviders import SyntheticProvider


def _row(n_c, n_t, cap, saved, p90):
    return SweepRow(n_c=n_c, n_t=n_t, history_cap=cap, saved_at_100=saved, latency_p90_ms=p90)


# --------------------------------------------------------------------------
# Budget selection (pure)
# --------------------------------------------------------------------------


def test_budget_picks_max_saved_within_budget():
    rows = [_row(5, 3, 50, 23.45, 148.0), _row(5, 5, 250, 38.32, 275.0)]
    table = select_budget_table(rows, [300.0])
    assert table[0][1].saved_at_100 == 38.32


def test_budget_below_every_p90_is_empty():
    rows = [_row(5, 3, 50, 23.45, 148.0)]
    table = select_budget_table(rows, [1.0])
    assert table[0][1] is None


def test_budget_rows_satisfy_budget_and_monotonicity():
    rows = [
        _row(3, 3, 50, 10.0, 100.0),
        _row(4, 5, 250, 20.0, 300.0),
        _row(5, 10, 1000, 30.0, 600.0),
        _row(5, 20, None, 35.0, 900.0),
    ]
    budgets = [50.0, 100.0, 300.0, 600.0, 900.0, float("inf")]
    table = select_budget_table(rows, budgets)
    previous = -math.inf
    for budget, row in table:
        if row is None:
            continue
        assert row.latency_p90_ms <= budget
        assert row.saved_at_100 >= previous
        previous = row.saved_at_100


def test_budget_tie_breaks_toward_lower_p90():
    rows = [_row(3, 3, 50, 20.0, 120.0), _row(4, 5, 50, 20.0, 80.0)]
    table = select_budget_table(rows, [200.0])
    assert table[0][1].latency_p90_ms == 80.0


# --------------------------------------------------------------------------
# Full sweep on the synthetic provider
# --------------------------------------------------------------------------


@pytest.fixture(scope="module")
def sweep_result(eval_conversations):
    instances = [i for c in eval_conversations[:12] for i in turn_instances(c) if i.full_turn_len >= 2]
    return run_sweep(
        instances,
        SyntheticProvider(),
        mode=SuggestionMode.WORD,
        seed=0,
        clock=NULL_CLOCK,
    )


def test_default_grid_emits_48_rows(sweep_result):
    assert len(sweep_result.rows) == 48
    combos = {(r.n_c, r.n_t, r.history_cap) for r in sweep_result.rows}
    assert len(combos) == 48
    assert combos == {
        (a, b, c) for a in DEFAULT_GRID_N_C for b in DEFAULT_GRID_N_T for c in DEFAULT_GRID_HISTORY_CAP
    }


def test_rows_sorted_by_saved_descending(sweep_result):
    saved = [r.saved_at_100 for r in sweep_result.rows]
    assert saved == sorted(saved, reverse=True)


def test_budget_table_is_provably_optimal(sweep_result):
    # Brute-force re-scan of the rows for every budget.
    assert len(sweep_result.budget_table) == len(DEFAULT_BUDGETS_MS)
    for budget, row in sweep_result.budget_table:
        qualifying = [r for r in sweep_result.rows if r.latency_p90_ms <= budget]
        if not qualifying:
            assert row is None
            continue
        best_saved = max(r.saved_at_100 for r in qualifying)
        assert row.latency_p90_ms <= budget
        assert row.saved_at_100 == best_saved
        assert row.latency_p90_ms == min(
            r.latency_p90_ms for r in qualifying if r.saved_at_100 == best_saved
        )


def test_synthetic_latency_separates_configs(sweep_result):
    # p90 grows with n_c * n_t under the synthetic latency model.
    by_cost = sorted(sweep_result.rows, key=lambda r: r.n_c * r.n_t)
    assert by_cost[0].latency_p90_ms < by_cost[-1].latency_p90_ms


def test_csv_emission(sweep_result):
    rows_csv = io.StringIO()
    write_rows_csv(sweep_result.rows, rows_csv)
    lines = rows_csv.getvalue().splitlines()
    assert lines[0] == "n_c,n_t,history_cap,saved_at_100,latency_p90_ms"
    assert len(lines) == 49
    assert sum(1 for line in lines if line.endswith(",full") or ",full," in line) == 12

    budget_csv = io.StringIO()
    write_budget_csv(sweep_result.budget_table, budget_csv)
    blines = budget_csv.getvalue().splitlines()
    assert blines[0] == "budget_ms,n_c,n_t,history_cap,saved_at_100,latency_p90_ms"
    assert len(blines) == 1 + len(DEFAULT_BUDGETS_MS)
    assert blines[-1].startswith("inf,")


def test_sweep_result_json_round_trip(sweep_result):
    doc = sweep_result.to_dict()
    assert len(doc["rows"]) == 48
    assert len(doc["budget_table"]) == 6
    assert doc["budget_table"][-1]["budget_ms"] is None  # inf encodes as null
