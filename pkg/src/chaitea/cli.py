"""Command-line entry point: curate, stats, train-ngram, run, sweep, report.

Configuration for `run` and `sweep` comes from an optional JSON file plus
flag overrides; the fully resolved configuration is persisted next to the
outputs and embedded in reports and step logs, so any run can be
reproduced from its own artifacts.

Environment: CHAITEA_ENDPOINT (default HTTP provider URL), CHAITEA_SEED
(default seed).  Exit codes: 0 ok, 1 runtime failure, 2 invalid input or
configuration.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path
from typing import Sequence

from . import metrics, steplog, sweep as sweep_mod
from .boundaries import SuggestionMode
from .candgen import ExpansionPolicy, GenConfig
from .corpus import (
    Granularity,
    count_instances,
    load_conversations,
    parse_oasst,
    parse_sharegpt,
    save_conversations,
    turn_instances,
    write_instance_cache,
)
from .ngram import NgramModel, NgramProvider
from .provider import HttpProvider, ProviderError, TimingOverride
from .simulator import NULL_CLOCK, RequestCache, run_dataset

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2

PRESETS = {
    "best": {"n_c": 5, "n_t": 20},
    "fast": {"n_c": 1, "n_t": 5},
}

RUN_CONFIG_DEFAULTS = {
    "dataset": None,            # path to canonical conversation JSONL
    "provider": None,           # {"ngram": model_path} or {"http": endpoint}
    "n_c": 5,
    "n_t": 20,
    "k_list": [1, 3, 100],
    "policy": "partial",
    "temperature": 1.0,
    "history_cap_chars": None,  # null = full context
    "mode": "word",
    "seed": 0,
    "workers": 0,               # 0 = available parallelism
    "out_dir": "out",
    "limit_turns": None,
    "deterministic_timing": False,
}


class UsageError(Exception):
    pass


def _fail(message: str, code: int) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _dump_json(obj: dict) -> str:
    return json.dumps(obj, ensure_ascii=False, sort_keys=True, indent=2) + "\n"


# --------------------------------------------------------------------------
# curate / stats
# --------------------------------------------------------------------------


def _read_raw_records(path: Path):
    text = path.read_text(encoding="utf-8")
    stripped = text.lstrip()
    if stripped.startswith("["):
        yield from json.loads(text)
        return
    for line in text.splitlines():
        line = line.strip()
        if line:
            yield json.loads(line)


def _print_stats_table(columns: list[tuple[str, int, int, int]]) -> None:
    label_width = len("Conversations") + 2
    col_width = max(14, max(len(name) for name, *_ in columns) + 2)
    header = "".join(f"{name:>{col_width}}" for name, *_ in columns)
    print(f"{'':<{label_width}}{header}")
    for label, idx in (("Conversations", 1), ("Messages", 2), ("Prefixes", 3)):
        row = "".join(f"{col[idx]:>{col_width},}" for col in columns)
        print(f"{label:<{label_width}}{row}")


def cmd_curate(args: argparse.Namespace) -> int:
    in_path = Path(args.input)
    if not in_path.exists():
        return _fail(f"input file not found: {in_path}", EXIT_USAGE)
    records = list(_read_raw_records(in_path))
    if args.dataset == "oasst":
        convs, stats = parse_oasst(records)
    else:
        convs, stats = parse_sharegpt(records)
    if not convs:
        return _fail("empty training corpus", EXIT_USAGE)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    out_path = out_dir / f"{args.dataset}_{args.split}.jsonl"
    with out_path.open("w", encoding="utf-8") as fp:
        save_conversations(convs, fp)

    prefixes = count_instances(convs, Granularity.CHAR)
    name = f"{args.dataset}/{args.split}"
    _print_stats_table([(name, stats.conversations, stats.messages, prefixes)])
    print(f"conversations={stats.conversations}, messages={stats.messages}, prefixes={prefixes}")
    dropped = {k: v for k, v in stats.as_dict().items() if k.startswith(("dropped", "malformed", "orphan")) and v}
    if dropped:
        print("dropped: " + ", ".join(f"{k}={v}" for k, v in sorted(dropped.items())))
    print(f"wrote {out_path}")

    if args.instance_cache:
        cache_path = out_dir / f"{args.dataset}_{args.split}_instances_{args.granularity}.jsonl"
        with cache_path.open("w", encoding="utf-8") as fp:
            n = write_instance_cache(
                convs, fp, Granularity(args.granularity), dataset=args.dataset, split=args.split
            )
        print(f"wrote {cache_path} ({n} instances)")
    return EXIT_OK


def cmd_stats(args: argparse.Namespace) -> int:
    columns = []
    for path_str in args.inputs:
        path = Path(path_str)
        if not path.exists():
            return _fail(f"input file not found: {path}", EXIT_USAGE)
        with path.open(encoding="utf-8") as fp:
            convs = load_conversations(fp)
        columns.append(
            (
                path.stem,
                len(convs),
                sum(len(c.messages) for c in convs),
                count_instances(convs, Granularity.CHAR),
            )
        )
    _print_stats_table(columns)
    return EXIT_OK


# --------------------------------------------------------------------------
# train-ngram
# --------------------------------------------------------------------------


def cmd_train_ngram(args: argparse.Namespace) -> int:
    in_path = Path(args.input)
    if not in_path.exists():
        return _fail(f"input file not found: {in_path}", EXIT_USAGE)
    with in_path.open(encoding="utf-8") as fp:
        convs = load_conversations(fp)
    try:
        model = NgramModel.train(convs, order=args.order)
    except ValueError as exc:
        return _fail(str(exc), EXIT_USAGE)
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with out_path.open("w", encoding="utf-8") as fp:
        model.save(fp)
    print(f"trained order-{model.order} model on {len(convs)} conversations "
          f"(vocab={model.vocab_size}); wrote {out_path}")
    return EXIT_OK


# --------------------------------------------------------------------------
# run / sweep configuration
# --------------------------------------------------------------------------


# Keys a sweep config file may carry beyond the run keys.
SWEEP_EXTRA_KEYS = frozenset({"grid", "budgets"})


def _load_config_file(path: str | None, allowed_extra: frozenset = frozenset()) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise UsageError(f"config file not found: {p}")
    try:
        obj = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise UsageError("config file must contain a JSON object")
    unknown = set(obj) - set(RUN_CONFIG_DEFAULTS) - allowed_extra
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
    return obj


def _resolve_run_config(args: argparse.Namespace, allowed_extra: frozenset = frozenset()) -> dict:
    config = dict(RUN_CONFIG_DEFAULTS)
    config.update(_load_config_file(args.config, allowed_extra))

    if args.preset:
        config.update(PRESETS[args.preset])
    overrides = {
        "dataset": args.dataset,
        "n_c": args.n_c,
        "n_t": args.n_t,
        "policy": args.policy,
        "temperature": args.temperature,
        "mode": args.mode,
        "seed": args.seed,
        "workers": args.workers,
        "out_dir": args.out_dir,
        "limit_turns": args.limit_turns,
    }
    for key, value in overrides.items():
        if value is not None:
            config[key] = value
    if getattr(args, "k_list", None):
        config["k_list"] = [int(k) for k in args.k_list.split(",")]
    if args.history_cap is not None:
        config["history_cap_chars"] = None if args.history_cap == "full" else int(args.history_cap)
    if args.deterministic_timing:
        config["deterministic_timing"] = True

    if args.ngram_model is not None and args.endpoint is not None:
        raise UsageError("exactly one provider is required (got both --ngram-model and --endpoint)")
    if args.ngram_model is not None:
        config["provider"] = {"ngram": args.ngram_model}
    elif args.endpoint is not None:
        config["provider"] = {"http": args.endpoint}
    elif config["provider"] is None and os.environ.get("CHAITEA_ENDPOINT"):
        config["provider"] = {"http": os.environ["CHAITEA_ENDPOINT"]}

    if config["seed"] is None:
        config["seed"] = int(os.environ.get("CHAITEA_SEED", "0"))

    _validate_run_config(config)
    return config


def _validate_run_config(config: dict) -> None:
    if not config.get("dataset"):
        raise UsageError("a dataset path is required (config 'dataset' or --dataset)")
    provider = config.get("provider")
    if not isinstance(provider, dict) or len(provider) != 1 or next(iter(provider)) not in ("ngram", "http"):
        raise UsageError("exactly one provider is required: {'ngram': path} or {'http': endpoint}")
    k_list = config.get("k_list")
    if (
        not isinstance(k_list, list)
        or not k_list
        or any(not isinstance(k, int) or k < 1 for k in k_list)
        or k_list != sorted(set(k_list))
    ):
        raise UsageError("k_list must be a non-empty ascending list of distinct positive integers")
    if config["mode"] not in ("word", "char"):
        raise UsageError("mode must be 'word' or 'char'")
    if config["seed"] is not None and config["seed"] < 0:
        raise UsageError("seed must be a non-negative integer")
    if config["policy"] not in [p.value for p in ExpansionPolicy]:
        raise UsageError(f"policy must be one of {[p.value for p in ExpansionPolicy]}")


def _build_provider(config: dict):
    kind, value = next(iter(config["provider"].items()))
    if kind == "ngram":
        path = Path(value)
        if not path.exists():
            raise UsageError(f"model file not found: {path}")
        with path.open(encoding="utf-8") as fp:
            provider = NgramProvider(NgramModel.load(fp))
    else:
        provider = HttpProvider(value)
    if config["deterministic_timing"]:
        provider = TimingOverride(provider, 0.0)
    return provider


def _load_turns(config: dict):
    path = Path(config["dataset"])
    if not path.exists():
        raise UsageError(f"dataset file not found: {path}")
    with path.open(encoding="utf-8") as fp:
        convs = load_conversations(fp)
    instances = [inst for conv in convs for inst in turn_instances(conv)]
    limit = config.get("limit_turns")
    if limit:
        instances = instances[: int(limit)]
    if not instances:
        raise UsageError("dataset contains no user turns")
    return instances


def _gen_config(config: dict, k: int) -> GenConfig:
    return GenConfig(
        n_c=config["n_c"],
        n_t=config["n_t"],
        k=k,
        policy=ExpansionPolicy(config["policy"]),
        temperature=config["temperature"],
        history_cap_chars=config["history_cap_chars"],
    )


def _effective_workers(config: dict) -> int:
    workers = config.get("workers") or 0
    return workers if workers > 0 else (os.cpu_count() or 1)


# --------------------------------------------------------------------------
# run
# --------------------------------------------------------------------------


def cmd_run(args: argparse.Namespace) -> int:
    try:
        config = _resolve_run_config(args)
        instances = _load_turns(config)
        provider = _build_provider(config)
    except UsageError as exc:
        return _fail(str(exc), EXIT_USAGE)

    out_dir = Path(config["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.json").write_text(_dump_json(config), encoding="utf-8")

    clock = NULL_CLOCK if config["deterministic_timing"] else time.perf_counter
    cache = RequestCache()
    try:
        traces = run_dataset(
            instances,
            provider,
            _gen_config(config, config["k_list"][0]),
            SuggestionMode(config["mode"]),
            config["k_list"],
            seed=config["seed"],
            cache=cache,
            workers=_effective_workers(config),
            clock=clock,
        )
        reports = metrics.aggregate_by_k(traces, config)
    except (ProviderError, ValueError) as exc:
        return _fail(str(exc), EXIT_RUNTIME)

    with (out_dir / "steps.jsonl").open("w", encoding="utf-8") as fp:
        steplog.write_step_log(traces, fp, config)
    report_doc = {"format_version": 1, "config": config, "reports": [r.to_dict() for r in reports]}
    (out_dir / "report.json").write_text(_dump_json(report_doc), encoding="utf-8")
    with (out_dir / "k_curve.csv").open("w", encoding="utf-8") as fp:
        metrics.write_k_curve_csv(reports, fp)
    with (out_dir / "accepted_lengths.csv").open("w", encoding="utf-8") as fp:
        metrics.write_hist_csv(reports[-1], fp)

    for rep in reports:
        print(
            f"k={rep.k}: saved@k={rep.saved_at_k:.4f} acc_rate@k={rep.acc_rate_at_k:.4f} "
            f"latency mean={rep.latency_mean_ms:.1f}ms p90={rep.latency_p90_ms:.1f}ms "
            f"(turns={rep.included_turns}, excluded={rep.excluded_turns})"
        )
    print(f"wrote {out_dir}/steps.jsonl, report.json, k_curve.csv, accepted_lengths.csv "
          f"(provider calls: {cache.misses}, cache hits: {cache.hits})")
    return EXIT_OK


# --------------------------------------------------------------------------
# sweep
# --------------------------------------------------------------------------


def _parse_int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x]


def _parse_cap_list(text: str) -> list[int | None]:
    out: list[int | None] = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        out.append(None if item.lower() in ("full", "inf") else int(item))
    return out


def _parse_budgets(text: str) -> list[float]:
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        out.append(float("inf") if item.lower() == "inf" else float(item))
    return out


def cmd_sweep(args: argparse.Namespace) -> int:
    try:
        config = _resolve_run_config(args, SWEEP_EXTRA_KEYS)
        instances = _load_turns(config)
        provider = _build_provider(config)
        file_grid = config.pop("grid", None) or {}
        file_budgets = config.pop("budgets", None)
        grid_n_c = (
            _parse_int_list(args.grid_n_c)
            if args.grid_n_c is not None
            else [int(x) for x in file_grid.get("n_c", sweep_mod.DEFAULT_GRID_N_C)]
        )
        grid_n_t = (
            _parse_int_list(args.grid_n_t)
            if args.grid_n_t is not None
            else [int(x) for x in file_grid.get("n_t", sweep_mod.DEFAULT_GRID_N_T)]
        )
        grid_cap = (
            _parse_cap_list(args.grid_history_cap)
            if args.grid_history_cap is not None
            else [
                None if c in (None, "full") else int(c)
                for c in file_grid.get("history_cap", sweep_mod.DEFAULT_GRID_HISTORY_CAP)
            ]
        )
        if args.budgets is not None:
            budgets = _parse_budgets(args.budgets)
        elif file_budgets is not None:
            budgets = [float("inf") if b == "inf" else float(b) for b in file_budgets]
        else:
            budgets = list(sweep_mod.DEFAULT_BUDGETS_MS)
        if not grid_n_c or not grid_n_t or not grid_cap:
            raise UsageError("sweep grid must be non-empty")
    except UsageError as exc:
        return _fail(str(exc), EXIT_USAGE)

    out_dir = Path(config["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    sweep_config = dict(config)
    sweep_config["grid"] = {"n_c": grid_n_c, "n_t": grid_n_t,
                            "history_cap": [c if c is not None else "full" for c in grid_cap]}
    sweep_config["budgets"] = [b if b != float("inf") else "inf" for b in budgets]
    (out_dir / "config.json").write_text(_dump_json(sweep_config), encoding="utf-8")

    clock = NULL_CLOCK if config["deterministic_timing"] else time.perf_counter
    try:
        result = sweep_mod.run_sweep(
            instances,
            provider,
            mode=SuggestionMode(config["mode"]),
            policy=ExpansionPolicy(config["policy"]),
            temperature=config["temperature"],
            grid_n_c=grid_n_c,
            grid_n_t=grid_n_t,
            grid_history_cap=grid_cap,
            budgets=budgets,
            seed=config["seed"],
            workers=_effective_workers(config),
            clock=clock,
            progress=lambda done, total, row: print(
                f"[{done}/{total}] n_c={row.n_c} n_t={row.n_t} cap={row.history_cap or 'full'} "
                f"saved@100={row.saved_at_100:.4f} p90={row.latency_p90_ms:.1f}ms"
            ),
        )
    except (ProviderError, ValueError) as exc:
        return _fail(str(exc), EXIT_RUNTIME)

    with (out_dir / "sweep_rows.csv").open("w", encoding="utf-8") as fp:
        sweep_mod.write_rows_csv(result.rows, fp)
    with (out_dir / "budget_table.csv").open("w", encoding="utf-8") as fp:
        sweep_mod.write_budget_csv(result.budget_table, fp)
    (out_dir / "sweep.json").write_text(
        _dump_json({"format_version": 1, "config": sweep_config, **result.to_dict()}), encoding="utf-8"
    )

    empty = sum(1 for _, row in result.budget_table if row is None)
    if empty:
        print(f"warning: {empty} budget(s) have no qualifying configuration")
    print(f"wrote {out_dir}/sweep_rows.csv ({len(result.rows)} rows), budget_table.csv, sweep.json")
    return EXIT_OK


# --------------------------------------------------------------------------
# report (recompute from a step log)
# --------------------------------------------------------------------------


def cmd_report(args: argparse.Namespace) -> int:
    path = Path(args.from_log)
    if not path.exists():
        return _fail(f"step log not found: {path}", EXIT_USAGE)
    try:
        with path.open(encoding="utf-8") as fp:
            config, traces = steplog.read_step_log(fp)
        reports = metrics.aggregate_by_k(traces, config)
    except ValueError as exc:
        return _fail(str(exc), EXIT_RUNTIME)

    report_doc = {"format_version": 1, "config": config, "reports": [r.to_dict() for r in reports]}
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(_dump_json(report_doc), encoding="utf-8")
    print(f"recomputed {len(reports)} report(s) from {path} -> {out_path}")

    if args.plot_csv:
        with Path(args.plot_csv).open("w", encoding="utf-8") as fp:
            metrics.write_k_curve_csv(reports, fp)
        print(f"wrote {args.plot_csv}")
    return EXIT_OK


# --------------------------------------------------------------------------
# parser wiring
# --------------------------------------------------------------------------


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON run-config file; flags override file values")
    parser.add_argument("--dataset", help="canonical conversation JSONL to evaluate")
    parser.add_argument("--ngram-model", help="path to a trained n-gram model file")
    parser.add_argument("--endpoint", help="HTTP provider base URL (default: $CHAITEA_ENDPOINT)")
    parser.add_argument("--preset", choices=sorted(PRESETS), help="named generation preset")
    parser.add_argument("--n-c", dest="n_c", type=int, help="completions sampled per step")
    parser.add_argument("--n-t", dest="n_t", type=int, help="max tokens per completion")
    parser.add_argument("--k-list", help="comma-separated ascending k values (run only)")
    parser.add_argument("--policy", choices=[p.value for p in ExpansionPolicy],
                        help="candidate expansion policy")
    parser.add_argument("--temperature", type=float)
    parser.add_argument("--history-cap", help="context cap in characters, or 'full'")
    parser.add_argument("--mode", choices=["word", "char"], help="suggestion-point mode")
    parser.add_argument("--seed", type=int, help="run seed (default: $CHAITEA_SEED or 0)")
    parser.add_argument("--workers", type=int, help="worker threads (0 = available parallelism)")
    parser.add_argument("--limit-turns", type=int, help="evaluate only the first N turns")
    parser.add_argument("--out-dir", help="output directory")
    parser.add_argument("--deterministic-timing", action="store_true",
                        help="record zero latencies for byte-reproducible outputs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chaitea",
                                     description="Chat-turn autocomplete evaluation harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("curate", help="parse a raw dump into canonical conversation JSONL")
    p.add_argument("--dataset", choices=["oasst", "sharegpt"], required=True)
    p.add_argument("--split", required=True, help="split label used in output file names")
    p.add_argument("--input", required=True, help="raw dump (OASST node JSONL / ShareGPT JSON)")
    p.add_argument("--out", "--out-dir", dest="out_dir", default="data",
                   help="directory for canonical output")
    p.add_argument("--instance-cache", action="store_true", help="also materialize the instance cache")
    p.add_argument("--granularity", choices=[g.value for g in Granularity], default="char")
    p.set_defaults(func=cmd_curate)

    p = sub.add_parser("stats", help="print corpus statistics for canonical JSONL files")
    p.add_argument("inputs", nargs="+", help="canonical conversation JSONL files")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("train-ngram", help="train the word n-gram baseline model")
    p.add_argument("--input", required=True, help="canonical conversation JSONL")
    p.add_argument("--order", type=int, default=4)
    p.add_argument("--out", required=True, help="model file to write")
    p.set_defaults(func=cmd_train_ngram)

    p = sub.add_parser("run", help="run a full evaluation")
    _add_run_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="hyper-parameter grid sweep with a latency-budget table")
    _add_run_flags(p)
    p.add_argument("--grid-n-c", help="comma-separated n_c grid (default 3,4,5)")
    p.add_argument("--grid-n-t", help="comma-separated n_t grid (default 3,5,10,20)")
    p.add_argument("--grid-history-cap", help="comma-separated caps, 'full' allowed "
                                              "(default 50,250,1000,full)")
    p.add_argument("--budgets", help="comma-separated latency budgets in ms, 'inf' allowed "
                                     "(default 150,300,450,600,750,inf)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="recompute reports from a step log")
    p.add_argument("--from", dest="from_log", required=True, help="steps.jsonl produced by run")
    p.add_argument("--out", default="report.json", help="report file to write")
    p.add_argument("--plot-csv", help="also write the k-curve CSV here")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except BrokenPipeError:
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
