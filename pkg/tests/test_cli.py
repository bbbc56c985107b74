from __future__ import annotations

import json
from pathlib import Path

import pytest

from chaitea.cli import main
from synthdata import synth_oasst_records


@pytest.fixture()
def raw_oasst(tmp_path: Path) -> Path:
    path = tmp_path / "raw_oasst.jsonl"
    with path.open("w", encoding="utf-8") as fp:
        for record in synth_oasst_records(30, seed=3):
            fp.write(json.dumps(record) + "\n")
    return path


@pytest.fixture()
def curated(tmp_path: Path, raw_oasst: Path) -> Path:
    out_dir = tmp_path / "data"
    assert main(["curate", "--dataset", "oasst", "--split", "test",
                 "--input", str(raw_oasst), "--out-dir", str(out_dir)]) == 0
    return out_dir / "oasst_test.jsonl"


@pytest.fixture()
def model_file(tmp_path: Path, curated: Path) -> Path:
    path = tmp_path / "model.jsonl"
    assert main(["train-ngram", "--input", str(curated), "--order", "3", "--out", str(path)]) == 0
    return path


def _run_args(curated: Path, model_file: Path, out_dir: Path, *extra: str) -> list[str]:
    return [
        "run",
        "--dataset", str(curated),
        "--ngram-model", str(model_file),
        "--k-list", "1,3",
        "--n-c", "2",
        "--n-t", "4",
        "--seed", "5",
        "--workers", "1",
        "--limit-turns", "20",
        "--deterministic-timing",
        "--out-dir", str(out_dir),
        *extra,
    ]


# --------------------------------------------------------------------------
# curate / stats / train-ngram
# --------------------------------------------------------------------------


def test_curate_writes_canonical_jsonl_and_stats(curated: Path, capsys):
    assert curated.exists()
    lines = curated.read_text(encoding="utf-8").splitlines()
    assert lines
    first = json.loads(lines[0])
    assert set(first) == {"id", "lang", "messages"}


def test_curate_stats_line_format(tmp_path: Path, raw_oasst: Path, capsys):
    main(["curate", "--dataset", "oasst", "--split", "s", "--input", str(raw_oasst),
          "--out-dir", str(tmp_path / "d")])
    out = capsys.readouterr().out
    assert "Conversations" in out and "Messages" in out and "Prefixes" in out
    assert "conversations=" in out and "prefixes=" in out


def test_curate_missing_input_exits_2(tmp_path: Path):
    assert main(["curate", "--dataset", "oasst", "--split", "x",
                 "--input", str(tmp_path / "nope.jsonl")]) == 2


def test_curate_empty_input_exits_2(tmp_path: Path, capsys):
    empty = tmp_path / "empty.jsonl"
    empty.write_text("", encoding="utf-8")
    assert main(["curate", "--dataset", "oasst", "--split", "x", "--input", str(empty),
                 "--out-dir", str(tmp_path / "d")]) == 2
    assert "empty training corpus" in capsys.readouterr().err


def test_curate_rerun_is_byte_identical(tmp_path: Path, raw_oasst: Path):
    for d in ("a", "b"):
        main(["curate", "--dataset", "oasst", "--split", "t", "--input", str(raw_oasst),
              "--out-dir", str(tmp_path / d)])
    a = tmp_path / "a" / "oasst_t.jsonl"
    b = tmp_path / "b" / "oasst_t.jsonl"
    assert a.read_bytes() == b.read_bytes()


def test_curate_instance_cache(tmp_path: Path, raw_oasst: Path):
    out_dir = tmp_path / "d"
    main(["curate", "--dataset", "oasst", "--split", "t", "--input", str(raw_oasst),
          "--out-dir", str(out_dir), "--instance-cache", "--granularity", "word"])
    cache = out_dir / "oasst_t_instances_word.jsonl"
    assert cache.exists()
    header = json.loads(cache.read_text(encoding="utf-8").splitlines()[0])
    assert header["granularity"] == "word"


def test_stats_command(curated: Path, capsys):
    assert main(["stats", str(curated)]) == 0
    out = capsys.readouterr().out
    assert "Prefixes" in out


def test_stats_missing_file_exits_2(tmp_path: Path):
    assert main(["stats", str(tmp_path / "missing.jsonl")]) == 2


def test_train_ngram_header(model_file: Path):
    header = json.loads(model_file.read_text(encoding="utf-8").splitlines()[0])
    assert header["order"] == 3
    assert header["format"] == "ngram-v1"


def test_train_ngram_empty_corpus_exits_2(tmp_path: Path, capsys):
    empty = tmp_path / "empty.jsonl"
    empty.write_text("", encoding="utf-8")
    assert main(["train-ngram", "--input", str(empty), "--out", str(tmp_path / "m.jsonl")]) == 2
    assert "empty training corpus" in capsys.readouterr().err


# --------------------------------------------------------------------------
# run
# --------------------------------------------------------------------------


def test_run_emits_all_artifacts(tmp_path: Path, curated: Path, model_file: Path):
    out_dir = tmp_path / "out"
    assert main(_run_args(curated, model_file, out_dir)) == 0
    for name in ("config.json", "steps.jsonl", "report.json", "k_curve.csv", "accepted_lengths.csv"):
        assert (out_dir / name).exists(), name
    report = json.loads((out_dir / "report.json").read_text(encoding="utf-8"))
    assert [r["k"] for r in report["reports"]] == [1, 3]
    assert report["config"]["n_c"] == 2


def test_run_requires_provider(tmp_path: Path, curated: Path, monkeypatch):
    monkeypatch.delenv("CHAITEA_ENDPOINT", raising=False)
    assert main(["run", "--dataset", str(curated), "--out-dir", str(tmp_path / "o")]) == 2


def test_run_rejects_two_providers(tmp_path: Path, curated: Path, model_file: Path):
    args = _run_args(curated, model_file, tmp_path / "o") + ["--endpoint", "http://x"]
    assert main(args) == 2


def test_run_rejects_bad_k_list(tmp_path: Path, curated: Path, model_file: Path):
    args = _run_args(curated, model_file, tmp_path / "o")
    args[args.index("1,3") ] = "3,1"
    assert main(args) == 2


def test_presets_set_generation_params(tmp_path: Path, curated: Path, model_file: Path):
    for preset, n_c, n_t in (("best", 5, 20), ("fast", 1, 5)):
        out_dir = tmp_path / preset
        args = [
            "run", "--dataset", str(curated), "--ngram-model", str(model_file),
            "--preset", preset, "--k-list", "1", "--seed", "1", "--workers", "1",
            "--limit-turns", "5", "--deterministic-timing", "--out-dir", str(out_dir),
        ]
        assert main(args) == 0
        config = json.loads((out_dir / "config.json").read_text(encoding="utf-8"))
        assert (config["n_c"], config["n_t"]) == (n_c, n_t)


def test_config_file_with_flag_overrides(tmp_path: Path, curated: Path, model_file: Path):
    config_path = tmp_path / "run.json"
    config_path.write_text(json.dumps({
        "dataset": str(curated),
        "provider": {"ngram": str(model_file)},
        "n_c": 4, "n_t": 6, "k_list": [1], "seed": 9, "workers": 1,
        "limit_turns": 5, "deterministic_timing": True,
        "out_dir": str(tmp_path / "from_file"),
    }), encoding="utf-8")
    assert main(["run", "--config", str(config_path), "--n-c", "2"]) == 0
    resolved = json.loads((tmp_path / "from_file" / "config.json").read_text(encoding="utf-8"))
    assert resolved["n_c"] == 2       # flag wins
    assert resolved["n_t"] == 6       # file value preserved


def test_config_round_trip_reproduces_report(tmp_path: Path, curated: Path, model_file: Path):
    out_a = tmp_path / "a"
    assert main(_run_args(curated, model_file, out_a)) == 0
    resolved = out_a / "config.json"
    # Re-running from the emitted config (new out dir) reproduces the reports.
    config = json.loads(resolved.read_text(encoding="utf-8"))
    config["out_dir"] = str(tmp_path / "b")
    (tmp_path / "rerun.json").write_text(json.dumps(config), encoding="utf-8")
    assert main(["run", "--config", str(tmp_path / "rerun.json")]) == 0
    rep_a = json.loads((out_a / "report.json").read_text(encoding="utf-8"))
    rep_b = json.loads((tmp_path / "b" / "report.json").read_text(encoding="utf-8"))

    def strip_config(doc):
        return [{k: v for k, v in r.items() if k != "config"} for r in doc["reports"]]

    assert strip_config(rep_a) == strip_config(rep_b)


def test_unknown_config_key_exits_2(tmp_path: Path, curated: Path):
    config_path = tmp_path / "bad.json"
    config_path.write_text(json.dumps({"dataset": str(curated), "typo_key": 1}), encoding="utf-8")
    assert main(["run", "--config", str(config_path)]) == 2


def test_run_determinism_byte_identical(tmp_path: Path, curated: Path, model_file: Path):
    out_dir = tmp_path / "out"
    assert main(_run_args(curated, model_file, out_dir)) == 0
    first = {name: (out_dir / name).read_bytes()
             for name in ("steps.jsonl", "report.json", "k_curve.csv")}
    assert main(_run_args(curated, model_file, out_dir)) == 0
    for name, blob in first.items():
        assert (out_dir / name).read_bytes() == blob, name


def test_char_and_word_modes_emit_comparable_reports(tmp_path: Path, curated: Path, model_file: Path):
    reports = {}
    for mode in ("word", "char"):
        out_dir = tmp_path / mode
        assert main(_run_args(curated, model_file, out_dir, "--mode", mode)) == 0
        doc = json.loads((out_dir / "report.json").read_text(encoding="utf-8"))
        reports[mode] = doc["reports"]
    assert [r["k"] for r in reports["word"]] == [r["k"] for r in reports["char"]]
    # char mode fires at every offset, so it always records more steps
    assert reports["char"][0]["total_steps"] > reports["word"][0]["total_steps"]


# --------------------------------------------------------------------------
# report
# --------------------------------------------------------------------------


def test_report_recomputes_bit_exact(tmp_path: Path, curated: Path, model_file: Path):
    out_dir = tmp_path / "out"
    assert main(_run_args(curated, model_file, out_dir)) == 0
    recomputed = tmp_path / "recomputed.json"
    assert main(["report", "--from", str(out_dir / "steps.jsonl"), "--out", str(recomputed)]) == 0
    assert recomputed.read_bytes() == (out_dir / "report.json").read_bytes()


def test_report_plot_csv_row_per_k(tmp_path: Path, curated: Path, model_file: Path):
    out_dir = tmp_path / "out"
    assert main(_run_args(curated, model_file, out_dir)) == 0
    csv_path = tmp_path / "curve.csv"
    assert main(["report", "--from", str(out_dir / "steps.jsonl"),
                 "--out", str(tmp_path / "r.json"), "--plot-csv", str(csv_path)]) == 0
    lines = csv_path.read_text(encoding="utf-8").splitlines()
    assert len(lines) == 1 + 2  # header + one row per k in k_list
    assert csv_path.read_bytes() == (out_dir / "k_curve.csv").read_bytes()


def test_report_missing_log_exits_2(tmp_path: Path):
    assert main(["report", "--from", str(tmp_path / "missing.jsonl"),
                 "--out", str(tmp_path / "r.json")]) == 2


# --------------------------------------------------------------------------
# sweep
# --------------------------------------------------------------------------


def test_sweep_tiny_grid_with_unreachable_budget(tmp_path: Path, curated: Path, model_file: Path, capsys):
    out_dir = tmp_path / "sweep"
    args = [
        "sweep", "--dataset", str(curated), "--ngram-model", str(model_file),
        "--seed", "2", "--workers", "1", "--limit-turns", "6",
        "--out-dir", str(out_dir),
        "--grid-n-c", "1,2", "--grid-n-t", "2,4", "--grid-history-cap", "50,full",
        "--budgets", "0.0001",
    ]
    assert main(args) == 0
    out = capsys.readouterr().out
    assert "warning" in out  # real wall clock cannot fit a 100ns budget
    rows = (out_dir / "sweep_rows.csv").read_text(encoding="utf-8").splitlines()
    assert len(rows) == 1 + 8
    budget_lines = (out_dir / "budget_table.csv").read_text(encoding="utf-8").splitlines()
    assert budget_lines[1].endswith(",,,,")  # empty cell row
    assert (out_dir / "sweep.json").exists()


def test_sweep_grid_must_be_nonempty(tmp_path: Path, curated: Path, model_file: Path):
    args = [
        "sweep", "--dataset", str(curated), "--ngram-model", str(model_file),
        "--grid-n-c", "", "--out-dir", str(tmp_path / "s"),
    ]
    assert main(args) == 2


def test_sweep_config_round_trip(tmp_path: Path, curated: Path, model_file: Path):
    out_a = tmp_path / "a"
    args = [
        "sweep", "--dataset", str(curated), "--ngram-model", str(model_file),
        "--seed", "2", "--workers", "1", "--limit-turns", "6",
        "--deterministic-timing", "--out-dir", str(out_a),
        "--grid-n-c", "1,2", "--grid-n-t", "2", "--grid-history-cap", "full",
        "--budgets", "inf",
    ]
    assert main(args) == 0
    # The emitted config (including grid and budgets) is directly reusable.
    emitted = json.loads((out_a / "config.json").read_text(encoding="utf-8"))
    emitted["out_dir"] = str(tmp_path / "b")
    (tmp_path / "sweep_rerun.json").write_text(json.dumps(emitted), encoding="utf-8")
    assert main(["sweep", "--config", str(tmp_path / "sweep_rerun.json")]) == 0
    rows_a = (out_a / "sweep_rows.csv").read_bytes()
    rows_b = (tmp_path / "b" / "sweep_rows.csv").read_bytes()
    assert rows_a == rows_b
