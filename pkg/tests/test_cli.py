import json

import pytest

from regsketch import cli


def _read_jsonl(path):
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def test_identity_override_all_pass(tmp_path):
    out = tmp_path / "ridge.jsonl"
    rc = cli.main([
        "ridge", "--seeds", "0..9", "--n", "300", "--d", "10",
        "--sketch", '{"variant": "identity", "m": 0, "seed": 0, "side": "left"}',
        "--out", str(out),
    ])
    assert rc == 0
    rows = _read_jsonl(out)
    assert len(rows) == 10
    assert all(r["passed"] for r in rows)
    assert all(r["ratio"] <= 1 + 1e-6 for r in rows)


def test_undersketched_run_exits_nonzero(tmp_path):
    out = tmp_path / "under.jsonl"
    rc = cli.main([
        "ridge", "--seeds", "0..9", "--n", "300", "--d", "10",
        "--sketch", '{"variant": "countsketch", "m": 2, "seed": 0, "side": "left"}',
        "--out", str(out),
    ])
    assert rc == 1
    rows = _read_jsonl(out)
    assert sum(r["passed"] for r in rows) < 8


def test_reports_are_deterministic(tmp_path):
    out1, out2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    argv = ["ridge", "--seeds", "0..4", "--n", "300", "--d", "10", "--out"]
    cli.main(argv + [str(out1)])
    cli.main(argv + [str(out2)])
    assert out1.read_bytes() == out2.read_bytes()


def test_ratio_floor_holds(tmp_path):
    out = tmp_path / "r.jsonl"
    cli.main(["ridge", "--seeds", "0..4", "--n", "400", "--d", "12", "--out", str(out)])
    assert all(r["ratio"] >= 1 - 1e-9 for r in _read_jsonl(out))


def test_csv_format(tmp_path):
    out = tmp_path / "r.csv"
    rc = cli.main([
        "statdim", "--seeds", "0..2", "--n", "100", "--d", "10",
        "--format", "csv", "--out", str(out),
    ])
    assert rc == 0
    lines = out.read_text().strip().splitlines()
    assert len(lines) == 4  # header + 3 records
    assert "ratio" in lines[0]


def test_policy_sized_subcommands_pass(tmp_path):
    # small but honest configurations for each solver-backed subcommand
    cases = [
        ["ridge", "--seeds", "0..9", "--n", "1200", "--d", "20"],
        ["ridge-wide", "--seeds", "0..9", "--n", "15", "--d", "400"],
        ["mr-ridge", "--seeds", "0..9", "--n", "800", "--d", "15"],
        ["lowrank", "--seeds", "0..9", "--n", "300", "--d", "200", "--k", "5"],
        ["statdim", "--seeds", "0..9", "--n", "200", "--d", "30"],
    ]
    for i, argv in enumerate(cases):
        out = tmp_path / f"case{i}.jsonl"
        assert cli.main(argv + ["--out", str(out)]) == 0, argv[0]


def test_matrix_market_override(tmp_path):
    mm = tmp_path / "a.mtx"
    mm.write_text(
        "%%MatrixMarket matrix array real general\n3 2\n1.0\n0.0\n0.0\n0.0\n2.0\n0.0\n"
    )
    out = tmp_path / "mm.jsonl"
    rc = cli.main([
        "ridge", "--seeds", "0", "--matrix", str(mm), "--lam", "1.0",
        "--sketch", '{"variant": "identity", "m": 0, "seed": 0, "side": "left"}',
        "--out", str(out),
    ])
    assert rc == 0
    assert len(_read_jsonl(out)) == 1


def test_seed_range_parsing():
    assert cli._seed_range("3..5") == [3, 4, 5]
    assert cli._seed_range("7") == [7]


def test_missing_subcommand_errors():
    with pytest.raises(SystemExit):
        cli.main([])
