import csv
import hashlib
import json

import pytest

from sarnaklab.arith import chowla_log_sum, sieve_mobius
from sarnaklab.cli import load_schemas, main, validate


def run_cli(*args):
    return main(list(args))


def read_rows(path, delimiter=","):
    with open(path, newline="") as fh:
        return list(csv.reader(fh, delimiter=delimiter))


def test_sieve_writes_table_and_manifest(tmp_path):
    assert run_cli("sieve", "--out", str(tmp_path), "--param", "N=1000") == 0
    rows = read_rows(tmp_path / "mobius.csv")
    assert rows[0] == ["n", "mu"] and len(rows) == 1001
    assert rows[30] == ["30", "-1"]
    manifest = json.loads((tmp_path / "sieve.manifest.json").read_text())
    data = (tmp_path / "mobius.csv").read_bytes()
    assert manifest["outputs"]["mobius.csv"] == hashlib.sha256(data).hexdigest()
    assert manifest["config"]["params"]["N"] == 1000
    assert {"numpy", "scipy", "mpmath", "python"} <= set(manifest["versions"])
    assert not [p for p in tmp_path.iterdir() if p.name.startswith(".tmp-")]


def test_chowla_four_row_trend(tmp_path, capsys):
    code = run_cli("chowla", "--out", str(tmp_path))
    rows = read_rows(tmp_path / "chowla.csv")[1:]
    assert [int(r[2]) for r in rows] == [10**3, 10**4, 10**5, 10**6]
    table = sieve_mobius(1, 10**6 + 1)
    for r in rows:
        assert float(r[4]) == chowla_log_sum(0, 1, int(r[2]), table).by_log
    assert abs(float(rows[-1][4])) < abs(float(rows[0][4]))
    # exit status mirrors the embedded trend check
    passed = "PASS chowla_trend" in capsys.readouterr().out
    assert code == (0 if passed else 3)


def test_identical_configs_give_identical_digests(tmp_path):
    args = [
        "complexity-profile", "--param", 'system={"type": "skew"}', "--param", "measure=true",
        "--param", "n_grid=[4,8,16,32]", "--param", "sample_size=64", "--seed", "5",
    ]
    assert run_cli(*args, "--out", str(tmp_path / "a"), "--threads", "1") == 0
    assert run_cli(*args, "--out", str(tmp_path / "b"), "--threads", "3") == 0
    da = json.loads((tmp_path / "a" / "complexity-profile.manifest.json").read_text())["outputs"]
    db = json.loads((tmp_path / "b" / "complexity-profile.manifest.json").read_text())["outputs"]
    assert da == db
    assert (tmp_path / "a" / "profile.csv").read_bytes() == (tmp_path / "b" / "profile.csv").read_bytes()


def test_manifest_config_round_trips(tmp_path):
    assert run_cli("davenport", "--out", str(tmp_path / "a"), "--param", "N_grid=[1000,5000]", "--param", "tolerance=1") == 0
    config = json.loads((tmp_path / "a" / "davenport.manifest.json").read_text())["config"]
    config["out"] = str(tmp_path / "b")
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(config))
    assert run_cli("davenport", "--config", str(cfg)) == 0
    assert (tmp_path / "a" / "davenport.csv").read_bytes() == (tmp_path / "b" / "davenport.csv").read_bytes()


def test_flags_override_config_file(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"params": {"N": 50, "lo": 1}, "format": "csv"}))
    assert run_cli("sieve", "--config", str(cfg), "--param", "N=20", "--format", "tsv", "--out", str(tmp_path)) == 0
    rows = read_rows(tmp_path / "mobius.tsv", "\t")
    assert len(rows) == 21


def test_usage_errors_exit_two(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        run_cli("nonsense")
    assert exc.value.code == 2
    assert run_cli("sieve", "--out", str(tmp_path), "--param", "bogus=3") == 2
    assert "bogus" in capsys.readouterr().err
    assert run_cli("sieve", "--out", str(tmp_path), "--param", "N=abc") == 2
    assert "'N'" in capsys.readouterr().err
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"recipe": "chowla"}))
    assert run_cli("sieve", "--config", str(cfg), "--out", str(tmp_path)) == 2


def test_failed_check_exits_three(tmp_path, capsys):
    assert run_cli("construct-chain", "--out", str(tmp_path), "--param", "signal=[0,0]") == 3
    assert "threshold_average" in capsys.readouterr().out
    rows = read_rows(tmp_path / "construct_chain.csv")
    assert rows[0][:2] == ["scale", "link"]


def test_schema_rejects_bad_rows():
    schemas = load_schemas()
    validate("davenport", [(0.1, 10, 0.5)], schemas)
    with pytest.raises(ValueError, match="N"):
        validate("davenport", [(0.1, 10.5, 0.5)], schemas)
    with pytest.raises(ValueError, match="no schema"):
        validate("unknown", [], schemas)
    for name, spec in schemas.items():
        assert all(col["doc"] and col["type"] in ("int", "float", "bool", "str") for col in spec["columns"]), name
