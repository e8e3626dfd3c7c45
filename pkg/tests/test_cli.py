import json

import pytest

from cascadekit.cli import main


def write_config(tmp_path, n=100):
    cfg = {
        "records": str(tmp_path / "world.jsonl"),
        "artifacts_dir": str(tmp_path / "artifacts"),
        "reports_dir": str(tmp_path / "reports"),
        "seed": 5,
        "k_folds": 4,
        "methods": ["rand", "maxprob", "entbin"],
        "bootstrap": {"n_resamples": 40},
        "world": {"n": n, "a_small": 0.7, "a_large": 0.85, "seed": 2},
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return path, cfg


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_full_flow(tmp_path, capsys):
    cfg_path, cfg = write_config(tmp_path)
    code, out, _ = run(capsys, "gen", "--config", str(cfg_path))
    assert code == 0
    assert json.loads(out)["n"] == 100

    code, out, _ = run(capsys, "validate", "--config", str(cfg_path))
    assert code == 0
    assert json.loads(out)["ok"] is True

    code, out, _ = run(capsys, "train-deferral", "--config", str(cfg_path))
    assert code == 0

    code, out, _ = run(capsys, "curves", "--config", str(cfg_path))
    assert code == 0
    files = json.loads(out)["files"]
    assert any(f.endswith("curve_maxprob.tsv") for f in files)

    code, out, _ = run(capsys, "report", "--config", str(cfg_path))
    assert code == 0
    assert (tmp_path / "reports" / "report.txt").exists()


def test_unknown_subcommand_exits_with_usage(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 1


def test_missing_records(tmp_path, capsys):
    code, _, err = run(capsys, "validate", "--records", str(tmp_path / "nope.jsonl"))
    assert code == 2
    assert "nope.jsonl" in err


def test_bad_config_json(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text("{broken")
    with pytest.raises(SystemExit) as exc:
        main(["validate", "--config", str(path)])
    assert exc.value.code == 1


def test_unknown_method_is_usage_error(tmp_path, capsys):
    cfg_path, cfg = write_config(tmp_path)
    run(capsys, "gen", "--config", str(cfg_path))
    code, _, err = run(capsys, "validate", "--config", str(cfg_path), "--methods", "bogus")
    assert code == 1
    assert "bogus" in err


def test_corrupted_record_file(tmp_path, capsys):
    cfg_path, cfg = write_config(tmp_path)
    run(capsys, "gen", "--config", str(cfg_path))
    lines = open(cfg["records"]).read().splitlines()
    lines[3] = "{oops"
    with open(cfg["records"], "w") as fh:
        fh.write("\n".join(lines) + "\n")
    code, _, err = run(capsys, "validate", "--config", str(cfg_path))
    assert code == 2
    assert "line 4" in err


def test_flag_overrides(tmp_path, capsys):
    cfg_path, cfg = write_config(tmp_path)
    code, out, _ = run(
        capsys, "gen", "--config", str(cfg_path), "--world-n", "37",
        "--records", str(tmp_path / "other.jsonl"),
    )
    assert code == 0
    body = json.loads(out)
    assert body["n"] == 37
    assert body["records"].endswith("other.jsonl")


def test_decide_via_cli(tmp_path, capsys):
    cfg_path, cfg = write_config(tmp_path, n=60)
    run(capsys, "gen", "--config", str(cfg_path))
    run(capsys, "train-deferral", "--config", str(cfg_path))
    record = json.loads(open(cfg["records"]).readline())
    record_path = tmp_path / "one.json"
    record_path.write_text(json.dumps(record))
    code, out, _ = run(
        capsys, "decide", "--config", str(cfg_path), "--record-file", str(record_path),
        "--method", "maxprob", "--threshold", "0.0",
    )
    assert code == 0
    body = json.loads(out)
    assert body["deferred"] is True and body["stage"] == 2


def test_artifacts_env_override(tmp_path, capsys, monkeypatch):
    cfg_path, cfg = write_config(tmp_path, n=60)
    run(capsys, "gen", "--config", str(cfg_path))
    env_dir = tmp_path / "env_artifacts"
    monkeypatch.setenv("CASCADEKIT_ARTIFACTS", str(env_dir))
    code, out, _ = run(capsys, "train-deferral", "--config", str(cfg_path))
    assert code == 0
    assert (env_dir / "scores_maxprob.json").exists()
