import json
import subprocess
import sys

import pytest

from depformer.cli import main

SUBCOMMANDS = ("validate", "relmatrix", "gradcheck", "train", "eval", "ablate", "synth")


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.mark.parametrize("name", SUBCOMMANDS)
def test_every_subcommand_has_help(capsys, name):
    code, out, _ = run(capsys, name, "--help")
    assert code == 0 and "usage" in out


def test_unknown_flag_is_usage_error(capsys):
    code, _, err = run(capsys, "relmatrix", "x.conllu", "--colour", "red")
    assert code == 1 and "--colour" in err


def test_unknown_command_is_usage_error(capsys):
    assert run(capsys, "serve")[0] == 1


def test_validate_cycle_fixture(capsys, fixtures):
    code, out, _ = run(capsys, "validate", str(fixtures / "cycle.conllu"))
    assert code == 2
    kinds = {v["kind"] for v in json.loads(out)["violations"]}
    assert "cycle" in kinds


def test_validate_clean_file(capsys, fixtures):
    code, out, _ = run(capsys, "validate", str(fixtures / "two_sentences.conllu"))
    assert code == 0
    assert json.loads(out) == {"sentences": 2, "valid": 2, "violations": []}


def test_missing_file_names_path(capsys, tmp_path):
    missing = tmp_path / "absent.conllu"
    code, _, err = run(capsys, "validate", str(missing))
    assert code == 2 and "absent.conllu" in err


def test_relmatrix_matches_golden(capsys, fixtures, tmp_path):
    out = tmp_path / "m.json"
    code, stdout, _ = run(capsys, "relmatrix", str(fixtures / "dogs_bark.conllu"), "--tau", "2", "--out", str(out))
    assert code == 0 and stdout == ""
    (matrix,) = json.loads(out.read_text())["matrices"]
    golden = json.loads((fixtures / "dogs_bark_relmatrix.json").read_text())
    for key in ("tokens", "keys", "ids"):
        assert matrix[key] == golden[key]


def test_relmatrix_tsv(capsys, fixtures):
    code, out, _ = run(capsys, "relmatrix", str(fixtures / "dogs_bark.conllu"), "--format", "tsv")
    assert code == 0
    rows = out.splitlines()
    assert rows[1].split("\t") == ["", "[root]", "dogs", "bark"]
    assert rows[2].split("\t") == ["[root]", "self", "p(0,2)", "root:h>d"]


def test_relmatrix_rejects_malformed_tree(capsys, fixtures):
    assert run(capsys, "relmatrix", str(fixtures / "multiroot.conllu"))[0] == 2


def test_gradcheck_ops(capsys):
    code, out, err = run(capsys, "gradcheck")
    assert code == 0
    report = json.loads(out)
    assert report["ok"] and report["max_rel_error"] < 1e-4
    assert "max rel err" in err


def test_gradcheck_failure_exit_code(capsys, monkeypatch):
    from depformer import gradsuite

    monkeypatch.setattr(gradsuite, "TOLERANCE", 0.0)
    assert run(capsys, "gradcheck")[0] == 3


def _synth(capsys, tmp_path, n=10):
    code, out, _ = run(capsys, "synth", "--task", "planted-relation", "--out", str(tmp_path / "data"),
                       "--n-sentences", str(n), "--epochs", "2")
    assert code == 0
    return json.loads(out)


def test_synth_train_eval_round(capsys, tmp_path):
    paths = _synth(capsys, tmp_path)
    config = paths["run.json"]
    model = json.dumps({"n_layers": 1, "n_heads": 2, "d_model": 8, "d_r": 4, "d_ff": 8, "max_position": 16})
    code, out, _ = run(capsys, "train", "--config", config, "--out-dir", str(tmp_path / "run"),
                       "--set", f"model={model}", "--set", "target_metric=null", "--lr", "0.05")
    assert code == 0
    summary = json.loads(out)
    assert summary["epochs"] == 2 and "accuracy" in summary["best"]
    code, out, _ = run(capsys, "eval", "--checkpoint", str(tmp_path / "run" / "best.ckpt"),
                       "--data", paths["dev.conllu"])
    assert code == 0
    metrics = json.loads(out)
    assert metrics["accuracy"] == summary["best"]["accuracy"]


def test_identical_invocations_identical_files(capsys, tmp_path):
    paths = _synth(capsys, tmp_path)
    model = json.dumps({"n_layers": 1, "n_heads": 2, "d_model": 8, "d_r": 4, "d_ff": 8, "max_position": 16})
    for name in ("a", "b"):
        assert run(capsys, "train", "--config", paths["run.json"], "--out-dir", str(tmp_path / name),
                   "--set", f"model={model}", "--out", str(tmp_path / f"{name}.json"))[0] == 0
    for f in ("best.ckpt", "last.ckpt", "metrics.jsonl"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_seed_environment_fallback(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("DEPFORMER_SEED", "5")
    run(capsys, "synth", "--task", "planted-relation", "--out", str(tmp_path / "x"), "--n-sentences", "5")
    assert json.loads((tmp_path / "x" / "run.json").read_text())["seed"] == 5
    run(capsys, "synth", "--task", "planted-relation", "--out", str(tmp_path / "y"), "--n-sentences", "5",
        "--seed", "6")
    assert json.loads((tmp_path / "y" / "run.json").read_text())["seed"] == 6


def test_bad_seed_environment_is_usage_error(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("DEPFORMER_SEED", "many")
    assert run(capsys, "synth", "--task", "planted-relation", "--out", str(tmp_path / "x"))[0] == 1


def test_eval_bad_checkpoint(capsys, tmp_path, fixtures):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"garbage")
    assert run(capsys, "eval", "--checkpoint", str(bad), "--data", str(fixtures / "dogs_bark.conllu"))[0] == 2


def test_ablate_subset(capsys, tmp_path):
    paths = _synth(capsys, tmp_path)
    model = json.dumps({"n_layers": 1, "n_heads": 2, "d_model": 8, "d_r": 4, "d_ff": 8, "max_position": 16})
    code, out, _ = run(capsys, "ablate", "--config", paths["run.json"], "--out-dir", str(tmp_path / "abl"),
                       "--set", f"model={model}", "--epochs", "1", "--variants", "transformer,dt_full")
    assert code == 0
    assert [r["variant"] for r in json.loads(out)] == ["transformer", "dt_full"]


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "depformer", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "relmatrix" in proc.stdout
