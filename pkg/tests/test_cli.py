import json
import os

import pytest

from dda.cli import main


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def xor_dir(tmp_path, capsys):
    root = tmp_path / "xor"
    assert run(["generate", "--kind", "xor", "--n", "30", "--seed", "2", "--out", str(root)], capsys)[0] == 0
    return root


FAST = ["--set", "network.hidden=6,6", "--set", "trainer.lr=0.01", "--set", "trainer.max_epochs=4",
        "--set", "trainer.batch_size=32"]


def test_generate_blades_count(tmp_path, capsys):
    root = tmp_path / "b"
    code, out, _ = run(["generate", "--kind", "blades", "--count", "16", "--size", "16",
                        "--seed", "1", "--out", str(root)], capsys)
    assert code == 0 and "12/2/2" in out
    assert len(os.listdir(root / "train")) == 24
    manifest = json.loads((root / "manifest.json").read_text())
    assert manifest["kind"] == "blades" and manifest["counts"] == {"train": 12, "val": 2, "test": 2}

    again = tmp_path / "b2"
    run(["generate", "--kind", "blades", "--count", "16", "--size", "16", "--seed", "1", "--out", str(again)], capsys)
    for split in ("train", "val", "test"):
        for name in os.listdir(root / split):
            assert (root / split / name).read_bytes() == (again / split / name).read_bytes()


def test_generate_usage_errors(tmp_path, capsys):
    code, _, err = run(["generate", "--kind", "xor", "--n", "0", "--out", str(tmp_path / "x")], capsys)
    assert code == 2 and "--n" in err
    assert run(["generate", "--kind", "xor", "--n", "5"], capsys)[0] == 2
    assert run(["generate", "--kind", "moons"], capsys)[0] == 2
    assert run([], capsys)[0] == 2


def test_train_then_eval(tmp_path, xor_dir, capsys):
    out_dir = tmp_path / "run"
    code, out, err = run(["train", "--dataset", str(xor_dir), "--loss", "pdda_delta", "--out", str(out_dir)]
                         + FAST, capsys)
    assert code == 0, err
    assert "config trainer.lr = 0.01" in err
    rec = json.loads((out_dir / "run.json").read_text())
    code, eval_out, _ = run(["eval", "--checkpoint", str(out_dir / "model.dda"), "--dataset", str(xor_dir),
                             "--out", str(tmp_path / "ev")], capsys)
    assert code == 0
    assert eval_out.strip() == out.strip()
    ev = json.loads((tmp_path / "ev" / "eval.jsonl").read_text())
    assert ev["test"] == rec["test_metrics"]


def test_eval_rejects_corrupt_checkpoint(tmp_path, xor_dir, capsys):
    bad = tmp_path / "bad.dda"
    bad.write_bytes(b"NOPE" + bytes(40))
    code, _, err = run(["eval", "--checkpoint", str(bad), "--dataset", str(xor_dir)], capsys)
    assert code == 1 and "bad magic" in err
    assert run(["eval", "--checkpoint", str(tmp_path / "missing.dda"), "--dataset", str(xor_dir)], capsys)[0] == 1
    assert run(["eval", "--dataset", str(xor_dir)], capsys)[0] == 2


def test_sweep(tmp_path, xor_dir, capsys):
    out_dir = tmp_path / "sw"
    code, out, _ = run(["sweep", "--dataset", str(xor_dir), "--loss", "pdda_log", "--values", "0.01,1",
                        "--baselines", "--out", str(out_dir)] + FAST, capsys)
    assert code == 0
    lines = (out_dir / "sweep.csv").read_text().splitlines()
    assert lines[0].startswith("method,lambda_p,accuracy")
    assert sum(1 for ln in lines if ln.startswith("method,")) == 1
    assert len(lines) == 1 + 4 + 2
    assert len((out_dir / "sweep.jsonl").read_text().splitlines()) == 6
    assert run(["sweep", "--dataset", str(xor_dir), "--loss", "dda_log", "--out", str(out_dir)], capsys)[0] == 2
    assert run(["sweep", "--dataset", str(xor_dir), "--values", "a,b", "--out", str(out_dir)], capsys)[0] == 2


def test_gradcheck_component(capsys):
    code, out, _ = run(["gradcheck", "--component", "dda_delta", "--batches", "5"], capsys)
    assert code == 0
    assert out.startswith("dda_delta") and len(out.splitlines()) == 1
    code, _, err = run(["gradcheck", "--component", "focal", "--batches", "3", "--tolerance", "0"], capsys)
    assert code == 1 and "FAIL" in err
    assert run(["gradcheck", "--component", "nonsense"], capsys)[0] == 2


def test_config_file_errors(tmp_path, xor_dir, capsys):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[trainer]\nlr = 0.01\nlearning_rate = 3\n")
    code, _, err = run(["train", "--config", str(cfg), "--dataset", str(xor_dir)], capsys)
    assert code == 2 and f"{cfg}:3" in err and "learning_rate" in err
    cfg.write_text("[trainer]\nlr = fast\n")
    code, _, err = run(["train", "--config", str(cfg)], capsys)
    assert code == 2 and ":2" in err
    assert run(["train", "--config", str(tmp_path / "none.ini")], capsys)[0] == 2
    assert run(["train", "--set", "trainer.nope=1"], capsys)[0] == 2
    assert run(["train", "--set", "losses.loss=pdda_log", "--set", "losses.dda_kind=delta"], capsys)[0] == 2


def test_config_file_is_used(tmp_path, xor_dir, capsys):
    cfg = tmp_path / "c.ini"
    cfg.write_text("# quick run\n[losses]\nloss = dda_log\n[network]\nhidden = 4\n"
                   "[trainer]\nmax_epochs = 2\nlr = 0.01  # inline comment\n")
    code, out, err = run(["train", "--config", str(cfg), "--dataset", str(xor_dir)], capsys)
    assert code == 0 and "loss=dda_log" in out and "config network.hidden = (4,)" in err
