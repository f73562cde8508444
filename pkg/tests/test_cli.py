import csv

import pytest

from bipde.cli import main
from bipde.harness.config import ExperimentConfig


def write(path, text):
    path.write_text(text)
    return str(path)


@pytest.fixture
def burgers_cfg(tmp_path):
    return write(tmp_path / "b.txt", "kind = burgers_sweep\nn_x = 32\nt_final = 0.01\n"
                 "epochs = 3\nnewton_steps = 0\n")


@pytest.fixture
def inverse_cfg(tmp_path):
    return write(tmp_path / "i.txt", "kind = poisson_inverse_1d\ngrid_n = 21\nn_samples = 40\n"
                 "n_train = 30\nn_ood = 5\nepochs = 2\nbatch_size = 10\n")


def test_train_writes_outputs(tmp_path, burgers_cfg, capsys):
    assert main(["train", "--config", burgers_cfg, "--out", str(tmp_path / "run")]) == 0
    out = tmp_path / "run"
    for name in ("results.csv", "checkpoint.bin", "history.csv", "manifest.txt"):
        assert (out / name).exists()
    assert "[fit] nu" in capsys.readouterr().out


def test_manifest_rerun_is_byte_identical(tmp_path, burgers_cfg):
    main(["train", "--config", burgers_cfg, "--out", str(tmp_path / "a")])
    main(["train", "--config", str(tmp_path / "a" / "manifest.txt"), "--out", str(tmp_path / "b")])
    for name in ("results.csv", "checkpoint.bin"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_generate_then_eval(tmp_path, inverse_cfg, capsys):
    assert main(["generate", "--config", inverse_cfg, "--out", str(tmp_path / "data")]) == 0
    assert main(["train", "--config", inverse_cfg, "--out", str(tmp_path / "run")]) == 0
    preds = tmp_path / "p.csv"
    rc = main(["eval", "--checkpoint", str(tmp_path / "run" / "checkpoint.bin"),
               "--data", str(tmp_path / "data" / "dataset.bin"), "--subset", "test",
               "--out", str(preds)])
    assert rc == 0
    rows = list(csv.reader(preds.open()))
    assert rows[0] == ["a0", "a1"] and len(rows) == 11
    assert "R2=" in capsys.readouterr().out
    for subset in ("all", "train", "ood"):
        assert main(["eval", "--checkpoint", str(tmp_path / "run" / "checkpoint.bin"),
                     "--data", str(tmp_path / "data" / "dataset.bin"), "--subset", subset]) == 0


def test_sweep_command(tmp_path, burgers_cfg, capsys):
    rc = main(["sweep", "--config", burgers_cfg, "--axis", "n_x=4,24", "--out", str(tmp_path)])
    assert rc == 0
    rows = list(csv.DictReader((tmp_path / "results.csv").open()))
    assert [r["status"] for r in rows] == ["failed", "ok"]
    assert "2 cells, 1 failed" in capsys.readouterr().out
    manifest = ExperimentConfig.from_file(tmp_path / "manifest.txt")
    assert manifest.axes == {"n_x": ["4", "24"]}


def test_sweep_empty_axis(tmp_path, burgers_cfg):
    assert main(["sweep", "--config", burgers_cfg, "--axis", "n_x=", "--out", str(tmp_path)]) == 0
    assert len((tmp_path / "results.csv").read_text().splitlines()) == 1


def test_rbf_cases_command(tmp_path, capsys, monkeypatch):
    from bipde.harness import runner
    small = {"baseline": dict(runner.RBF_CASES["baseline"], n_ref=81, n_s=6, n_d=20,
                              t_final=0.015, p=5)}
    monkeypatch.setattr(runner, "RBF_CASES", small)
    rc = main(["rbf-cases", "--cases", "baseline", "--epochs", "1", "--out", str(tmp_path)])
    assert rc == 0
    assert "case=baseline: nu =" in capsys.readouterr().out


def test_keys_command(capsys):
    assert main(["keys", "burgers_sweep"]) == 0
    assert "n_x = 640" in capsys.readouterr().out


@pytest.mark.parametrize("text", ["kind = nope\n", "kind = burgers_sweep\nn_x = x\n",
                                  "kind = burgers_sweep\nwhat\n"])
def test_config_errors_exit_2(tmp_path, text, capsys):
    cfg = write(tmp_path / "bad.txt", text)
    assert main(["train", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "error:" in capsys.readouterr().err


def test_missing_files_exit_2(tmp_path):
    assert main(["train", "--config", str(tmp_path / "none"), "--out", str(tmp_path)]) == 2
    assert main(["eval", "--checkpoint", str(tmp_path / "none"),
                 "--data", str(tmp_path / "none")]) == 2


def test_eval_rejects_wrong_file_kind(tmp_path, burgers_cfg):
    main(["train", "--config", burgers_cfg, "--out", str(tmp_path)])
    ckpt = str(tmp_path / "checkpoint.bin")
    assert main(["eval", "--checkpoint", ckpt, "--data", ckpt]) == 2


def test_sweep_bad_axis_exit_2(tmp_path, burgers_cfg):
    assert main(["sweep", "--config", burgers_cfg, "--axis", "bogus=1", "--out", str(tmp_path)]) == 2
    assert main(["sweep", "--config", burgers_cfg, "--out", str(tmp_path)]) == 2


def test_numerical_failure_exit_3(tmp_path, capsys):
    cfg = write(tmp_path / "nf.txt", "kind = burgers_sweep\nn_x = 128\ndt = 0.05\n"
                "t_final = 1.0\np = 10\nepochs = 2\nnewton_steps = 0\n")
    assert main(["train", "--config", cfg, "--out", str(tmp_path / "o")]) == 3
    assert "numerical failure" in capsys.readouterr().err
