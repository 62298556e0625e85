import shutil
import subprocess
import sys

import numpy as np
import pytest

from tritrans.cli import main
from tritrans.data import pnm
from tritrans.trainer import load_checkpoint, read_loss_log

FAST = ["--epochs", "2", "--lr-decay-every", "1"]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--seed", "0", "--n", "8", "--size", "64", "--out", str(root / "d")]) == 0
    assert main(["synth", "--seed", "1", "--n", "3", "--size", "64", "--out", str(root / "t")]) == 0
    rc = main(["train", "--preset", "desk", "--data", str(root / "d" / "manifest"), "--out", str(root / "run")] + FAST)
    assert rc == 0
    return root


def test_synth_then_train(workspace, capsys):
    run = workspace / "run"
    assert (run / "checkpoint.ttn").is_file() and (run / "loss.png").is_file()
    assert len(read_loss_log(run / "loss.log")) == 4
    _, cfg, _, _ = load_checkpoint(run / "checkpoint.ttn")
    assert cfg.epochs == 2 and cfg.model.input_size == 64


def test_train_prints_census(tmp_path, workspace, capsys):
    rc = main(["train", "--data", str(workspace / "d"), "--out", str(tmp_path), "--epochs", "1", "--max-steps", "1"])
    out = capsys.readouterr().out
    assert rc == 0 and "parameters: " in out and "ttem_shared=" in out


def test_paper_preset_description(capsys):
    assert main(["train", "--preset", "paper", "--dry-run"]) == 0
    out = capsys.readouterr().out
    for token in ("L=12", "D=768", "N=1024", "lr 1e-5", "batch 3"):
        assert token in out


def test_config_file_and_flag_precedence(tmp_path, capsys):
    conf = tmp_path / "c.conf"
    conf.write_text("# desk tweaks\npreset = desk\nlayers = 3  # deeper\nbatch = 5\n")
    assert main(["train", "--config", str(conf), "--batch", "6", "--dry-run"]) == 0
    out = capsys.readouterr().out
    assert "L=3" in out and "batch 6" in out and "D=32" in out


def test_unknown_config_key_exit_1(tmp_path, capsys):
    conf = tmp_path / "c.conf"
    conf.write_text("learning_rate = 3\n")
    assert main(["train", "--config", str(conf), "--dry-run"]) == 1
    assert "learning_rate" in capsys.readouterr().err


def test_bad_flag_value_exit_1(capsys):
    assert main(["train", "--k", "seven", "--dry-run"]) == 1
    assert main(["train", "--k", "5", "--dry-run"]) == 1


def test_usage_errors_exit_1(capsys):
    with pytest.raises(SystemExit) as e:
        main(["train", "--no-such-flag"])
    assert e.value.code == 1
    assert main([]) == 1


def test_missing_data_exit_2(tmp_path, capsys):
    assert main(["train", "--data", str(tmp_path / "nope")]) == 2
    assert "nope" in capsys.readouterr().err
    assert main(["eval", "--checkpoint", str(tmp_path / "x.ttn"), "--data", str(tmp_path)]) == 2
    assert main(["train", "--config", str(tmp_path / "none.conf"), "--dry-run"]) == 2


def test_eval_writes_report(workspace, tmp_path, capsys):
    rc = main(["eval", "--checkpoint", str(workspace / "run" / "checkpoint.ttn"),
               "--data", str(workspace / "t" / "manifest"), "--out", str(tmp_path), "--name", "held"])
    assert rc == 0
    lines = (tmp_path / "metrics.txt").read_text().split("\n")
    assert [l.split()[:2] for l in lines if l] == [["held", m] for m in ("S", "F", "E", "MAE")]
    assert (tmp_path / "pr_held.csv").is_file() and (tmp_path / "pr.png").is_file()
    assert "held" in (tmp_path / "report.txt").read_text()


def test_eval_shape_mismatch_exit_2(workspace, tmp_path, capsys):
    assert main(["synth", "--n", "1", "--size", "32", "--out", str(tmp_path / "small")]) == 0
    rc = main(["eval", "--checkpoint", str(workspace / "run" / "checkpoint.ttn"), "--data", str(tmp_path / "small")])
    assert rc == 0  # samples are resized to the checkpoint's input size on load
    bad = tmp_path / "bad.ttn"
    bad.write_bytes(b"TTNC\x01garbage")
    assert main(["eval", "--checkpoint", str(bad), "--data", str(tmp_path / "small")]) == 2


def test_infer_with_and_without_gt(workspace, tmp_path, capsys):
    ckpt = str(workspace / "run" / "checkpoint.ttn")
    assert main(["infer", "--checkpoint", ckpt, "--data", str(workspace / "t"), "--out", str(tmp_path / "a")]) == 0
    maps = sorted((tmp_path / "a").glob("*.pgm"))
    assert len(maps) == 3 and (tmp_path / "a" / "metrics.txt").is_file()
    img, maxval = pnm.read(maps[0])
    assert img.shape == (64, 64) and maxval == 255
    rows = (workspace / "t" / "manifest").read_text().splitlines()
    nogt = workspace / "t" / "nogt"
    nogt.write_text("\n".join("\t".join(r.split("\t")[:2]) for r in rows) + "\n")
    assert main(["infer", "--checkpoint", ckpt, "--data", str(nogt), "--out", str(tmp_path / "b")]) == 0
    assert len(list((tmp_path / "b").glob("*.pgm"))) == 3
    assert not (tmp_path / "b" / "metrics.txt").exists()


def test_infer_writes_rounded_probabilities(workspace, tmp_path, capsys):
    from tritrans.data import load_manifest
    from tritrans.trainer import predict

    ckpt = workspace / "run" / "checkpoint.ttn"
    main(["infer", "--checkpoint", str(ckpt), "--data", str(workspace / "t"), "--out", str(tmp_path)])
    model, cfg, _, _ = load_checkpoint(ckpt)
    samples = load_manifest(workspace / "t" / "manifest", 64)
    p = predict(model, samples)[0]
    img, _ = pnm.read(tmp_path / f"{samples[0].name}.pgm")
    np.testing.assert_array_equal(img, np.rint(255 * p))


def test_metrics_identical_dirs(workspace, tmp_path, capsys):
    gt = workspace / "t" / "gt"
    pred = tmp_path / "pred"
    shutil.copytree(gt, pred)
    assert main(["metrics", "--pred", str(pred), "--gt", str(gt), "--out", str(tmp_path / "r")]) == 0
    out = capsys.readouterr().out
    assert "dataset MAE 0.000000" in out
    assert "dataset S 1.000000" in out


def test_metrics_no_overlap_exit_2(tmp_path, capsys):
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    assert main(["metrics", "--pred", str(tmp_path / "a"), "--gt", str(tmp_path / "b")]) == 2


def test_ablate_runs_and_writes(workspace, tmp_path, capsys):
    rc = main(["ablate", "--data", str(workspace / "d"), "--test-data", str(workspace / "t"),
               "--variants", "ttem=on;ttem=off", "--seeds", "0", "--epochs", "1", "--out", str(tmp_path)])
    assert rc == 0
    lines = (tmp_path / "ablation_lines.txt").read_text().split("\n")
    assert {tuple(l.split()[:2]) for l in lines if l} == {(v, m) for v in ("ttem=on", "ttem=off")
                                                           for m in ("S", "F", "E", "MAE")}
    assert (tmp_path / "ablation.png").is_file()
    assert len((tmp_path / "ablation_runs.txt").read_text().splitlines()) == 2


def test_ablate_empty_grid(capsys):
    assert main(["ablate", "--variants", ""]) == 0
    assert "nothing to do" in capsys.readouterr().out


def test_ablate_unknown_variant_exit_1(capsys):
    assert main(["ablate", "--variants", "depth=off"]) == 1


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "tritrans", "train", "--preset", "paper", "--dry-run"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "N=1024" in proc.stdout


def test_nan_loss_exit_3(workspace, tmp_path, monkeypatch, capsys):
    from tritrans import trainer

    real = trainer.compute_loss

    def poisoned(model, batch, cfg):
        loss = real(model, batch, cfg)
        loss.data = np.asarray(np.inf, dtype=loss.data.dtype)
        return loss

    monkeypatch.setattr(trainer, "compute_loss", poisoned)
    rc = main(["train", "--data", str(workspace / "d"), "--out", str(tmp_path), "--epochs", "1"])
    assert rc == 3 and "numerical failure" in capsys.readouterr().err
