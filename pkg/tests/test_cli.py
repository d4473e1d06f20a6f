"""Command dispatch, exit codes and the files each command leaves behind."""
import csv
import json

import numpy as np
import pytest

from sgtn.cli import EXIT_DATA, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, main
from sgtn.config import ConfigError, RunConfig, load_config, read_ini
from sgtn.predictions import write_predictions
from sgtn.synthdata import read_dataset


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def tree_bytes(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


# -- configuration ---------------------------------------------------------------

def test_config_defaults_and_ini(tmp_path):
    cfg = RunConfig()
    assert (cfg.preset, cfg.variant, cfg.sgm_enabled, cfg.lr, cfg.steps) == ("desk", "lswin", True, 1e-3, 2000)
    ini = tmp_path / "a.ini"
    ini.write_text("variant = lrc_only\nsgm_enabled = off\nlr = 0.01\n")
    cfg = load_config(ini, {"lr": "0.5"})
    assert (cfg.variant, cfg.sgm_enabled, cfg.lr) == ("lrc_only", False, 0.5)
    ini.write_text(RunConfig(seed=9).to_ini())
    assert load_config(ini) == RunConfig(seed=9)
    assert read_ini(ini)["seed"] == "9"


@pytest.mark.parametrize("text, msg", [("colour = red\n", "unknown key"), ("steps = many\n", "cannot parse"),
                                       ("variant = big\n", "variant"), ("[other]\nseed = 1\n", "unknown section"),
                                       ("batch = 0\n", "batch")])
def test_config_rejections(tmp_path, text, msg):
    ini = tmp_path / "bad.ini"
    ini.write_text(text)
    with pytest.raises(ConfigError, match=msg):
        load_config(ini)


# -- usage errors ---------------------------------------------------------------------

@pytest.mark.parametrize("argv", [[], ["fly"], ["train", "--colour", "red"], ["train", "--steps"],
                                  ["train", "--steps", "x"], ["train", "stray"], ["bench-attn", "--n", "0"],
                                  ["gen-data", "--config", "missing.ini"]])
def test_usage_errors_exit_1(workdir, argv, capsys):
    assert main(argv) == EXIT_USAGE
    assert "usage error" in capsys.readouterr().err


def test_thread_cap_must_be_positive(workdir, monkeypatch):
    monkeypatch.setenv("SGTN_THREADS", "zero")
    assert main(["gen-data", "--count", "1"]) == EXIT_USAGE
    monkeypatch.setenv("SGTN_THREADS", "1")
    assert main(["gen-data", "--count", "1"]) == EXIT_OK


def test_missing_data_exits_2(workdir, capsys):
    assert main(["train", "--data", "nowhere", "--steps", "1"]) == EXIT_DATA
    assert "nowhere" in capsys.readouterr().err
    main(["gen-data", "--count", "1"])
    assert main(["eval", "--checkpoint", "none.sgtn"]) == EXIT_DATA
    assert main(["eval", "--predictions", "nodir"]) == EXIT_DATA


def test_divergent_training_exits_3(workdir):
    main(["gen-data", "--count", "2"])
    with np.errstate(all="ignore"):
        assert main(["train", "--steps", "5", "--lr", "1e12"]) == EXIT_NUMERIC


# -- commands -------------------------------------------------------------------------------

def test_gen_data_is_byte_identical(workdir):
    assert main(["gen-data", "--seed", "7", "--count", "16", "--data", "a"]) == EXIT_OK
    assert main(["gen-data", "--seed", "7", "--count", "16", "--data", "b"]) == EXIT_OK
    assert tree_bytes(workdir / "a") == tree_bytes(workdir / "b")
    assert len(list((workdir / "a" / "images").glob("*.ppm"))) == 16
    main(["gen-data", "--seed", "8", "--count", "16", "--data", "c"])
    assert tree_bytes(workdir / "a") != tree_bytes(workdir / "c")


def test_eval_on_ground_truth_predictions_is_perfect(workdir):
    main(["gen-data", "--count", "4"])
    ds = read_dataset("data")
    gts = [[type(r)(r.category, r.bbox, r.mask, 1.0) for r in inst] for inst in ds.instances]
    write_predictions("preds", ds.ids, gts)
    assert main(["eval", "--predictions", "preds", "--out", "ev"]) == EXIT_OK
    report = json.loads((workdir / "ev" / "eval.json").read_text())
    assert report["AP"] == report["AP50"] == report["AP75"] == 1.0
    assert (workdir / "ev" / "eval.txt").read_text().startswith("class")


def test_train_zero_steps_then_eval_and_infer(workdir):
    main(["gen-data", "--count", "2"])
    assert main(["train", "--steps", "0", "--variant", "swin_only", "--sgm-enabled", "false"]) == EXIT_OK
    with open(workdir / "run" / "loss_log.csv") as fh:
        assert next(csv.reader(fh))[:3] == ["step", "total", "cbgm.focal"]
    assert read_ini(workdir / "run" / "run.ini")["variant"] == "swin_only"
    # architecture keys come from the checkpoint's run.ini
    assert main(["eval"]) == EXIT_OK
    report = json.loads((workdir / "run" / "eval.json").read_text())
    assert set(report) >= {"AP", "AP50", "AP75", "AP_S", "AP_M", "AP_L", "per_class"}
    assert main(["infer"]) == EXIT_OK
    assert sorted(p.name for p in (workdir / "run" / "overlays").iterdir()) == ["000000.ppm", "000001.ppm"]
    assert (workdir / "run" / "predictions" / "000001.json").is_file()
    # an explicit architecture that disagrees with the checkpoint is a data error
    assert main(["eval", "--sgm-enabled", "true"]) == EXIT_DATA


def test_train_writes_a_loss_row_per_step(workdir):
    main(["gen-data", "--count", "2"])
    assert main(["train", "--steps", "2", "--batch", "1"]) == EXIT_OK
    rows = list(csv.reader(open(workdir / "run" / "loss_log.csv")))
    assert len(rows) == 3 and [r[0] for r in rows[1:]] == ["0", "1"] and len(rows[1]) == 13
    assert (workdir / "run" / "model.sgtn").read_bytes()[:4] == b"SGTN"


def test_bench_attn_ratio(workdir):
    assert main(["bench-attn", "--n", "32", "--bench-repeats", "1"]) == EXIT_OK
    rows = list(csv.DictReader(open(workdir / "run" / "bench_attn.csv")))
    assert list(rows[0]) == ["n", "dense_flops", "window_flops", "axial_flops", "measured_ns"]
    r = rows[0]
    ratio = int(r["axial_flops"]) / int(r["dense_flops"])
    assert abs(ratio - 2 / 32) <= 0.1 * 2 / 32 and int(r["measured_ns"]) > 0


def test_module_entry_point(workdir):
    import subprocess
    import sys

    done = subprocess.run([sys.executable, "-m", "sgtn", "gen-data", "--count", "1"], capture_output=True, text=True)
    assert done.returncode == 0 and "wrote 1 scenes" in done.stdout
