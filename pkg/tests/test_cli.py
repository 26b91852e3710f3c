import json

import yaml
from click.testing import CliRunner

from conftest import TINY_MODEL
from momentkit.cli import main


def test_synth_train_evaluate_flow(tmp_path):
    runner = CliRunner()
    spec_path = tmp_path / "synth.yaml"
    spec_path.write_text(yaml.safe_dump({
        "seed": 7,
        "spec": {"num_samples": 8, "clips_per_video": 10, "dv": 16, "dt": 16,
                 "signal_strength": 0.9, "noise_sigma": 0.2},
        "splits": {"train": 6, "val": 2},
    }))
    out_dir = tmp_path / "data"
    result = runner.invoke(main, ["synth-data", "--spec", str(spec_path),
                                  "--out", str(out_dir)])
    assert result.exit_code == 0, result.output
    assert (out_dir / "train.jsonl").exists()
    assert (out_dir / "manifest.json").exists()

    cfg_path = tmp_path / "train.yaml"
    cfg_path.write_text(yaml.safe_dump({
        "data": {"kind": "mr_hd",
                 "train_annotations": str(out_dir / "train.jsonl"),
                 "val_annotations": str(out_dir / "val.jsonl"),
                 "feature_dir": str(out_dir / "features")},
        "features": {"name": "synthetic", "dv": 16, "dt": 16, "seed": 7},
        "model": TINY_MODEL,
        "optim": {"lr": 0.0005, "epochs": 2, "batch_size": 8},
        "run": {"seed": 1, "results_dir": str(tmp_path / "runs")},
    }))
    result = runner.invoke(main, ["train", "--config", str(cfg_path)])
    assert result.exit_code == 0, result.output
    ckpt = tmp_path / "runs" / "checkpoint_final.ckpt"
    assert ckpt.exists()

    result = runner.invoke(main, ["evaluate", "--config", str(cfg_path),
                                  "--checkpoint", str(ckpt)])
    assert result.exit_code == 0, result.output
    assert "r1@0.5" in result.output
    assert (tmp_path / "runs" / "eval_val_report.json").exists()


def test_cli_error_is_one_line_and_nonzero(tmp_path):
    runner = CliRunner()
    cfg_path = tmp_path / "bad.yaml"
    cfg_path.write_text(yaml.safe_dump({
        "data": {"kind": "mr_hd", "train_annotations": "missing.jsonl",
                 "feature_dir": "nope"},
        "run": {"results_dir": str(tmp_path / "runs")},
    }))
    result = runner.invoke(main, ["train", "--config", str(cfg_path)])
    assert result.exit_code == 1
    err_lines = [l for l in result.output.splitlines() if l.startswith("error:")]
    assert len(err_lines) == 1


def test_synth_data_rejects_unknown_key(tmp_path):
    runner = CliRunner()
    spec_path = tmp_path / "synth.yaml"
    spec_path.write_text(yaml.safe_dump({
        "seed": 7, "spec": {"num_sample": 8}}))
    result = runner.invoke(main, ["synth-data", "--spec", str(spec_path),
                                  "--out", str(tmp_path / "o")])
    assert result.exit_code == 1
    assert "num_sample" in result.output
