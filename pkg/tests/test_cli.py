import json

import numpy as np
import pytest
import torch
from click.testing import CliRunner

from adorn3d.checkpoint import ModelSet, save_checkpoint
from adorn3d.cli import main
from adorn3d.dataset import build_pacmask, synthesize_raw_samples, write_records
from adorn3d.pngio import labels_to_png_bytes, load_label_png


@pytest.fixture(scope="module")
def ckpt_path(cfg, tmp_path_factory):
    torch.manual_seed(2)
    models = ModelSet(cfg)
    path = tmp_path_factory.mktemp("ckpt") / "model.ckpt"
    save_checkpoint(path, models, step=0)
    return str(path)


@pytest.fixture(scope="module")
def data_dir(cfg, tmp_path_factory):
    out = tmp_path_factory.mktemp("data") / "pacmask"
    records = build_pacmask(
        synthesize_raw_samples(40, seed=3, size=cfg.render.resolution), seed=3)
    write_records(records, out)
    return str(out)


def run(*args):
    result = CliRunner().invoke(main, list(args), catch_exceptions=False)
    assert result.exit_code == 0, result.output
    return result


class TestPacmaskCli:
    def test_synth_writes_dataset_and_raw(self, tmp_path):
        out = tmp_path / "ds"
        raw = tmp_path / "raw"
        run("pacmask", "synth", "--out", str(out), "--n", "12", "--seed", "1",
            "--size", "16", "--raw-out", str(raw))
        assert (out / "index.jsonl").exists()
        assert any(raw.iterdir())

    def test_build_from_raw(self, tmp_path):
        raw = tmp_path / "raw"
        run("pacmask", "synth", "--out", str(tmp_path / "unused"), "--n", "10",
            "--seed", "2", "--size", "16", "--raw-out", str(raw))
        out = tmp_path / "built"
        run("pacmask", "build", "--in", str(raw), "--out", str(out))
        lines = (out / "index.jsonl").read_text().splitlines()
        assert len(lines) > 10

    def test_bias_report(self, tmp_path):
        raw = tmp_path / "raw"
        run("pacmask", "synth", "--out", str(tmp_path / "unused"), "--n", "30",
            "--seed", "4", "--size", "16", "--raw-out", str(raw))
        report_path = tmp_path / "bias.json"
        run("pacmask", "bias-report", "--in", str(raw), "--out", str(report_path))
        report = json.loads(report_path.read_text())
        assert set(report) >= {"accessories", "attributes", "matrix"}
        assert (np.array(report["matrix"]) >= 0).all()


class TestGenerateCli:
    def test_generate_outputs_pngs(self, ckpt_path, tmp_path, cfg):
        prefix = tmp_path / "img"
        run("generate", "--ckpt", ckpt_path, "--seed", "5", "--pose", "0.2,0.1",
            "--out", str(prefix))
        rgb = tmp_path / "img_rgb.png"
        assert rgb.exists()
        spor = load_label_png(tmp_path / "img_spor.png")
        assert spor.shape == (cfg.render.resolution, cfg.render.resolution)
        sidecar = json.loads((tmp_path / "img_spor.json").read_text())
        assert sidecar["class_set"] == "portrait_20"

    def test_generate_deterministic(self, ckpt_path, tmp_path):
        p1, p2 = tmp_path / "a", tmp_path / "b"
        for p in (p1, p2):
            run("generate", "--ckpt", ckpt_path, "--seed", "9", "--out", str(p),
                "--accessory", "3,4")
        assert (tmp_path / "a_rgb.png").read_bytes() == (tmp_path / "b_rgb.png").read_bytes()

    def test_env_var_checkpoint(self, ckpt_path, tmp_path, monkeypatch):
        monkeypatch.setenv("ADORN3D_CKPT", ckpt_path)
        result = CliRunner().invoke(main, ["generate", "--seed", "1",
                                           "--out", str(tmp_path / "env")],
                                    catch_exceptions=False)
        assert result.exit_code == 0, result.output


class TestScribbleCli:
    def test_scribble2acc(self, ckpt_path, tmp_path, cfg):
        res = cfg.render.resolution
        labels = np.zeros((res, res), dtype=np.uint8)
        labels[1:4, 2:7] = 3
        scribble_path = tmp_path / "scribble.png"
        scribble_path.write_bytes(labels_to_png_bytes(labels))
        prefix = tmp_path / "inv"
        result = run("scribble2acc", "--ckpt", ckpt_path, "--portrait-seed", "7",
                     "--scribble", str(scribble_path), "--texture-seed", "8",
                     "--pose", "0.1,0.0", "--out", str(prefix))
        assert "codebook entry" in result.output
        assert (tmp_path / "inv_rgb.png").exists()


class TestTrainCli:
    def test_short_training_run(self, data_dir, tmp_path, cfg):
        out = tmp_path / "run"
        cfg_path = tmp_path / "cfg.json"
        cfg.save(cfg_path)
        run("train", "--config", str(cfg_path), "--data", data_dir,
            "--steps", "3", "--scribble-steps", "1", "--out", str(out))
        assert (out / "final.ckpt").exists()
        assert (out / "metrics.jsonl").exists()

    def test_resume_continues_step_count(self, data_dir, tmp_path, cfg):
        out = tmp_path / "run2"
        cfg_path = tmp_path / "cfg.json"
        cfg.save(cfg_path)
        run("train", "--config", str(cfg_path), "--data", data_dir,
            "--steps", "2", "--out", str(out))
        result = run("train", "--config", str(cfg_path), "--data", data_dir,
                     "--steps", "4", "--resume", str(out / "final.ckpt"),
                     "--out", str(out))
        assert "resumed at step 2" in result.output


class TestEvaluateCli:
    def test_report_written(self, ckpt_path, data_dir, tmp_path):
        report_path = tmp_path / "report.json"
        run("evaluate", "--ckpt", ckpt_path, "--dataset", data_dir,
            "--out", str(report_path))
        report = json.loads(report_path.read_text())
        assert {"fid", "kid", "fmd", "miou", "acc", "fvid", "sig_diversity",
                "image_embedder", "mask_embedder", "config"} <= set(report)
        assert 0 <= report["miou"] <= 1
        assert -1 <= report["fvid"] <= 1
