"""Command-line surface: exit codes, config handling, determinism."""

import json

import numpy as np
import pytest

from mrdiff import cli, data


def run_cli(*argv):
    return cli.run(list(argv))


@pytest.fixture
def image_pair(tmp_path):
    img = data.synthetic_image(16, 16, 3)
    pair = data.degrade_lowlight(img, seed=3)
    deg = tmp_path / "deg.ppm"
    ref = tmp_path / "ref.ppm"
    data.save_image(deg, pair.degraded)
    data.save_image(ref, pair.reference)
    return deg, ref


class TestConfigHandling:
    def test_unknown_config_keys_rejected(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"steps": 10, "bogus_key": 1}))
        code, _ = run_cli("sde-roundtrip", "--config", str(cfg))
        assert code == cli.EXIT_CONFIG

    def test_invalid_json_rejected(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text("{not json")
        code, _ = run_cli("sde-roundtrip", "--config", str(cfg))
        assert code == cli.EXIT_CONFIG

    def test_missing_config_file_is_io_error(self):
        code, _ = run_cli("sde-roundtrip", "--config", "/nonexistent/cfg.json")
        assert code == cli.EXIT_IO

    def test_flags_override_config(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"steps": 10, "size": 16, "seed": 1}))
        code, report = run_cli("sde-roundtrip", "--config", str(cfg), "--steps", "20")
        assert code == 0
        assert report["config"]["steps"] == 20
        assert report["config"]["size"] == 16

    def test_bad_schedule_config(self):
        code, _ = run_cli("sde-roundtrip", "--steps", "0", "--size", "16")
        assert code == cli.EXIT_CONFIG

    def test_report_contains_schema_and_config(self, tmp_path):
        rpt = tmp_path / "r.json"
        code, _ = run_cli("sde-roundtrip", "--steps", "10", "--size", "16",
                          "--report", str(rpt))
        assert code == 0
        doc = json.loads(rpt.read_text())
        assert doc["schema_version"] == cli.SCHEMA_VERSION
        assert doc["command"] == "sde-roundtrip"
        assert doc["config"]["steps"] == 10


class TestSdeRoundtrip:
    def test_default_synthetic_psnr_over_30(self):
        code, report = run_cli("sde-roundtrip", "--size", "32", "--seed", "0")
        assert code == 0
        assert report["result"]["recovered_psnr_db"] >= 30.0

    def test_report_bitwise_reproducible(self, tmp_path):
        rpt = tmp_path / "a.json"
        code, _ = run_cli("sde-roundtrip", "--steps", "40", "--size", "16",
                          "--seed", "5", "--report", str(rpt))
        assert code == 0
        first = rpt.read_bytes()
        code, _ = run_cli("sde-roundtrip", "--steps", "40", "--size", "16",
                          "--seed", "5", "--report", str(rpt))
        assert code == 0
        assert rpt.read_bytes() == first

    def test_recovered_image_written(self, tmp_path):
        out = tmp_path / "rec.ppm"
        code, _ = run_cli("sde-roundtrip", "--steps", "40", "--size", "16",
                          "--out", str(out))
        assert code == 0
        assert data.load_image(out).shape == (1, 3, 16, 16)


class TestTrainRestoreCli:
    def test_train_then_restore(self, tmp_path):
        ck = tmp_path / "toy.npz"
        code, report = run_cli("train-toy", "--iters", "4", "--steps", "30",
                               "--image-size", "16", "--pool-size", "2",
                               "--checkpoint", str(ck), "--seed", "1")
        assert code == 0
        assert ck.exists()
        assert len(report["result"]["loss_curve"]) == 4

        out = tmp_path / "restored.ppm"
        code, report = run_cli("restore", "--checkpoint", str(ck), "--steps", "30",
                               "--out", str(out), "--seed", "1")
        assert code == 0
        assert "restored_vs_reference" in report["result"]
        assert out.exists()

    def test_zero_lr_flat_curve(self, tmp_path):
        ck = tmp_path / "flat.npz"
        code, report = run_cli("train-toy", "--iters", "5", "--steps", "20",
                               "--lr", "0", "--pool-size", "1",
                               "--image-size", "16", "--checkpoint", str(ck))
        assert code == 0
        losses = [r["combined"] for r in report["result"]["loss_curve"]]
        assert max(losses) == min(losses)

    def test_missing_checkpoint_io_exit(self):
        code, _ = run_cli("restore", "--checkpoint", "/nonexistent/x.npz")
        assert code == cli.EXIT_IO

    def test_restore_without_reference_omits_metrics(self, tmp_path, image_pair):
        deg, _ = image_pair
        ck = tmp_path / "toy.npz"
        run_cli("train-toy", "--iters", "2", "--steps", "20", "--image-size", "16",
                "--pool-size", "1", "--checkpoint", str(ck))
        code, report = run_cli("restore", "--checkpoint", str(ck), "--steps", "20",
                               "--input", str(deg))
        assert code == 0
        assert "restored_vs_reference" not in report["result"]

    def test_resume_matches_uninterrupted(self, tmp_path):
        full_ck = tmp_path / "full.npz"
        part_ck = tmp_path / "part.npz"
        resumed_ck = tmp_path / "resumed.npz"
        _, full = run_cli("train-toy", "--iters", "8", "--steps", "20",
                          "--image-size", "16", "--pool-size", "2", "--seed", "4",
                          "--checkpoint", str(full_ck))
        run_cli("train-toy", "--iters", "4", "--steps", "20", "--image-size", "16",
                "--pool-size", "2", "--seed", "4", "--checkpoint", str(part_ck))
        _, resumed = run_cli("train-toy", "--iters", "8", "--steps", "20",
                             "--image-size", "16", "--pool-size", "2", "--seed", "4",
                             "--checkpoint", str(resumed_ck), "--resume", str(part_ck))
        a = [r["combined"] for r in full["result"]["loss_curve"]]
        b = [r["combined"] for r in resumed["result"]["loss_curve"]]
        assert a == b


class TestProbeCli:
    def test_default_ladder_passes(self):
        code, report = run_cli("probe", "--channels", "2")
        assert code == 0
        assert report["result"]["measured_ladder"] == [3, 7, 15, 31]
        assert report["result"]["gradient_suite_ok"]

    def test_tampered_dilations_fail_with_23(self):
        code, report = run_cli("probe", "--channels", "2", "--dilations", "2,4,4")
        assert code == cli.EXIT_NUMERIC
        assert report["result"]["measured_ladder"] == [3, 7, 15, 23]

    def test_bad_dilations_config_error(self):
        code, _ = run_cli("probe", "--dilations", "2,x,8")
        assert code == cli.EXIT_CONFIG


class TestMetricsCli:
    def test_file_vs_itself(self, image_pair):
        deg, _ = image_pair
        code, report = run_cli("metrics", str(deg), str(deg))
        assert code == 0
        res = report["result"]
        assert res["metrics"]["psnr_db"] == "inf"
        assert res["metrics"]["ssim"] == 1.0
        assert res["pixel_loss"] == 0.0
        assert res["edge_loss"] == 0.0
        assert res["hist_loss"] == 0.0

    def test_pair_metrics_stable_across_runs(self, image_pair):
        deg, ref = image_pair
        _, r1 = run_cli("metrics", str(deg), str(ref))
        _, r2 = run_cli("metrics", str(deg), str(ref))
        assert r1 == r2

    def test_mismatched_sizes_numeric_exit(self, tmp_path, image_pair):
        deg, _ = image_pair
        other = tmp_path / "small.ppm"
        data.save_image(other, data.synthetic_image(12, 12, 1))
        code, _ = run_cli("metrics", str(deg), str(other))
        assert code == cli.EXIT_NUMERIC

    def test_unreadable_image_io_exit(self, tmp_path, image_pair):
        deg, _ = image_pair
        bad = tmp_path / "bad.ppm"
        bad.write_bytes(b"not a ppm")
        code, _ = run_cli("metrics", str(deg), str(bad))
        assert code == cli.EXIT_IO


class TestGenDataCli:
    def test_files_follow_naming_convention(self, tmp_path):
        out = tmp_path / "pairs"
        code, report = run_cli("gen-data", "--outdir", str(out), "--count", "2",
                               "--image-size", "16", "--tags", "lowlight,rain")
        assert code == 0
        files = sorted(p.name for p in out.iterdir())
        assert "lowlight_0_deg.ppm" in files and "lowlight_0_ref.ppm" in files
        assert "rain_1_deg.ppm" in files and "rain_1_ref.ppm" in files
        assert len(files) == 8
        assert sorted(report["result"]["files"]) == files

    def test_unknown_tag_config_error(self, tmp_path):
        code, _ = run_cli("gen-data", "--outdir", str(tmp_path), "--tags", "blizzard")
        assert code == cli.EXIT_CONFIG

    def test_deterministic_bytes(self, tmp_path):
        out1 = tmp_path / "a"
        out2 = tmp_path / "b"
        for out in (out1, out2):
            run_cli("gen-data", "--outdir", str(out), "--count", "1",
                    "--image-size", "16", "--tags", "haze", "--seed", "2")
        f1 = out1 / "haze_2000_deg.ppm"
        f2 = out2 / "haze_2000_deg.ppm"
        assert f1.read_bytes() == f2.read_bytes()
