from types import SimpleNamespace

import numpy as np
import pytest
from click.testing import CliRunner

from shapeprobe import io
from shapeprobe.cli import main
from shapeprobe.io import hash_file, hash_tree

POOL = "procedural:7:48"
UNSEEN = "procedural:99:24"

runner = CliRunner()


def run(args, env=None):
    return runner.invoke(main, [str(a) for a in args], env=env)


def run_ok(args, env=None):
    result = run(args, env=env)
    assert result.exit_code == 0, result.output + result.stderr
    return result


def copy_predictions(gt_dir, pred_dir):
    pred_dir.mkdir(parents=True, exist_ok=True)
    for i in io.scene_indices(io.read_manifest(gt_dir)):
        mask = io.load_mask(io.scene_paths(gt_dir, i)["mask"])
        io.save_mask(io.prediction_path(pred_dir, i), mask)


@pytest.fixture(scope="module")
def ws(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "cfg.json"
    io.write_json(cfg, {"canvas": [128, 128], "size_range": [40.0, 64.0]})
    val = root / "val"
    run_ok(["gen", "--config", cfg, "--seed", "11", "--n", "4",
            "--out", val, "--pool", POOL])
    return SimpleNamespace(root=root, cfg=cfg, val=val)


class TestGen:
    def test_writes_dataset(self, ws):
        assert (ws.val / "manifest.json").exists()
        assert len(list((ws.val / "images").glob("*.png"))) == 4

    def test_deterministic(self, ws, tmp_path):
        for name in ("a", "b"):
            run_ok(["gen", "--config", ws.cfg, "--seed", "11", "--n", "4",
                    "--out", tmp_path / name, "--pool", POOL])
        assert hash_tree(tmp_path / "a") == hash_tree(tmp_path / "b")
        assert hash_tree(tmp_path / "a") == hash_tree(ws.val)

    def test_unknown_config_key(self, ws, tmp_path):
        bad = tmp_path / "bad.json"
        io.write_json(bad, {"cnvas": [128, 128]})
        result = run(["gen", "--config", bad, "--out", tmp_path / "x",
                      "--pool", POOL])
        assert result.exit_code == 2
        assert "unknown config keys" in result.stderr

    def test_rejects_zero_scenes(self, ws, tmp_path):
        result = run(["gen", "--config", ws.cfg, "--n", "0",
                      "--out", tmp_path / "x", "--pool", POOL])
        assert result.exit_code == 2

    def test_refuses_nonempty_output(self, ws):
        result = run(["gen", "--config", ws.cfg, "--n", "1",
                      "--out", ws.val, "--pool", POOL])
        assert result.exit_code == 3

    def test_force_overwrites(self, ws, tmp_path):
        out = tmp_path / "v"
        run_ok(["gen", "--config", ws.cfg, "--seed", "11", "--n", "4",
                "--out", out, "--pool", POOL])
        run_ok(["gen", "--config", ws.cfg, "--seed", "11", "--n", "4",
                "--out", out, "--pool", POOL, "--force"])
        assert hash_tree(out) == hash_tree(ws.val)

    def test_regenerate_from_manifest(self, ws, tmp_path):
        run_ok(["gen", "--from-manifest", ws.val / "manifest.json",
                "--out", tmp_path / "again"])
        assert hash_tree(tmp_path / "again") == hash_tree(ws.val)

    def test_sweep_layout(self, ws, tmp_path):
        run_ok(["gen", "--config", ws.cfg, "--seed", "11", "--n", "1",
                "--out", tmp_path / "sweep", "--pool", POOL, "--sweep"])
        names = sorted(p.name for p in (tmp_path / "sweep").iterdir())
        assert names == sorted(f"size_{s}" for s in range(160, 481, 32))


@pytest.fixture(scope="module")
def probes(ws):
    out = {}
    for kind in ("rm", "aff", "shuf"):
        out[kind] = ws.root / kind
        run_ok(["probe", ws.val, "--kind", kind, "--out", out[kind],
                "--seed", "5", "--unseen", UNSEEN])
    return out


class TestProbe:
    def test_kinds_write_meta(self, probes):
        for kind, path in probes.items():
            assert io.read_probe_meta(path)["kind"] == kind

    def test_rm_rejects_seen_pool(self, ws, tmp_path):
        result = run(["probe", ws.val, "--kind", "rm", "--out", tmp_path / "x",
                      "--unseen", POOL])
        assert result.exit_code == 4

    def test_missing_kind(self, ws, tmp_path):
        result = run(["probe", ws.val, "--out", tmp_path / "x"])
        assert result.exit_code == 2

    @pytest.mark.parametrize("kind", ["aff", "shuf"])
    def test_invert_reconstructs_source(self, ws, probes, tmp_path, kind):
        out = tmp_path / f"inv_{kind}"
        run_ok(["probe", probes[kind], "--invert", "--out", out])
        for i in range(4):
            src = io.scene_paths(ws.val, i)
            rec = io.scene_paths(out, i)
            assert hash_file(src["image"]) == hash_file(rec["image"])
            assert hash_file(src["mask"]) == hash_file(rec["mask"])

    def test_invert_rejects_rm(self, probes, tmp_path):
        result = run(["probe", probes["rm"], "--invert", "--out", tmp_path / "x"])
        assert result.exit_code == 4
        assert "not invertible" in result.stderr

    def test_brightness_pair(self, ws, tmp_path):
        out = tmp_path / "dark"
        run_ok(["probe", ws.val, "--kind", "brightness",
                "--fg-gain", "0.2", "--bg-gain", "2.0", "--out", out])
        meta = io.read_probe_meta(out)
        assert meta["params"] == {"fg_gain": 0.2, "bg_gain": 2.0}

    def test_brightness_needs_both_gains(self, ws, tmp_path):
        result = run(["probe", ws.val, "--kind", "brightness",
                      "--fg-gain", "0.2", "--out", tmp_path / "x"])
        assert result.exit_code == 2

    def test_brightness_grid(self, ws, tmp_path):
        out = tmp_path / "grid"
        result = run_ok(["probe", ws.val, "--kind", "brightness", "--out", out])
        assert "100 brightness sets" in result.output
        names = {p.name for p in out.iterdir()}
        assert len(names) == 100
        assert {"fg_0.2_bg_2", "fg_1_bg_1", "fg_2_bg_0.2"} <= names

    def test_elastic_list_of_degrees(self, ws, tmp_path):
        out = tmp_path / "ela"
        run_ok(["probe", ws.val, "--kind", "elastic", "--degrees", "1,3",
                "--out", out, "--seed", "2"])
        assert sorted(p.name for p in out.iterdir()) == ["degree_1", "degree_3"]

    def test_elastic_single_degree(self, ws, tmp_path):
        out = tmp_path / "e2"
        run_ok(["probe", ws.val, "--kind", "elastic", "--degrees", "2",
                "--out", out])
        assert io.read_probe_meta(out)["kind"] == "elastic"

    def test_elastic_bad_degrees(self, ws, tmp_path):
        result = run(["probe", ws.val, "--kind", "elastic", "--degrees", "x",
                      "--out", tmp_path / "x"])
        assert result.exit_code == 2


class TestPerturbAugment:
    def test_perturb_keeps_labels(self, ws, tmp_path):
        out = tmp_path / "noisy"
        run_ok(["perturb", ws.val, "--kind", "gaussian", "--severity", "2",
                "--out", out])
        assert io.read_manifest(out)["kind"] == "corrupted"
        for i in range(4):
            assert hash_file(io.scene_paths(ws.val, i)["mask"]) == \
                hash_file(io.scene_paths(out, i)["mask"])

    def test_perturb_severity_range(self, ws, tmp_path):
        result = run(["perturb", ws.val, "--kind", "gaussian",
                      "--severity", "9", "--out", tmp_path / "x"])
        assert result.exit_code == 4

    def test_augment_reports_counts(self, ws, tmp_path):
        result = run_ok(["augment", ws.val, "--kind", "color_jitter",
                         "--out", tmp_path / "jit"])
        assert "4/4 scenes transformed" in result.output

    def test_augment_spec_overlay(self, ws, tmp_path):
        spec = tmp_path / "spec.json"
        io.write_json(spec, {"saturation": 0.0})
        run_ok(["augment", ws.val, "--kind", "separate_color_jitter",
                "--spec", spec, "--out", tmp_path / "s"])
        manifest = io.read_manifest(tmp_path / "s")
        assert manifest["augmentation"]["kind"] == "separate_color_jitter"

    def test_augment_unknown_spec_key(self, ws, tmp_path):
        spec = tmp_path / "spec.json"
        io.write_json(spec, {"velocity": 3})
        result = run(["augment", ws.val, "--kind", "color_jitter",
                      "--spec", spec, "--out", tmp_path / "x"])
        assert result.exit_code == 4


@pytest.fixture(scope="module")
def perfect_preds(ws, probes):
    preds = {}
    for name, gt in [("val", ws.val)] + list(probes.items()):
        preds[name] = ws.root / "preds" / name
        copy_predictions(gt, preds[name])
    return preds


class TestEval:
    def test_perfect_predictions_print_two(self, ws, probes, perfect_preds,
                                           tmp_path):
        report_path = tmp_path / "report.json"
        result = run_ok(["eval",
                         "--val", ws.val, perfect_preds["val"],
                         "--rm", probes["rm"], perfect_preds["rm"],
                         "--aff", probes["aff"], perfect_preds["aff"],
                         "--shuf", probes["shuf"], perfect_preds["shuf"],
                         "--out", report_path])
        assert "SBI 2.0000" in result.output
        assert "iou_val 1.0000" in result.output
        report = io.read_json(report_path)
        assert set(report) == {"iou", "pd", "delta", "sbi", "n_images",
                               "source_manifests"}
        assert report["sbi"] == 2.0

    def test_source_mismatch_refused(self, ws, probes, perfect_preds, tmp_path):
        other_val = tmp_path / "val2"
        run_ok(["gen", "--config", ws.cfg, "--seed", "12", "--n", "4",
                "--out", other_val, "--pool", POOL])
        other_rm = tmp_path / "rm2"
        run_ok(["probe", other_val, "--kind", "rm", "--out", other_rm,
                "--unseen", UNSEEN])
        copy_predictions(other_rm, tmp_path / "rm2_preds")
        args = ["eval",
                "--val", ws.val, perfect_preds["val"],
                "--rm", other_rm, tmp_path / "rm2_preds",
                "--aff", probes["aff"], perfect_preds["aff"],
                "--shuf", probes["shuf"], perfect_preds["shuf"]]
        result = run(args)
        assert result.exit_code == 4
        run_ok(args + ["--no-check-sources"])


class TestOracle:
    def test_predicts_per_dataset_subdirs(self, ws, probes, tmp_path):
        out = tmp_path / "preds"
        result = run_ok(["oracle", ws.val, probes["rm"],
                         "--kind", "any_foreground", "--train", ws.val,
                         "--out", out])
        assert "any_foreground" in result.output
        for name in ("val", "rm"):
            found = sorted(p.name for p in (out / name).glob("*.png"))
            assert found == [f"{i:05d}.png" for i in range(4)]

    def test_shape_template_options(self, ws, tmp_path):
        run_ok(["oracle", ws.val, "--kind", "shape_template",
                "--train", ws.val, "--out", tmp_path / "p", "--theta", "0.7"])
        assert len(list((tmp_path / "p" / "val").glob("*.png"))) == 4


class TestRf:
    def test_bundled_specs(self):
        assert run_ok(["rf", "unet140"]).output.strip() == "140"
        assert run_ok(["rf", "unet210"]).output.strip() == "210"

    def test_spec_file(self, tmp_path):
        spec = tmp_path / "net.json"
        io.write_json(spec, {"stages": [{"kernel": 5},
                                        {"kernel": 3, "dilation": 2}]})
        assert run_ok(["rf", spec]).output.strip() == "9"

    def test_empty_spec_rejected(self, tmp_path):
        spec = tmp_path / "net.json"
        io.write_json(spec, {"stages": []})
        assert run(["rf", spec]).exit_code == 4


class TestReport:
    def test_scores_prediction_dir(self, ws, perfect_preds):
        result = run_ok(["report", "--gt", ws.val,
                         "--pred", perfect_preds["val"]])
        assert "iou 1.0000 over 4 images" in result.output

    def test_collect_merges(self, tmp_path):
        for name in ("a", "b"):
            io.write_json(tmp_path / f"{name}.json", {"sbi": 2.0})
        merged = tmp_path / "merged.json"
        run_ok(["report", "--collect", tmp_path / "a.json",
                "--collect", tmp_path / "b.json", "--out", merged])
        doc = io.read_json(merged)
        assert [r["data"]["sbi"] for r in doc["reports"]] == [2.0, 2.0]

    def test_requires_inputs(self):
        assert run(["report"]).exit_code == 2


class TestAtlasEnv:
    def test_pool_resolved_from_env_dir(self, ws, tmp_path):
        atlas = tmp_path / "pools" / "desk"
        atlas.mkdir(parents=True)
        rng = np.random.default_rng(0)
        for i in range(8):
            io.save_image(atlas / f"tex_{i}.png",
                          rng.integers(0, 256, (64, 64, 3), dtype=np.uint8))
        run_ok(["gen", "--config", ws.cfg, "--n", "1", "--pool", "desk",
                "--out", tmp_path / "ds"],
               env={"SHAPEPROBE_TEXTURE_DIR": str(tmp_path / "pools")})
        manifest = io.read_manifest(tmp_path / "ds")
        assert manifest["seen_pool"] == str(tmp_path / "pools" / "desk")
        assert all(t.startswith("desk#tex_")
                   for t in manifest["partition"]["target"])
