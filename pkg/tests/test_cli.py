import dataclasses
import json
from pathlib import Path

import numpy as np
import pytest

from mtvloop.cli import main
from mtvloop.config import (
    CullingConfig,
    MetricsConfig,
    RunConfig,
    load_config,
    save_config,
)
from mtvloop.looping import PatchConfig
from mtvloop.scene_io import make_synthetic_scene, save_camera
from mtvloop.stage1 import Stage1Config
from mtvloop.stage2 import PyramidSchedule, Stage2Config

from conftest import make_camera, make_scene_spec


@pytest.fixture(scope="module")
def scene_dir(tmp_path_factory):
    spec = make_scene_spec(num_views=3, width=48, height=32, num_frames=12,
                           period=6)
    root = tmp_path_factory.mktemp("cli_scene")
    make_synthetic_scene(spec, root / "scene")
    return root / "scene"


@pytest.fixture(scope="module")
def tiny_config(tmp_path_factory):
    cfg = RunConfig(
        stage1=Stage1Config(num_planes=4, window=(16, 24), epochs=10,
                            windows_per_view=8, lr=0.05, lambda_tv=0.1),
        culling=CullingConfig(num_frames=6),
        patch=PatchConfig(spatial=5),
        pyramid=PyramidSchedule(coarsest_scale=0.5, growth=1.5,
                                epochs_per_level=4),
        stage2=Stage2Config(windows_per_view=2, window=(24, 36),
                            tv_weight=0.1),
        metrics=MetricsConfig(spatial_sizes=(5,), spatial_stride=8,
                              search_radius=2),
        seed=5,
    )
    path = tmp_path_factory.mktemp("cfg") / "tiny.json"
    save_config(cfg, path)
    return path


class TestUsage:
    def test_unknown_command_is_usage_error(self):
        assert main(["frobnicate"]) == 1

    def test_missing_required_flag(self):
        assert main(["cull"]) == 1

    def test_bad_frames_range(self, tmp_path, scene_dir):
        assert main(["render", "--mtv", "nope.mtv", "--path", "p.json",
                     "--frames", "zero:ten", "--out", str(tmp_path)]) in (1, 2)


class TestPrepare:
    def test_writes_idempotent_outputs(self, scene_dir, tmp_path):
        out = tmp_path / "prep"
        assert main(["prepare", str(scene_dir), "--out", str(out)]) == 0
        first = {p.name: p.read_bytes() for p in out.iterdir()}
        assert any(name.endswith("_average.png") for name in first)
        assert any(name.endswith("_mask.png") for name in first)
        assert main(["prepare", str(scene_dir), "--out", str(out)]) == 0
        second = {p.name: p.read_bytes() for p in out.iterdir()}
        assert first == second

    def test_malformed_dataset_exits_2(self, tmp_path):
        broken = tmp_path / "broken"
        (broken / "view_00").mkdir(parents=True)
        (broken / "view_01").mkdir()
        from mtvloop.scene_io import save_frame_png
        save_frame_png(broken / "view_00" / "frame_0000.png",
                       np.zeros((4, 4, 3)))
        save_frame_png(broken / "view_01" / "frame_0000.png",
                       np.zeros((4, 4, 3)))
        assert main(["prepare", str(broken), "--out",
                     str(tmp_path / "o")]) == 2


@pytest.fixture(scope="module")
def pipeline_out(scene_dir, tiny_config, tmp_path_factory):
    out = tmp_path_factory.mktemp("pipe")
    code = main(["pipeline", str(scene_dir), "--out", str(out),
                 "--config", str(tiny_config)])
    assert code == 0
    return out


class TestPipeline:
    def test_artifacts_exist(self, pipeline_out):
        assert (pipeline_out / "stage1.mpi").exists()
        assert (pipeline_out / "stage1.mpi.json").exists()
        assert (pipeline_out / "mtv_init.mtv").exists()
        assert (pipeline_out / "mtv_final.mtv").exists()
        assert (pipeline_out / "stage2_loss.csv").exists()
        assert (pipeline_out / "metrics.json").exists()
        assert (pipeline_out / "run_config.json").exists()
        renders = list((pipeline_out / "holdout_render").glob("render_*.png"))
        assert len(renders) == 6

    def test_metrics_report_schema(self, pipeline_out):
        report = json.loads((pipeline_out / "metrics.json").read_text())
        for key in ("stderr", "completeness", "coherence", "loopq",
                    "breakdown"):
            assert key in report

    def test_resume_reproduces_final_checkpoint(self, scene_dir, tiny_config,
                                                pipeline_out, tmp_path):
        final = (pipeline_out / "mtv_final.mtv").read_bytes()
        (pipeline_out / "mtv_final.mtv").unlink()
        code = main(["pipeline", str(scene_dir), "--out", str(pipeline_out),
                     "--config", str(tiny_config), "--resume"])
        assert code == 0
        assert (pipeline_out / "mtv_final.mtv").read_bytes() == final

    def test_loss_csv_has_rows(self, pipeline_out):
        lines = (pipeline_out / "stage2_loss.csv").read_text().splitlines()
        assert lines[0] == "level,epoch,iteration,loss"
        assert len(lines) > 10


class TestStageCommands:
    def test_cull_and_export(self, pipeline_out, tmp_path, capsys):
        mtv_path = tmp_path / "culled.mtv"
        code = main(["cull", "--mpi", str(pipeline_out / "stage1.mpi"),
                     "--out", str(mtv_path)])
        assert code == 0
        assert mtv_path.exists()

        bundle_dir = tmp_path / "bundle"
        code = main(["export", "--mtv", str(pipeline_out / "mtv_final.mtv"),
                     "--out", str(bundle_dir)])
        assert code == 0
        man = json.loads((bundle_dir / "manifest.json").read_text())
        assert man["version"] == "mtv-bundle/1"

    def test_cull_tau_zero_warns_dense_fallback(self, pipeline_out, tmp_path,
                                                capsys):
        code = main(["cull", "--mpi", str(pipeline_out / "stage1.mpi"),
                     "--out", str(tmp_path / "dense.mtv"),
                     "--tau-alpha", "0.0"])
        assert code == 0
        err = capsys.readouterr().err
        assert "nothing will be culled" in err

    def test_eval_writes_report(self, pipeline_out, scene_dir, tiny_config,
                                tmp_path):
        report_path = tmp_path / "report.json"
        code = main(["eval", str(scene_dir),
                     "--mtv", str(pipeline_out / "mtv_final.mtv"),
                     "--config", str(tiny_config),
                     "--out", str(report_path)])
        assert code == 0
        assert "loopq" in json.loads(report_path.read_text())

    def test_missing_checkpoint_exits_2(self, scene_dir, tmp_path):
        assert main(["eval", str(scene_dir), "--mtv",
                     str(tmp_path / "missing.mtv")]) == 2


class TestRender:
    def test_time_wraps_and_manifest(self, pipeline_out, tmp_path, scene_dir):
        cam = make_camera(width=48, height=32, fx=1.2 * 48,
                          center=(0.1, 0.0, 0.0))
        path_file = tmp_path / "path.json"
        path_file.write_text(json.dumps(
            {"format": "mtvloop-campath/1",
             "cameras": [dict(cam.to_json(), format="mtvloop-camera/1")]}))
        out = tmp_path / "frames"
        code = main(["render", "--mtv", str(pipeline_out / "mtv_final.mtv"),
                     "--path", str(path_file), "--frames", "0:13",
                     "--out", str(out)])
        assert code == 0
        t0 = (out / "render_0000.png").read_bytes()
        t6 = (out / "render_0006.png").read_bytes()
        t12 = (out / "render_0012.png").read_bytes()
        assert t0 == t6 == t12
        manifest = json.loads((out / "manifest.json").read_text())
        assert len(manifest["frames"]) == 13

    def test_empty_path_exits_2(self, pipeline_out, tmp_path):
        path_file = tmp_path / "empty.json"
        path_file.write_text(json.dumps({"format": "mtvloop-campath/1",
                                         "cameras": []}))
        assert main(["render", "--mtv", str(pipeline_out / "mtv_final.mtv"),
                     "--path", str(path_file), "--frames", "0:2",
                     "--out", str(tmp_path / "f")]) == 2


class TestConfigIo:
    def test_round_trip(self, tiny_config):
        cfg = load_config(tiny_config)
        assert cfg.stage1.num_planes == 4
        assert cfg.patch.spatial == 5
        assert cfg.metrics.spatial_sizes == (5,)

    def test_rejects_bad_format(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"format": "nope/9"}))
        from mtvloop.errors import DataError
        with pytest.raises(DataError):
            load_config(path)

    def test_tau_alpha_validation(self):
        with pytest.raises(ValueError):
            CullingConfig(tau_alpha=1.5)
        with pytest.raises(ValueError):
            CullingConfig(tau_loopable=0.0)
