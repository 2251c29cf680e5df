"""命令行分步流程集成测试

phantom → rfsim → beamform (das / fm-das) → metrics，全部使用最小配置。
"""

import csv

import numpy as np
import pytest
import yaml

from fm_das.cli import main
from fm_das.formats import read_pgm, read_raster, read_rf
from fm_das.phantom import SOS_FILE
from fm_das.pipeline import DIAGNOSTICS_FILE, IMAGE_FILES, REPORT_FILE
from tests.fixtures.builders import write_mini_config


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """按顺序执行各子命令，返回各步骤目录"""
    root = tmp_path_factory.mktemp("cli_flow")
    config = write_mini_config(root / "mini.yaml", root / "unused")
    dirs = {
        "config": config,
        "phantom": root / "phantom",
        "rf": root / "rf",
        "das": root / "images" / "das",
        "fm-das": root / "images" / "fm-das",
        "metrics_das": root / "metrics" / "das",
        "metrics_fm": root / "metrics" / "fm-das",
    }
    common = ["--config", str(config), "-q"]

    codes = {}
    codes["phantom"] = main(["phantom", *common, "--scenario", "M3", "--out", str(dirs["phantom"])])
    codes["rfsim"] = main(["rfsim", *common, "--phantom", str(dirs["phantom"]),
                           "--out", str(dirs["rf"])])
    rf_file = str(dirs["rf"] / "rf.eikf")
    codes["das"] = main(["beamform", *common, "--rf", rf_file, "--method", "das",
                         "--out", str(dirs["das"]), "--dump-delay", "1", "5"])
    codes["fm-das"] = main(["beamform", *common, "--rf", rf_file, "--method", "fm-das",
                            "--sos", str(dirs["phantom"] / SOS_FILE), "--out", str(dirs["fm-das"])])
    codes["metrics_das"] = main(["metrics", *common, "--image", str(dirs["das"]),
                                 "--phantom", str(dirs["phantom"]), "--out", str(dirs["metrics_das"])])
    codes["metrics_fm"] = main(["metrics", *common, "--image", str(dirs["fm-das"]),
                                "--phantom", str(dirs["phantom"]), "--out", str(dirs["metrics_fm"])])
    dirs["codes"] = codes
    return dirs


class TestCliFlow:
    """分步命令流程测试"""

    def test_all_steps_succeed(self, workspace):
        """测试每个步骤退出码为 0"""
        assert workspace["codes"] == {
            "phantom": 0, "rfsim": 0, "das": 0, "fm-das": 0, "metrics_das": 0, "metrics_fm": 0,
        }

    def test_rf_matches_config(self, workspace):
        """测试射频文件几何与配置一致"""
        rf = read_rf(workspace["rf"] / "rf.eikf")
        assert rf.samples.shape[:2] == (4, 16)
        assert rf.fs == pytest.approx(19.2e6)
        assert np.any(rf.samples != 0.0)

    @pytest.mark.parametrize("method", ["das", "fm-das"])
    def test_image_files(self, workspace, method):
        """测试图像栅格与 PGM 写出"""
        image_dir = workspace[method]
        for name in IMAGE_FILES.values():
            assert (image_dir / name).exists()
        grid, log_db = read_raster(image_dir / IMAGE_FILES["log_db"])
        assert grid.shape == (51, 211)
        assert log_db.max() == pytest.approx(0.0, abs=1e-6)
        assert log_db.min() >= -60.0 - 1e-6
        assert read_pgm(image_dir / IMAGE_FILES["pgm"]).shape == (51, 211)

    def test_delay_dump(self, workspace):
        """测试延迟栅格导出"""
        grid, delay = read_raster(workspace["das"] / "delay_j001_i005.eikr")
        assert grid.shape == (51, 211)
        assert np.all(delay > 0.0)

    def test_methods_differ(self, workspace):
        """测试倾斜脂肪层下两种方法得到不同图像"""
        _, das = read_raster(workspace["das"] / IMAGE_FILES["envelope"])
        _, fm = read_raster(workspace["fm-das"] / IMAGE_FILES["envelope"])
        assert not np.array_equal(das, fm)

    def test_metrics_outputs(self, workspace):
        """测试单图像指标报告"""
        with open(workspace["metrics_fm"] / REPORT_FILE, newline="", encoding="utf-8") as f:
            rows = list(csv.DictReader(f))
        assert len(rows) == 1
        assert rows[0]["method"] == "fm-das"
        assert rows[0]["scenario"] == "M3"
        assert 0.0 <= float(rows[0]["mean_gds"]) <= 1.0
        assert 0.0 <= float(rows[0]["gcnr_CY1"]) <= 1.0

        diagnostics = yaml.safe_load(
            (workspace["metrics_das"] / DIAGNOSTICS_FILE).read_text(encoding="utf-8")
        )
        assert len(diagnostics["das"]["M3"]["targets"]) == 4
