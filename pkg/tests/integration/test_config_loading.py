"""配置文件加载集成测试"""

from pathlib import Path

import pytest
import yaml

from fm_das.cli import create_parser, load_config
from fm_das.config import ConfigManager, PipelineConfig

EXAMPLES = Path(__file__).parent.parent.parent / "docs" / "examples"


def flatten(data, prefix=""):
    """把嵌套字典展开为 点号路径 -> 值"""
    flat = {}
    for key, value in data.items():
        path = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(flatten(value, path + "."))
        else:
            flat[path] = value
    return flat


class TestConfigLoadingIntegration:
    """配置文件加载集成测试"""

    def test_desk_example_matches_preset(self):
        """测试桌面示例与内置预设一致"""
        manager = ConfigManager()
        config = manager.load_from_file(EXAMPLES / "desk.yaml")

        assert manager.validate(config) == []
        loaded = flatten(config.to_dict())
        expected = flatten(PipelineConfig.desk().to_dict())
        assert loaded.keys() == expected.keys()
        for key, value in expected.items():
            if isinstance(value, float):
                assert loaded[key] == pytest.approx(value, rel=1e-12), key
            else:
                assert loaded[key] == value, key

    def test_paper_example(self):
        """测试完整规模示例"""
        manager = ConfigManager()
        config = manager.load_from_file(EXAMPLES / "paper.yaml")

        assert manager.validate(config) == []
        assert config.preset == "paper"
        assert config.threads == 8
        assert config.eikonal.cache_size == 64
        assert config.build_grid().shape == (514, 1601)

    def test_cli_overrides_file(self, tmp_path):
        """测试命令行覆盖项优先于配置文件"""
        args = create_parser().parse_args([
            "pipeline", "--config", str(EXAMPLES / "paper.yaml"),
            "--threads", "2", "--seed", "5", "--out", str(tmp_path),
        ])
        config = load_config(args, {"scenarios": ["M4"], "methods": None})

        assert config.threads == 2
        assert config.seed == 5
        assert config.output_dir == str(tmp_path)
        assert config.scenarios == ["M4"]
        assert config.methods == ["das", "fm-das"]

    def test_preset_ignored_with_config(self, tmp_path):
        """测试指定 --config 时 --preset 不生效"""
        path = tmp_path / "c.yaml"
        path.write_text("seed: 1\n", encoding="utf-8")
        args = create_parser().parse_args(
            ["pipeline", "--config", str(path), "--preset", "paper"]
        )
        assert load_config(args).preset == "desk"

    def test_partial_file_merges_onto_preset(self, tmp_path):
        """测试部分配置合并到预设之上"""
        path = tmp_path / "partial.yaml"
        path.write_text(
            yaml.safe_dump({"array": {"n_elements": 32}, "transmit": {"n_transmits": 16}}),
            encoding="utf-8",
        )
        config = ConfigManager().load_from_file(path)

        assert config.array.n_elements == 32
        assert config.array.pitch == pytest.approx(3e-4)
        assert config.transmit.n_transmits == 16
        assert config.transmit.focal_depth == pytest.approx(0.03)
