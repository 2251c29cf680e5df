"""配置管理器的单元测试"""

import pytest
import yaml

from fm_das.config import (
    ArraySpec,
    ConfigManager,
    GridSpec,
    LayoutSpec,
    PipelineConfig,
    SCHEMA_VERSION,
)
from fm_das.errors import ConfigError, ExitCode
from fm_das.phantom import ScenarioLayout
from tests.fixtures.builders import MM, mini_config, mini_config_dict


@pytest.fixture
def manager():
    return ConfigManager()


class TestPresets:
    """测试预设配置"""

    def test_desk_defaults(self):
        """测试桌面预设默认值"""
        config = PipelineConfig.desk()
        assert config.preset == "desk"
        assert config.schema_version == SCHEMA_VERSION
        assert config.scenarios == ["M1", "M2", "M3", "M4"]
        assert config.methods == ["das", "fm-das"]
        assert config.array.n_elements == 64
        assert config.transmit.n_transmits == 32
        assert config.transmit.focal_depth == pytest.approx(30 * MM)
        assert config.threads == 1
        assert config.deterministic is True

    def test_paper_values(self):
        """测试完整规模预设"""
        config = PipelineConfig.paper()
        grid = config.build_grid()
        assert config.preset == "paper"
        assert grid.dx == pytest.approx(75e-6)
        assert grid.z_max == pytest.approx(120 * MM)
        assert config.array.n_elements == 128
        assert config.transmit.n_transmits == 128
        assert config.transmit.focal_depth == pytest.approx(60 * MM)

    @pytest.mark.parametrize("preset", ["desk", "paper"])
    def test_presets_valid(self, manager, preset):
        """测试两个预设均通过验证"""
        assert manager.validate(manager.load_from_defaults(preset)) == []

    def test_unknown_preset(self, manager):
        """测试未知预设"""
        with pytest.raises(ConfigError):
            manager.load_from_defaults("huge")

    def test_wavelength(self):
        """测试波长由参考声速和中心频率计算"""
        assert PipelineConfig.desk().wavelength == pytest.approx(1540 / 3e6)

    def test_builders(self):
        """测试由配置构造运行对象"""
        config = PipelineConfig.desk()
        array = config.build_array()
        pulse = config.build_pulse()
        sim = config.build_sim_config()

        assert array.n_elements == 64
        assert pulse.f0 == array.f0
        assert sim.seed == config.seed
        assert sim.sampling_rate(pulse) == pytest.approx(4 * 3e6 * 1.6)
        assert len(config.transmit.to_events(array)) == 32


class TestFromDict:
    """测试字典到配置的转换"""

    def test_round_trip_sections(self):
        """测试配置节被还原为数据类"""
        config = PipelineConfig.from_dict({"seed": 3, "array": {"n_elements": 32}})
        assert config.seed == 3
        assert isinstance(config.array, ArraySpec)
        assert config.array.n_elements == 32
        assert config.array.pitch == pytest.approx(0.3 * MM)

    def test_unknown_top_level_key(self):
        """测试未知顶层字段"""
        with pytest.raises(ConfigError, match="未知配置项"):
            PipelineConfig.from_dict({"seeds": 3})

    def test_unknown_section_field(self):
        """测试配置节中的未知字段"""
        with pytest.raises(ConfigError, match="grid"):
            PipelineConfig.from_dict({"grid": {"step": 1e-4}})

    def test_section_not_mapping(self):
        """测试配置节不是映射"""
        with pytest.raises(ConfigError):
            PipelineConfig.from_dict({"grid": [1, 2]})

    def test_config_error_exit_code(self):
        """测试配置错误的退出码"""
        with pytest.raises(ConfigError) as exc_info:
            PipelineConfig.from_dict({"bogus": 1})
        assert exc_info.value.exit_code == ExitCode.CONFIG_ERROR


class TestLoadFromFile:
    """测试从文件加载配置"""

    def test_missing_file(self, manager, tmp_path):
        """测试文件不存在"""
        with pytest.raises(ConfigError) as exc_info:
            manager.load_from_file(tmp_path / "missing.yaml")
        assert exc_info.value.config_file.endswith("missing.yaml")

    def test_invalid_yaml(self, manager, tmp_path):
        """测试 YAML 格式错误"""
        path = tmp_path / "bad.yaml"
        path.write_text("seed: [1, 2\n", encoding="utf-8")
        with pytest.raises(ConfigError, match="YAML"):
            manager.load_from_file(path)

    def test_top_level_not_mapping(self, manager, tmp_path):
        """测试顶层不是映射"""
        path = tmp_path / "list.yaml"
        path.write_text("- 1\n- 2\n", encoding="utf-8")
        with pytest.raises(ConfigError):
            manager.load_from_file(path)

    def test_empty_file(self, manager, tmp_path):
        """测试空文件得到桌面预设"""
        path = tmp_path / "empty.yaml"
        path.write_text("", encoding="utf-8")
        assert manager.load_from_file(path).to_dict() == PipelineConfig.desk().to_dict()

    def test_merges_onto_preset(self, manager, tmp_path):
        """测试文件内容合并到指定预设之上"""
        path = tmp_path / "paper.yaml"
        path.write_text("preset: paper\nseed: 11\narray:\n  pitch: 0.0003\n", encoding="utf-8")
        config = manager.load_from_file(path)

        assert config.seed == 11
        assert config.array.n_elements == 128
        assert config.grid.dx == pytest.approx(75e-6)

    def test_unknown_field_reports_file(self, manager, tmp_path):
        """测试未知字段错误带有文件路径且不重复前缀"""
        path = tmp_path / "typo.yaml"
        path.write_text("sim:\n  noise: 0.1\n", encoding="utf-8")
        with pytest.raises(ConfigError) as exc_info:
            manager.load_from_file(path)
        assert exc_info.value.config_file == str(path)
        assert exc_info.value.message.count("配置错误") == 1

    def test_save_and_reload(self, manager, tmp_path):
        """测试保存后重新加载得到相同配置"""
        config = mini_config(tmp_path / "out")
        path = tmp_path / "saved.yaml"
        manager.save_to_file(config, path)

        reloaded = manager.load_from_file(path)
        assert reloaded.to_dict() == config.to_dict()
        assert manager.config_hash(reloaded) == manager.config_hash(config)


class TestOverrides:
    """测试配置合并与覆盖"""

    def test_merge_order(self, manager):
        """测试后面的覆盖项优先"""
        config = manager.merge_configs(
            PipelineConfig.desk(), {"seed": 1, "sim": {"noise_std": 0.2}}, {"seed": 2}
        )
        assert config.seed == 2
        assert config.sim.noise_std == pytest.approx(0.2)
        assert config.sim.truth_delay_model == "fm_true_sos"

    def test_apply_dotted_overrides(self, manager):
        """测试点号路径覆盖项，None 被忽略"""
        config = manager.apply_overrides(
            PipelineConfig.desk(),
            {"seed": 7, "sim.noise_std": 0.1, "threads": None, "eikonal.cache_size": 4},
        )
        assert config.seed == 7
        assert config.sim.noise_std == pytest.approx(0.1)
        assert config.threads == 1
        assert config.eikonal.cache_size == 4

    def test_original_unchanged(self, manager):
        """测试覆盖不修改原配置"""
        base = PipelineConfig.desk()
        manager.apply_overrides(base, {"seed": 99})
        assert base.seed == 0


class TestConfigHash:
    """测试配置哈希"""

    def test_stable(self, manager):
        """测试相同配置哈希相同"""
        assert manager.config_hash(PipelineConfig.desk()) == manager.config_hash(PipelineConfig.desk())

    def test_sensitive(self, manager):
        """测试任一字段变化都改变哈希"""
        base = PipelineConfig.desk()
        changed = manager.apply_overrides(base, {"grid.dx": 1e-4})
        assert manager.config_hash(base) != manager.config_hash(changed)
        assert len(manager.config_hash(base)) == 64


class TestValidate:
    """测试配置验证"""

    def test_mini_config_valid(self, manager, tmp_path):
        """测试测试用最小配置有效"""
        assert manager.validate(mini_config(tmp_path)) == []

    def test_invalid_scenario(self, manager):
        """测试无效场景"""
        config = manager.apply_overrides(PipelineConfig.desk(), {"scenarios": ["M1", "M5"]})
        errors = manager.validate(config)
        assert any("M5" in e for e in errors)

    def test_duplicate_method(self, manager):
        """测试方法重复"""
        config = manager.apply_overrides(PipelineConfig.desk(), {"methods": ["das", "das"]})
        assert any("重复" in e for e in manager.validate(config))

    def test_sampling_rate_too_low(self, manager):
        """测试采样率低于 2·f0·(1+bw)"""
        config = manager.apply_overrides(PipelineConfig.desk(), {"sim.fs": 9e6})
        assert any("采样率" in e for e in manager.validate(config))

    def test_bandwidth_range(self, manager):
        """测试相对带宽范围"""
        config = manager.apply_overrides(PipelineConfig.desk(), {"pulse.bandwidth": 1.0})
        assert any("带宽" in e for e in manager.validate(config))

    def test_pixel_grid_outside_sos_grid(self, manager):
        """测试 fm-das 要求像素网格位于声速图网格内"""
        config = manager.apply_overrides(PipelineConfig.desk(), {"pixel_grid.x_max": 0.012})
        assert any("像素网格必须位于声速图网格内" in e for e in manager.validate(config))

        das_only = manager.apply_overrides(config, {"methods": ["das"]})
        assert not any("像素网格必须位于声速图网格内" in e for e in manager.validate(das_only))

    def test_grid_must_contain_array_plane(self, manager):
        """测试声速图网格必须包含 z = 0"""
        config = manager.apply_overrides(PipelineConfig.desk(), {"grid.z_min": 0.001})
        assert any("z = 0" in e for e in manager.validate(config))

    def test_array_wider_than_grid(self, manager):
        """测试阵列超出网格横向范围"""
        config = manager.apply_overrides(PipelineConfig.desk(), {"array.n_elements": 128})
        assert any("阵列横向范围" in e for e in manager.validate(config))

    def test_disk_radius_below_step(self, manager):
        """测试源点圆盘半径小于网格步长"""
        config = manager.apply_overrides(PipelineConfig.desk(), {"eikonal.source_disk_radius": 1e-4})
        assert any("圆盘半径" in e for e in manager.validate(config))

    def test_type_errors_short_circuit(self, manager):
        """测试类型错误优先报告"""
        config = manager.apply_overrides(
            PipelineConfig.desk(), {"seed": "seven", "grid.dx": "fine"}
        )
        errors = manager.validate(config)
        assert "seed 必须为整数" in errors
        assert "grid.dx 必须为数值" in errors

    def test_bool_is_not_int(self, manager):
        """测试布尔值不被当作整数"""
        config = manager.apply_overrides(PipelineConfig.desk(), {"threads": True})
        assert "threads 必须为整数" in manager.validate(config)

    def test_target_outside_pixel_grid(self, manager, tmp_path):
        """测试点目标位于像素网格外"""
        data = mini_config_dict(tmp_path)
        data["layout"]["axial_targets"] = [[0.0, 1 * MM]]
        config = manager.merge_configs(PipelineConfig.desk(), data)
        assert any("像素网格外" in e for e in manager.validate(config))

    def test_region_outside_pixel_grid(self, manager, tmp_path):
        """测试评估区域超出像素网格"""
        data = mini_config_dict(tmp_path)
        data["layout"]["background_regions"] = [
            {"label": "CY1", "center": [2.4 * MM, 11.5 * MM], "diameter": 1.6 * MM},
        ]
        config = manager.merge_configs(PipelineConfig.desk(), data)
        assert any("评估区域" in e for e in manager.validate(config))

    def test_validate_or_raise(self, manager):
        """测试验证失败时抛出配置错误"""
        config = manager.apply_overrides(PipelineConfig.desk(), {"threads": 0})
        with pytest.raises(ConfigError, match="线程数"):
            manager.validate_or_raise(config, config_file="x.yaml")


class TestLayoutSpec:
    """测试场景布局覆盖项"""

    def test_empty_spec_keeps_layout(self):
        """测试空覆盖项不改变布局"""
        layout = ScenarioLayout.desk()
        assert LayoutSpec().apply(layout) is layout

    def test_partial_override(self):
        """测试部分字段覆盖"""
        layout = ScenarioLayout.desk()
        updated = LayoutSpec(fat_top=4 * MM, axial_targets=[[0.0, 0.02]]).apply(layout)

        assert updated.fat_top == pytest.approx(4 * MM)
        assert updated.axial_targets == ((0.0, 0.02),)
        assert updated.fat_thickness == layout.fat_thickness
        assert updated.cysts == layout.cysts

    def test_cyst_override(self, tmp_path):
        """测试囊肿与评估区域覆盖"""
        layout = mini_config(tmp_path).build_layout()
        assert [c.label for c in layout.cysts] == ["CY1"]
        assert layout.cysts[0].semi_axes == pytest.approx((1.2 * MM, 1.2 * MM))
        assert layout.background_regions[0].diameter == pytest.approx(1.6 * MM)

    def test_grid_spec_to_grid(self):
        """测试网格规格转换"""
        grid = GridSpec(x_min=-1e-3, x_max=1e-3, z_min=0.0, z_max=2e-3, dx=1e-4, dz=1e-4).to_grid()
        assert grid.shape == (21, 21)
