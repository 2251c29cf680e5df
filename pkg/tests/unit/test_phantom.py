"""仿体模块单元测试"""

import numpy as np
import pytest

from fm_das.errors import FormatError, GeometryError, ScenarioError
from fm_das.medium import Grid2D
from fm_das.phantom import (
    FAT_SOS,
    TARGET_SOS,
    CystSpec,
    FatLayerSpec,
    Region,
    ScenarioLayout,
    TargetRegistry,
    build_scenario,
    load_phantom,
    load_registry,
    rasterize_regions,
    region_mask,
    save_phantom,
)
from tests.fixtures.builders import MM, mini_config


@pytest.fixture(scope="module")
def layout(tmp_path_factory):
    return mini_config(tmp_path_factory.mktemp("out")).build_layout()


class TestFatLayer:
    """脂肪层几何测试"""

    def test_horizontal(self):
        """测试水平脂肪层"""
        fat = FatLayerSpec(top=2 * MM, thickness=2 * MM)
        inside = fat.contains(np.array([0.0, 0.0, 0.0, 5 * MM]), np.array([1, 3, 5, 3]) * MM)
        assert inside.tolist() == [False, True, False, True]

    def test_inclined(self):
        """测试倾斜层顶面随 x 变化"""
        fat = FatLayerSpec(top=2 * MM, thickness=1 * MM, inclination=45.0)
        # x = 1 mm 处层顶深度为 3 mm
        assert not fat.contains(1 * MM, 2.9 * MM)
        assert fat.contains(1 * MM, 3.5 * MM)

    def test_invalid_inclination(self):
        """测试倾角超出 [0°, 45°]"""
        with pytest.raises(GeometryError):
            FatLayerSpec(inclination=60.0)


class TestCyst:
    """囊肿几何测试"""

    def test_rotated_ellipse(self):
        """测试旋转 90° 后半轴互换"""
        cyst = CystSpec("CY1", (0.0, 0.0), (2 * MM, 1 * MM), rotation=90.0)
        assert cyst.contains(0.0, 1.9 * MM)
        assert not cyst.contains(1.9 * MM, 0.0)


class TestBuildScenario:
    """场景构造测试"""

    def test_deterministic(self, layout):
        """测试同一 (场景, 种子) 逐位一致"""
        a = build_scenario("M3", 11, layout)
        b = build_scenario("M3", 11, layout)

        np.testing.assert_array_equal(a.sos.c, b.sos.c)
        np.testing.assert_array_equal(a.scatterers, b.scatterers)

    def test_seed_changes_speckle(self, layout):
        """测试不同种子生成不同散斑"""
        a = build_scenario("M1", 1, layout)
        b = build_scenario("M1", 2, layout)
        assert not np.array_equal(a.sos.c, b.sos.c)

    def test_scenarios_share_speckle(self, layout):
        """测试同一种子下各场景脂肪层外的声速一致"""
        m1 = build_scenario("M1", 5, layout)
        m2 = build_scenario("M2", 5, layout)
        X, Z = layout.grid.mesh()
        outside = ~layout.fat_layer("M2").contains(X, Z)

        np.testing.assert_array_equal(m1.sos.c[outside], m2.sos.c[outside])

    def test_fat_layer_sos(self, layout):
        """测试脂肪层内平均声速接近 1400 m/s"""
        phantom = build_scenario("M4", 0, layout)
        X, Z = layout.grid.mesh()
        fat = layout.fat_layer("M4").contains(X, Z)

        assert fat.sum() > 100
        assert np.mean(phantom.sos.c[fat]) == pytest.approx(FAT_SOS, rel=0.005)

    def test_m1_has_no_fat(self, layout):
        """测试 M1 无脂肪层"""
        assert layout.fat_layer("M1") is None
        phantom = build_scenario("M1", 0, layout)
        assert phantom.sos.c_min > 1400.0

    def test_cyst_and_targets(self, layout):
        """测试囊肿内恒定 1540 m/s 且无散射子，点目标节点为 3000 m/s"""
        phantom = build_scenario("M2", 3, layout)
        grid = layout.grid
        X, Z = grid.mesh()
        cyst = layout.cysts[0].contains(X, Z)

        np.testing.assert_array_equal(phantom.sos.c[cyst], 1540.0)
        sx, sz = phantom.scatterers[:-4, 0], phantom.scatterers[:-4, 1]
        assert not np.any(layout.cysts[0].contains(sx, sz))

        for xt, zt in layout.point_targets:
            i = int(round((xt - grid.origin_x) / grid.dx))
            k = int(round((zt - grid.origin_z) / grid.dz))
            assert phantom.sos.c[i, k] == TARGET_SOS
        np.testing.assert_allclose(phantom.scatterers[-4:, :2], layout.point_targets)
        np.testing.assert_array_equal(phantom.scatterers[-4:, 2], 1.0)

    def test_scatterer_fraction(self, layout):
        """测试散斑散射子数量随保留比例变化"""
        from dataclasses import replace

        half = build_scenario("M1", 0, layout)
        full = build_scenario("M1", 0, replace(layout, scatterer_fraction=1.0))
        n_nodes = layout.grid.nx * layout.grid.nz

        assert full.scatterers.shape[0] > half.scatterers.shape[0]
        assert half.scatterers.shape[0] == pytest.approx(0.5 * n_nodes, rel=0.1)

    def test_registry(self, layout):
        """测试登记表内容"""
        phantom = build_scenario("M2", 9, layout)
        assert phantom.registry.scenario == "M2"
        assert phantom.registry.seed == 9
        assert phantom.registry.cyst_labels == ["CY1"]
        assert len(phantom.registry.point_targets) == 4

    def test_unknown_scenario(self, layout):
        """测试未知场景"""
        with pytest.raises(ScenarioError) as exc_info:
            build_scenario("M5", 0, layout)
        assert exc_info.value.scenario_id == "M5"

    def test_desk_background_mean(self):
        """测试桌面规模背景声速均值位于 1540 m/s 的 0.1% 以内"""
        layout = ScenarioLayout.desk()
        phantom = build_scenario("M1", 0, layout)
        X, Z = layout.grid.mesh()
        background = np.ones(layout.grid.shape, dtype=bool)
        for cyst in layout.cysts:
            background &= ~cyst.contains(X, Z)
        background &= phantom.sos.c < 2000.0

        assert np.mean(phantom.sos.c[background]) == pytest.approx(1540.0, rel=1e-3)

    def test_target_outside_grid(self, layout):
        """测试点目标位于网格外"""
        from dataclasses import replace

        bad = replace(layout, axial_targets=((0.0, 20 * MM),))
        with pytest.raises(GeometryError):
            build_scenario("M1", 0, bad)


class TestRegions:
    """评估区域测试"""

    def test_region_mask(self):
        """测试圆形掩膜像素数"""
        grid = Grid2D.from_extent(-2 * MM, 2 * MM, 0.0, 4 * MM, 0.1 * MM, 0.1 * MM)
        mask = region_mask(Region("CY1", (0.0, 2 * MM), 2 * MM), grid)

        assert mask.shape == grid.shape
        assert mask.sum() == pytest.approx(np.pi * 10 ** 2, rel=0.05)
        assert mask[20, 20]
        assert not mask[0, 0]

    def test_region_outside_grid(self):
        """测试区域超出像素网格"""
        grid = Grid2D.from_extent(-2 * MM, 2 * MM, 0.0, 4 * MM, 0.1 * MM, 0.1 * MM)
        with pytest.raises(GeometryError):
            region_mask(Region("CY1", (1.5 * MM, 2 * MM), 2 * MM), grid)

    def test_rasterize(self, layout, tmp_path):
        """测试登记表栅格化得到成对掩膜"""
        pixel_grid = mini_config(tmp_path).build_pixel_grid()
        registry = TargetRegistry(
            cyst_regions=list(layout.cyst_regions),
            background_regions=list(layout.background_regions),
        )
        masks = rasterize_regions(registry, pixel_grid)

        assert set(masks) == {"CY1", "CY1_BG"}
        assert masks["CY1"].sum() >= 100
        assert not np.any(masks["CY1"] & masks["CY1_BG"])


class TestPersistence:
    """仿体包读写测试"""

    def test_save_and_load(self, layout, tmp_path):
        """测试仿体包读回"""
        phantom = build_scenario("M3", 4, layout)
        paths = save_phantom(phantom, tmp_path / "M3")
        loaded = load_phantom(tmp_path / "M3")

        assert set(paths) == {"sos", "scatterers", "registry"}
        assert loaded.scenario == "M3"
        assert loaded.seed == 4
        assert loaded.sos.grid == phantom.sos.grid
        np.testing.assert_allclose(loaded.sos.c, phantom.sos.c, rtol=1e-6)
        np.testing.assert_allclose(loaded.scatterers, phantom.scatterers, rtol=1e-5, atol=1e-9)
        assert loaded.registry.cyst_regions == phantom.registry.cyst_regions

    def test_missing_registry(self, tmp_path):
        """测试登记表缺失"""
        with pytest.raises(FormatError):
            load_registry(tmp_path)

    def test_corrupt_registry(self, tmp_path):
        """测试登记表格式错误"""
        (tmp_path / "registry.yaml").write_text("cyst_regions: [{label: CY1}]\n", encoding="utf-8")
        with pytest.raises(FormatError):
            load_registry(tmp_path)
