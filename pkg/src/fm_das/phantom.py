"""仿体模块

构造四个对比场景（M1 无脂肪层、M2 水平脂肪层、M3 倾斜 10°、M4 倾斜 25°）:
声速图、散射子分布、点目标、囊肿和脂肪层，以及供指标计算使用的真值目标登记表。
同一 (场景, 种子) 生成的仿体逐位一致；同一种子下四个场景共享同一散斑实现。
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import yaml

from .errors import FormatError, GeometryError, ScenarioError
from .medium import C_REF, Grid2D, SosMap

logger = logging.getLogger(__name__)

SCENARIO_IDS = ("M1", "M2", "M3", "M4")

# 各场景脂肪层倾角（度），None 表示无脂肪层
FAT_INCLINATIONS: Dict[str, Optional[float]] = {
    "M1": None,
    "M2": 0.0,
    "M3": 10.0,
    "M4": 25.0,
}

FAT_SOS = 1400.0
TARGET_SOS = 3000.0
TARGET_REFLECTIVITY = 1.0
PERTURBATION_STD = 0.01

SOS_FILE = "sos.eikr"
SCATTERER_FILE = "scatterers.bin"
REGISTRY_FILE = "registry.yaml"


@dataclass(frozen=True)
class FatLayerSpec:
    """脂肪层

    层顶面为 z = top + tan(θ)·x，法向厚度为 thickness。

    Attributes:
        mean_sos: 平均声速（m/s）
        top: x = 0 处的层顶深度（米）
        thickness: 法向厚度（米）
        inclination: 倾角（度），位于 [0, 45]
    """

    mean_sos: float = FAT_SOS
    top: float = 5e-3
    thickness: float = 10e-3
    inclination: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.inclination <= 45.0:
            raise GeometryError(f"脂肪层倾角必须位于 [0°, 45°]: {self.inclination}")
        if not (self.thickness > 0 and self.top >= 0):
            raise GeometryError(f"脂肪层位置无效: top={self.top}, thickness={self.thickness}")

    def contains(self, x: np.ndarray, z: np.ndarray) -> np.ndarray:
        """判断位置是否位于脂肪层内"""
        theta = math.radians(self.inclination)
        normal_depth = (np.asarray(z) - self.top - math.tan(theta) * np.asarray(x)) * math.cos(theta)
        return (normal_depth >= 0.0) & (normal_depth <= self.thickness)


@dataclass(frozen=True)
class CystSpec:
    """无回声囊肿（椭圆）

    Attributes:
        label: 标签（CY1、CY2 ...）
        center: 中心 (x, z)（米）
        semi_axes: 半轴 (a_x, a_z)（米），旋转前沿 x 与 z
        rotation: 旋转角（度）
    """

    label: str
    center: Tuple[float, float]
    semi_axes: Tuple[float, float]
    rotation: float = 0.0

    def contains(self, x: np.ndarray, z: np.ndarray) -> np.ndarray:
        phi = math.radians(self.rotation)
        dx = np.asarray(x) - self.center[0]
        dz = np.asarray(z) - self.center[1]
        u = dx * math.cos(phi) + dz * math.sin(phi)
        v = -dx * math.sin(phi) + dz * math.cos(phi)
        return (u / self.semi_axes[0]) ** 2 + (v / self.semi_axes[1]) ** 2 <= 1.0


@dataclass(frozen=True)
class Region:
    """圆形评估区域

    Attributes:
        label: 对应囊肿标签
        center: 圆心 (x, z)（米）
        diameter: 直径（米）
    """

    label: str
    center: Tuple[float, float]
    diameter: float


@dataclass
class TargetRegistry:
    """真值目标登记表

    Attributes:
        point_targets: 点目标真实位置列表 (x, z)
        cyst_regions: 囊肿评估圆
        background_regions: 背景评估圆（label 与所配对的囊肿一致）
        scenario: 场景编号
        seed: 随机种子
    """

    point_targets: List[Tuple[float, float]] = field(default_factory=list)
    cyst_regions: List[Region] = field(default_factory=list)
    background_regions: List[Region] = field(default_factory=list)
    scenario: str = ""
    seed: int = 0

    @property
    def cyst_labels(self) -> List[str]:
        return [r.label for r in self.cyst_regions]

    def to_dict(self) -> Dict:
        """转换为可写入 YAML 的字典"""
        return {
            "scenario": self.scenario,
            "seed": int(self.seed),
            "point_targets": [[float(x), float(z)] for x, z in self.point_targets],
            "cyst_regions": [_region_to_dict(r) for r in self.cyst_regions],
            "background_regions": [_region_to_dict(r) for r in self.background_regions],
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "TargetRegistry":
        return cls(
            point_targets=[(float(x), float(z)) for x, z in data.get("point_targets", [])],
            cyst_regions=[_region_from_dict(r) for r in data.get("cyst_regions", [])],
            background_regions=[_region_from_dict(r) for r in data.get("background_regions", [])],
            scenario=str(data.get("scenario", "")),
            seed=int(data.get("seed", 0)),
        )


def _region_to_dict(region: Region) -> Dict:
    return {
        "label": region.label,
        "center": [float(region.center[0]), float(region.center[1])],
        "diameter": float(region.diameter),
    }


def _region_from_dict(data: Dict) -> Region:
    return Region(
        label=str(data["label"]),
        center=(float(data["center"][0]), float(data["center"][1])),
        diameter=float(data["diameter"]),
    )


@dataclass(frozen=True)
class ScenarioLayout:
    """场景几何布局

    Attributes:
        grid: 声速图网格
        fat_top: 脂肪层顶深度（米）
        fat_thickness: 脂肪层法向厚度（米）
        axial_targets: 轴向点目标
        lateral_targets: 横向点目标
        cysts: 囊肿
        cyst_regions: 囊肿评估圆
        background_regions: 背景评估圆
        scatterer_fraction: 保留的散斑散射子比例
    """

    grid: Grid2D
    fat_top: float
    fat_thickness: float
    axial_targets: Tuple[Tuple[float, float], ...]
    lateral_targets: Tuple[Tuple[float, float], ...]
    cysts: Tuple[CystSpec, ...]
    cyst_regions: Tuple[Region, ...]
    background_regions: Tuple[Region, ...]
    scatterer_fraction: float = 1.0

    @classmethod
    def paper(cls, grid: Optional[Grid2D] = None, scatterer_fraction: float = 1.0) -> "ScenarioLayout":
        """38.5 mm × 120 mm、75 µm 步长的完整规模布局"""
        mm = 1e-3
        if grid is None:
            grid = Grid2D.from_extent(-19.25 * mm, 19.25 * mm, 0.0, 120 * mm, 75e-6, 75e-6)
        return cls(
            grid=grid,
            fat_top=5 * mm,
            fat_thickness=10 * mm,
            axial_targets=tuple((0.0, z * mm) for z in (15, 30, 45, 60, 75, 90)),
            lateral_targets=tuple((x * mm, 53 * mm) for x in (-5, 5, 10, 15)),
            cysts=(
                CystSpec("CY1", (-13 * mm, 53 * mm), (6 * mm, 6 * mm)),
                CystSpec("CY2", (4 * mm, 26 * mm), (5 * mm, 3 * mm)),
                CystSpec("CY3", (13 * mm, 42 * mm), (4 * mm, 6 * mm), rotation=30.0),
            ),
            cyst_regions=(
                Region("CY1", (-13 * mm, 53 * mm), 10 * mm),
                Region("CY2", (4 * mm, 26 * mm), 4 * mm),
                Region("CY3", (13 * mm, 42 * mm), 6 * mm),
            ),
            background_regions=(
                Region("CY1", (-13 * mm, 30 * mm), 10 * mm),
                Region("CY2", (14 * mm, 26 * mm), 6 * mm),
                Region("CY3", (-8 * mm, 42 * mm), 6 * mm),
            ),
            scatterer_fraction=scatterer_fraction,
        )

    @classmethod
    def desk(cls, grid: Optional[Grid2D] = None, scatterer_fraction: float = 0.5) -> "ScenarioLayout":
        """19.2 mm × 60 mm、150 µm 步长的桌面规模布局"""
        mm = 1e-3
        if grid is None:
            grid = Grid2D.from_extent(-9.6 * mm, 9.6 * mm, 0.0, 60 * mm, 150e-6, 150e-6)
        return cls(
            grid=grid,
            fat_top=6 * mm,
            fat_thickness=8 * mm,
            axial_targets=tuple((0.0, z * mm) for z in (20, 24, 28, 32, 36, 40)),
            lateral_targets=tuple((x * mm, 30 * mm) for x in (-6, -3, 3, 6)),
            cysts=(CystSpec("CY1", (-5.5 * mm, 45 * mm), (3 * mm, 3 * mm)),),
            cyst_regions=(Region("CY1", (-5.5 * mm, 45 * mm), 4 * mm),),
            background_regions=(Region("CY1", (5.5 * mm, 45 * mm), 4 * mm),),
            scatterer_fraction=scatterer_fraction,
        )

    @classmethod
    def for_preset(
        cls, preset: str, grid: Optional[Grid2D] = None, scatterer_fraction: Optional[float] = None
    ) -> "ScenarioLayout":
        """按预设名创建布局"""
        factory = {"paper": cls.paper, "desk": cls.desk}.get(preset)
        if factory is None:
            raise GeometryError(f"未知布局预设: {preset}")
        if scatterer_fraction is None:
            return factory(grid=grid)
        return factory(grid=grid, scatterer_fraction=scatterer_fraction)

    @property
    def point_targets(self) -> List[Tuple[float, float]]:
        return list(self.axial_targets) + list(self.lateral_targets)

    def fat_layer(self, scenario_id: str) -> Optional[FatLayerSpec]:
        inclination = FAT_INCLINATIONS[scenario_id]
        if inclination is None:
            return None
        return FatLayerSpec(
            mean_sos=FAT_SOS, top=self.fat_top, thickness=self.fat_thickness,
            inclination=inclination,
        )


@dataclass(frozen=True, eq=False)
class Phantom:
    """仿体

    Attributes:
        scenario: 场景编号
        seed: 随机种子
        sos: 真值声速图（未平滑）
        scatterers: 形状 (K, 3) 的散射子 (x, z, 反射率)
        registry: 真值目标登记表
    """

    scenario: str
    seed: int
    sos: SosMap
    scatterers: np.ndarray
    registry: TargetRegistry

    def __post_init__(self):
        scatterers = np.asarray(self.scatterers, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(scatterers)):
            raise GeometryError("散射子包含非有限值")
        if scatterers.size and not np.all(self.sos.grid.contains(scatterers[:, 0], scatterers[:, 1])):
            raise GeometryError("散射子位于声速图网格外")
        object.__setattr__(self, "scatterers", scatterers)


def build_scenario(
    scenario_id: str, seed: int = 0, layout: Optional[ScenarioLayout] = None
) -> Phantom:
    """构造场景仿体

    背景声速 1540·(1 + 0.01·n)，脂肪层 1400·(1 + 0.01·n)，n 为标准正态扰动；
    囊肿内恒定 1540 m/s 且无散射子；点目标所在最近节点声速为 3000 m/s，
    并在真实位置放置反射率为 1 的离散散射子；其余节点各放置一个反射率等于
    局部相对扰动的散射子（按 scatterer_fraction 随机保留）。

    Args:
        scenario_id: 场景编号 M1–M4
        seed: 随机种子
        layout: 几何布局，默认完整规模

    Returns:
        Phantom 对象

    Raises:
        ScenarioError: 未知场景
    """
    if scenario_id not in FAT_INCLINATIONS:
        raise ScenarioError(scenario_id, SCENARIO_IDS)
    layout = layout or ScenarioLayout.paper()
    grid = layout.grid

    rng = np.random.default_rng(seed)
    perturbation = PERTURBATION_STD * rng.standard_normal(grid.shape)
    keep = rng.random(grid.shape) < layout.scatterer_fraction

    X, Z = grid.mesh()
    base = np.full(grid.shape, C_REF)
    fat = layout.fat_layer(scenario_id)
    if fat is not None:
        base[fat.contains(X, Z)] = fat.mean_sos
    c = base * (1.0 + perturbation)
    reflectivity = perturbation.copy()

    for cyst in layout.cysts:
        inside = cyst.contains(X, Z)
        c[inside] = C_REF
        reflectivity[inside] = 0.0

    targets = layout.point_targets
    for xt, zt in targets:
        if not grid.contains(xt, zt):
            raise GeometryError(f"点目标 ({xt:.6g}, {zt:.6g}) m 位于网格外")
        i = int(round((xt - grid.origin_x) / grid.dx))
        k = int(round((zt - grid.origin_z) / grid.dz))
        c[i, k] = TARGET_SOS
        reflectivity[i, k] = 0.0

    speckle = keep & (reflectivity != 0.0)
    scatterers = np.column_stack([X[speckle], Z[speckle], reflectivity[speckle]])
    discrete = np.array([[xt, zt, TARGET_REFLECTIVITY] for xt, zt in targets]).reshape(-1, 3)
    scatterers = np.vstack([scatterers, discrete])

    registry = TargetRegistry(
        point_targets=list(targets),
        cyst_regions=list(layout.cyst_regions),
        background_regions=list(layout.background_regions),
        scenario=scenario_id,
        seed=seed,
    )
    logger.debug(f"场景 {scenario_id}: {scatterers.shape[0]} 个散射子, 种子 {seed}")
    return Phantom(
        scenario=scenario_id, seed=seed, sos=SosMap(grid=grid, c=c),
        scatterers=scatterers, registry=registry,
    )


def region_mask(region: Region, pixel_grid: Grid2D) -> np.ndarray:
    """圆形区域掩膜（像素中心到圆心距离 ≤ 半径）

    Raises:
        GeometryError: 区域超出像素网格
    """
    r = region.diameter / 2.0
    cx, cz = region.center
    tol = 1e-9 * max(pixel_grid.dx, pixel_grid.dz)
    if (cx - r < pixel_grid.origin_x - tol or cx + r > pixel_grid.x_max + tol
            or cz - r < pixel_grid.origin_z - tol or cz + r > pixel_grid.z_max + tol):
        raise GeometryError(
            f"评估区域 {region.label} (圆心 ({cx:.6g}, {cz:.6g}) m, 直径 {region.diameter:.6g} m) "
            f"超出像素网格 {pixel_grid.extent_text()}"
        )
    X, Z = pixel_grid.mesh()
    return (X - cx) ** 2 + (Z - cz) ** 2 <= r * r * (1.0 + 1e-9)


def rasterize_regions(registry: TargetRegistry, pixel_grid: Grid2D) -> Dict[str, np.ndarray]:
    """将评估区域栅格化为布尔掩膜

    Returns:
        {"CY1": 囊肿掩膜, "CY1_BG": 背景掩膜, ...}
    """
    masks = {}
    for region in registry.cyst_regions:
        masks[region.label] = region_mask(region, pixel_grid)
    for region in registry.background_regions:
        masks[f"{region.label}_BG"] = region_mask(region, pixel_grid)
    return masks


def save_phantom(phantom: Phantom, out_dir: Path) -> Dict[str, Path]:
    """写出仿体包: 声速栅格、散射子列表和登记表

    Returns:
        各文件路径
    """
    from .formats import write_raster, write_scatterers

    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "sos": out_dir / SOS_FILE,
        "scatterers": out_dir / SCATTERER_FILE,
        "registry": out_dir / REGISTRY_FILE,
    }
    write_raster(paths["sos"], phantom.sos.grid, phantom.sos.c)
    write_scatterers(paths["scatterers"], phantom.scatterers)
    with open(paths["registry"], "w", encoding="utf-8") as f:
        yaml.safe_dump(phantom.registry.to_dict(), f, default_flow_style=False, allow_unicode=True,
                       sort_keys=True)
    return paths


def load_registry(bundle_dir: Path) -> TargetRegistry:
    """读取仿体包中的真值目标登记表

    Raises:
        FormatError: 文件缺失或格式错误
    """
    registry_path = Path(bundle_dir) / REGISTRY_FILE
    if not registry_path.exists():
        raise FormatError(str(registry_path), "登记表文件不存在")
    try:
        with open(registry_path, "r", encoding="utf-8") as f:
            return TargetRegistry.from_dict(yaml.safe_load(f) or {})
    except (yaml.YAMLError, KeyError, TypeError, ValueError, IndexError) as e:
        raise FormatError(str(registry_path), f"登记表解析失败: {e}") from e


def load_phantom(bundle_dir: Path) -> Phantom:
    """读取仿体包

    Raises:
        FormatError: 文件缺失或格式错误
    """
    from .formats import read_raster, read_scatterers

    bundle_dir = Path(bundle_dir)
    registry = load_registry(bundle_dir)
    grid, c = read_raster(bundle_dir / SOS_FILE)
    scatterers = read_scatterers(bundle_dir / SCATTERER_FILE).astype(np.float64)
    # float32 舍入可能把边缘散射子推出网格
    scatterers[:, 0] = np.clip(scatterers[:, 0], grid.origin_x, grid.x_max)
    scatterers[:, 1] = np.clip(scatterers[:, 1], grid.origin_z, grid.z_max)
    return Phantom(
        scenario=registry.scenario, seed=registry.seed, sos=SosMap(grid=grid, c=c),
        scatterers=scatterers, registry=registry,
    )
