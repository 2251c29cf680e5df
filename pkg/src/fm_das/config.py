"""配置管理模块

该模块定义流水线配置数据模型和配置管理器，用于加载、合并、验证和保存配置。
所有长度单位为米，频率单位为赫兹，声速单位为 m/s。
"""

import hashlib
import json
from dataclasses import dataclass, field, asdict, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import yaml

from .beamform import ApodizationSpec
from .delays import make_transmit_events, TransmitEvent
from .eikonal import FmConfig
from .errors import ConfigError
from .medium import C_REF, SOS_MAX, SOS_MIN, Grid2D, TransducerArray, make_array
from .phantom import SCENARIO_IDS, CystSpec, Region, ScenarioLayout
from .rfsim import TRUTH_MODELS, PulseSpec, SimConfig

SCHEMA_VERSION = 1
PRESETS = ("desk", "paper")
METHODS = ("das", "fm-das")

_MM = 1e-3


@dataclass
class GridSpec:
    """声速图网格

    Attributes:
        x_min: 横向下界
        x_max: 横向上界
        z_min: 轴向下界（阵列位于 z = 0，需满足 z_min ≤ 0）
        z_max: 轴向上界
        dx: 横向步长
        dz: 轴向步长
    """

    x_min: float = -9.6 * _MM
    x_max: float = 9.6 * _MM
    z_min: float = 0.0
    z_max: float = 60 * _MM
    dx: float = 150e-6
    dz: float = 150e-6

    def to_grid(self) -> Grid2D:
        return Grid2D.from_extent(self.x_min, self.x_max, self.z_min, self.z_max, self.dx, self.dz)


@dataclass
class PixelGridSpec(GridSpec):
    """像素网格（波束形成输出）"""

    x_min: float = -9.0 * _MM
    x_max: float = 9.0 * _MM
    z_min: float = 4.0 * _MM
    z_max: float = 50.0 * _MM
    dx: float = 0.1 * _MM
    dz: float = 0.05 * _MM


@dataclass
class ArraySpec:
    """线阵参数

    Attributes:
        n_elements: 阵元数
        pitch: 阵元间距
        f0: 中心频率
        c_ref: 常规 DAS 使用的参考声速
    """

    n_elements: int = 64
    pitch: float = 0.3 * _MM
    f0: float = 3e6
    c_ref: float = C_REF

    def to_array(self) -> TransducerArray:
        return make_array(self.n_elements, self.pitch, self.f0, self.c_ref)


@dataclass
class TransmitSpec:
    """聚焦发射方案

    Attributes:
        n_transmits: 发射次数 M
        focal_depth: 焦深
        tx_f_number: 发射 F 数（决定子孔径宽度）
    """

    n_transmits: int = 32
    focal_depth: float = 30 * _MM
    tx_f_number: float = 2.0

    def to_events(self, array: TransducerArray) -> List[TransmitEvent]:
        return make_transmit_events(array, self.n_transmits, self.focal_depth, self.tx_f_number)


@dataclass
class PulseConfig:
    """激励脉冲（中心频率取阵列 f0）

    Attributes:
        bandwidth: 相对带宽
    """

    bandwidth: float = 0.6


@dataclass
class SimSpec:
    """射频仿真参数

    Attributes:
        fs: 采样率，None 表示 4·f0·(1 + bw)
        truth_delay_model: 真值延迟模型
        noise_std: 加性噪声标准差
        scatterer_fraction: 保留的散斑散射子比例
    """

    fs: Optional[float] = None
    truth_delay_model: str = "fm_true_sos"
    noise_std: float = 0.0
    scatterer_fraction: float = 0.5


@dataclass
class ApodizationConfig:
    """变迹与显示参数

    Attributes:
        f_number: 接收 F 数
        window: 窗函数
        tx_gate: 是否启用沙漏形发射门控
        dynamic_range_db: 显示动态范围
    """

    f_number: float = 2.0
    window: str = "hanning"
    tx_gate: bool = False
    dynamic_range_db: float = 60.0

    def to_spec(self) -> ApodizationSpec:
        return ApodizationSpec(f_number=self.f_number, window=self.window, tx_gate=self.tx_gate)


@dataclass
class PreprocessConfig:
    """FM-DAS 声速图预处理

    Attributes:
        median_radius: 中值滤波半径（节点）
        smooth_sigma: 高斯平滑标准差（节点）
    """

    median_radius: int = 1
    smooth_sigma: float = 0.5


@dataclass
class EikonalConfig:
    """快速行进求解参数

    Attributes:
        source_disk_radius: 源点解析圆盘半径，None 表示默认值
        cache_size: 延迟图缓存上限，None 表示容纳全部接收图
    """

    source_disk_radius: Optional[float] = None
    cache_size: Optional[int] = None

    def to_fm_config(self) -> FmConfig:
        return FmConfig(source_disk_radius=self.source_disk_radius)


@dataclass
class MetricsConfig:
    """指标参数

    Attributes:
        gcnr_bins: gCNR 直方图箱数
        search_radius: GDS 搜索半宽，None 表示 2.5 个波长
    """

    gcnr_bins: int = 100
    search_radius: Optional[float] = None


@dataclass
class LayoutSpec:
    """场景布局覆盖项，未给出的字段沿用预设布局

    Attributes:
        fat_top: 脂肪层顶深度
        fat_thickness: 脂肪层法向厚度
        axial_targets: 轴向点目标 [[x, z], ...]
        lateral_targets: 横向点目标 [[x, z], ...]
        cysts: 囊肿 [{label, center, semi_axes, rotation}, ...]
        cyst_regions: 囊肿评估圆 [{label, center, diameter}, ...]
        background_regions: 背景评估圆 [{label, center, diameter}, ...]
    """

    fat_top: Optional[float] = None
    fat_thickness: Optional[float] = None
    axial_targets: Optional[List[List[float]]] = None
    lateral_targets: Optional[List[List[float]]] = None
    cysts: Optional[List[Dict[str, Any]]] = None
    cyst_regions: Optional[List[Dict[str, Any]]] = None
    background_regions: Optional[List[Dict[str, Any]]] = None

    def apply(self, layout: ScenarioLayout) -> ScenarioLayout:
        """将覆盖项应用到预设布局"""
        changes: Dict[str, Any] = {}
        if self.fat_top is not None:
            changes["fat_top"] = float(self.fat_top)
        if self.fat_thickness is not None:
            changes["fat_thickness"] = float(self.fat_thickness)
        for name in ("axial_targets", "lateral_targets"):
            points = getattr(self, name)
            if points is not None:
                changes[name] = tuple((float(x), float(z)) for x, z in points)
        if self.cysts is not None:
            changes["cysts"] = tuple(
                CystSpec(
                    label=str(c["label"]),
                    center=(float(c["center"][0]), float(c["center"][1])),
                    semi_axes=(float(c["semi_axes"][0]), float(c["semi_axes"][1])),
                    rotation=float(c.get("rotation", 0.0)),
                )
                for c in self.cysts
            )
        for name in ("cyst_regions", "background_regions"):
            regions = getattr(self, name)
            if regions is not None:
                changes[name] = tuple(
                    Region(
                        label=str(r["label"]),
                        center=(float(r["center"][0]), float(r["center"][1])),
                        diameter=float(r["diameter"]),
                    )
                    for r in regions
                )
        return replace(layout, **changes) if changes else layout


_SECTIONS = {
    "grid": GridSpec,
    "pixel_grid": PixelGridSpec,
    "array": ArraySpec,
    "transmit": TransmitSpec,
    "pulse": PulseConfig,
    "sim": SimSpec,
    "apodization": ApodizationConfig,
    "preprocess": PreprocessConfig,
    "eikonal": EikonalConfig,
    "metrics": MetricsConfig,
    "layout": LayoutSpec,
}


@dataclass
class PipelineConfig:
    """完整流水线配置

    Attributes:
        schema_version: 配置格式版本
        preset: 场景布局预设（desk 或 paper）
        scenarios: 参与对比的场景
        seed: 随机种子
        methods: 参与对比的波束形成方法
        output_dir: 输出目录
        threads: 工作线程数（1 为确定性串行路径）
        deterministic: 是否要求逐位可复现的输出
    """

    schema_version: int = SCHEMA_VERSION
    preset: str = "desk"
    scenarios: List[str] = field(default_factory=lambda: list(SCENARIO_IDS))
    seed: int = 0
    methods: List[str] = field(default_factory=lambda: list(METHODS))
    output_dir: str = "fmdas-out"
    threads: int = 1
    deterministic: bool = True
    grid: GridSpec = field(default_factory=GridSpec)
    pixel_grid: PixelGridSpec = field(default_factory=PixelGridSpec)
    array: ArraySpec = field(default_factory=ArraySpec)
    transmit: TransmitSpec = field(default_factory=TransmitSpec)
    pulse: PulseConfig = field(default_factory=PulseConfig)
    sim: SimSpec = field(default_factory=SimSpec)
    apodization: ApodizationConfig = field(default_factory=ApodizationConfig)
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    eikonal: EikonalConfig = field(default_factory=EikonalConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    layout: LayoutSpec = field(default_factory=LayoutSpec)

    @classmethod
    def desk(cls) -> "PipelineConfig":
        """桌面规模预设: 19.2 × 60 mm、64 阵元、32 次发射聚焦于 30 mm"""
        return cls()

    @classmethod
    def paper(cls) -> "PipelineConfig":
        """完整规模预设: 38.5 × 120 mm、75 µm、128 阵元、128 次发射聚焦于 60 mm"""
        return cls(
            preset="paper",
            grid=GridSpec(
                x_min=-19.25 * _MM, x_max=19.25 * _MM, z_min=0.0, z_max=120 * _MM,
                dx=75e-6, dz=75e-6,
            ),
            pixel_grid=PixelGridSpec(
                x_min=-19.0 * _MM, x_max=19.0 * _MM, z_min=2.0 * _MM, z_max=118.0 * _MM,
                dx=0.2 * _MM, dz=0.05 * _MM,
            ),
            array=ArraySpec(n_elements=128),
            transmit=TransmitSpec(n_transmits=128, focal_depth=60 * _MM),
            sim=SimSpec(scatterer_fraction=1.0),
            preprocess=PreprocessConfig(median_radius=2, smooth_sigma=1.0),
        )

    def to_dict(self) -> Dict[str, Any]:
        """将配置转换为字典

        Returns:
            配置的字典表示
        """
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PipelineConfig":
        """从字典创建配置对象

        Args:
            data: 配置字典

        Returns:
            PipelineConfig 对象

        Raises:
            ConfigError: 存在未知字段或字段结构错误
        """
        if not isinstance(data, dict):
            raise ConfigError("配置顶层必须是映射")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"未知配置项: {', '.join(unknown)}")

        kwargs = {}
        for key, value in data.items():
            section_cls = _SECTIONS.get(key)
            if section_cls is None:
                kwargs[key] = list(value) if isinstance(value, (list, tuple)) else value
                continue
            if isinstance(value, section_cls):
                kwargs[key] = value
                continue
            if not isinstance(value, dict):
                raise ConfigError(f"配置节 {key} 必须是映射")
            section_fields = {f.name for f in fields(section_cls)}
            bad = sorted(set(value) - section_fields)
            if bad:
                raise ConfigError(f"配置节 {key} 中存在未知字段: {', '.join(bad)}")
            kwargs[key] = section_cls(**value)
        return cls(**kwargs)

    def build_grid(self) -> Grid2D:
        return self.grid.to_grid()

    def build_pixel_grid(self) -> Grid2D:
        return self.pixel_grid.to_grid()

    def build_array(self) -> TransducerArray:
        return self.array.to_array()

    def build_pulse(self) -> PulseSpec:
        return PulseSpec(f0=self.array.f0, bandwidth=self.pulse.bandwidth)

    def build_sim_config(self) -> SimConfig:
        return SimConfig(
            fs=self.sim.fs,
            truth_delay_model=self.sim.truth_delay_model,
            noise_std=self.sim.noise_std,
            seed=self.seed,
        )

    def build_layout(self) -> ScenarioLayout:
        layout = ScenarioLayout.for_preset(
            self.preset, grid=self.build_grid(), scatterer_fraction=self.sim.scatterer_fraction
        )
        return self.layout.apply(layout)

    @property
    def wavelength(self) -> float:
        return self.array.c_ref / self.array.f0


def _deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    """递归合并字典，override 中的值优先"""
    result = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(result.get(key), dict):
            result[key] = _deep_merge(result[key], value)
        else:
            result[key] = value
    return result


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _is_int(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


class ConfigManager:
    """配置管理器

    负责加载、合并、验证和保存配置。
    """

    def load_from_defaults(self, preset: str = "desk") -> PipelineConfig:
        """加载预设配置

        Args:
            preset: 预设名称

        Returns:
            预设配置对象

        Raises:
            ConfigError: 未知预设
        """
        if preset == "desk":
            return PipelineConfig.desk()
        if preset == "paper":
            return PipelineConfig.paper()
        raise ConfigError(f"未知预设: {preset}，可选: {', '.join(PRESETS)}")

    def load_from_file(self, path: Path) -> PipelineConfig:
        """从 YAML 文件加载配置，合并到文件中指定的预设之上

        Args:
            path: 配置文件路径

        Returns:
            加载的配置对象

        Raises:
            ConfigError: 文件不存在、YAML 格式错误或字段无效
        """
        path = Path(path)
        if not path.exists():
            raise ConfigError("配置文件不存在", config_file=str(path))

        try:
            with open(path, "r", encoding="utf-8") as f:
                data = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ConfigError(f"YAML 解析失败: {e}", config_file=str(path)) from e

        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError("配置顶层必须是映射", config_file=str(path))

        try:
            base = self.load_from_defaults(data.get("preset", "desk"))
            return PipelineConfig.from_dict(_deep_merge(base.to_dict(), data))
        except ConfigError as e:
            raise ConfigError(e.message.removeprefix("配置错误: "), config_file=str(path)) from e
        except TypeError as e:
            raise ConfigError(f"配置字段类型错误: {e}", config_file=str(path)) from e

    def merge_configs(self, base: PipelineConfig, *overrides: Dict[str, Any]) -> PipelineConfig:
        """将若干部分配置字典依次合并到基础配置之上，后面的覆盖前面的

        Args:
            base: 基础配置
            *overrides: 部分配置字典

        Returns:
            合并后的配置对象
        """
        data = base.to_dict()
        for override in overrides:
            data = _deep_merge(data, override)
        return PipelineConfig.from_dict(data)

    def apply_overrides(
        self, config: PipelineConfig, overrides: Dict[str, Any]
    ) -> PipelineConfig:
        """应用命令行覆盖项，值为 None 的项被忽略

        Args:
            config: 基础配置
            overrides: 以点号分隔路径为键的覆盖项，例如 {"seed": 7, "sim.noise_std": 0.1}

        Returns:
            新的配置对象
        """
        nested: Dict[str, Any] = {}
        for key, value in overrides.items():
            if value is None:
                continue
            node = nested
            parts = key.split(".")
            for part in parts[:-1]:
                node = node.setdefault(part, {})
            node[parts[-1]] = value
        return self.merge_configs(config, nested)

    def save_to_file(self, config: PipelineConfig, path: Path) -> None:
        """保存配置到 YAML 文件

        Args:
            config: 要保存的配置对象
            path: 目标文件路径
        """
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            yaml.safe_dump(config.to_dict(), f, default_flow_style=False, allow_unicode=True,
                           sort_keys=False)

    def config_hash(self, config: PipelineConfig) -> str:
        """配置哈希（规范化 JSON 的 sha256）"""
        canonical = json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def validate(self, config: PipelineConfig) -> List[str]:
        """验证配置，返回错误列表

        全部检查在任何计算开始前完成。

        Args:
            config: 要验证的配置对象

        Returns:
            错误信息列表，空列表表示验证通过
        """
        errors: List[str] = []
        errors.extend(self._type_errors(config))
        if errors:
            return errors

        if config.schema_version != SCHEMA_VERSION:
            errors.append(f"不支持的配置版本: {config.schema_version}（当前 {SCHEMA_VERSION}）")
        if config.preset not in PRESETS:
            errors.append(f"无效的预设: {config.preset}")
        if not config.scenarios:
            errors.append("场景列表不能为空")
        for scenario in config.scenarios:
            if scenario not in SCENARIO_IDS:
                errors.append(f"无效的场景: {scenario}，有效场景: {', '.join(SCENARIO_IDS)}")
        if len(set(config.scenarios)) != len(config.scenarios):
            errors.append("场景列表存在重复项")
        if not config.methods:
            errors.append("方法列表不能为空")
        for method in config.methods:
            if method not in METHODS:
                errors.append(f"无效的方法: {method}，可选: {', '.join(METHODS)}")
        if len(set(config.methods)) != len(config.methods):
            errors.append("方法列表存在重复项")
        if not 0 <= config.seed < 2 ** 64:
            errors.append(f"随机种子必须位于 [0, 2^64): {config.seed}")
        if not config.output_dir:
            errors.append("输出目录不能为空")
        if config.threads < 1:
            errors.append(f"线程数必须不少于 1: {config.threads}")

        grid_ok = self._check_grid(errors, "grid", config.grid)
        pixel_ok = self._check_grid(errors, "pixel_grid", config.pixel_grid)
        if grid_ok and not config.grid.z_min <= 0.0 <= config.grid.z_max:
            errors.append("声速图网格必须包含阵列所在的 z = 0")
        if pixel_ok and config.pixel_grid.to_grid().nz < 4:
            errors.append("像素网格轴向至少需要 4 个像素")
        if grid_ok and pixel_ok and "fm-das" in config.methods:
            if not config.grid.to_grid().contains_grid(config.pixel_grid.to_grid()):
                errors.append("像素网格必须位于声速图网格内（fm-das 需要）")

        arr = config.array
        array_ok = True
        if arr.n_elements < 2:
            errors.append(f"阵元数必须不少于 2: {arr.n_elements}")
            array_ok = False
        if not arr.pitch > 0:
            errors.append(f"阵元间距必须为正: {arr.pitch}")
            array_ok = False
        if not arr.f0 > 0:
            errors.append(f"中心频率必须为正: {arr.f0}")
            array_ok = False
        if not SOS_MIN <= arr.c_ref <= SOS_MAX:
            errors.append(f"参考声速必须位于 [{SOS_MIN:g}, {SOS_MAX:g}] m/s: {arr.c_ref}")
            array_ok = False
        if array_ok and grid_ok:
            half = 0.5 * (arr.n_elements - 1) * arr.pitch
            if -half < config.grid.x_min or half > config.grid.x_max:
                errors.append(f"阵列横向范围 ±{half:.6g} m 超出声速图网格")

        tx = config.transmit
        if tx.n_transmits < 1:
            errors.append(f"发射次数必须不少于 1: {tx.n_transmits}")
        if not tx.focal_depth > 0:
            errors.append(f"焦深必须为正: {tx.focal_depth}")
        elif grid_ok and tx.focal_depth > config.grid.z_max:
            errors.append(f"焦深 {tx.focal_depth:.6g} m 超出声速图网格")
        if not tx.tx_f_number > 0:
            errors.append(f"发射 F 数必须为正: {tx.tx_f_number}")

        bw = config.pulse.bandwidth
        if not 0.0 < bw < 1.0:
            errors.append(f"相对带宽必须位于 (0, 1): {bw}")

        sim = config.sim
        if sim.fs is not None and arr.f0 > 0 and not sim.fs > 2.0 * arr.f0 * (1.0 + bw):
            errors.append(f"采样率 {sim.fs:.4g} Hz 必须高于 2·f0·(1+bw)")
        if sim.truth_delay_model not in TRUTH_MODELS:
            errors.append(
                f"无效的真值延迟模型: {sim.truth_delay_model}，可选: {', '.join(TRUTH_MODELS)}"
            )
        if sim.noise_std < 0:
            errors.append(f"噪声标准差必须非负: {sim.noise_std}")
        if not 0.0 < sim.scatterer_fraction <= 1.0:
            errors.append(f"散射子保留比例必须位于 (0, 1]: {sim.scatterer_fraction}")

        apod = config.apodization
        if not apod.f_number > 0:
            errors.append(f"接收 F 数必须为正: {apod.f_number}")
        if apod.window != "hanning":
            errors.append(f"不支持的窗函数: {apod.window}")
        if not apod.dynamic_range_db > 0:
            errors.append(f"动态范围必须为正: {apod.dynamic_range_db}")

        pre = config.preprocess
        if pre.median_radius < 0:
            errors.append(f"中值滤波半径必须非负: {pre.median_radius}")
        if pre.smooth_sigma < 0:
            errors.append(f"平滑标准差必须非负: {pre.smooth_sigma}")

        eik = config.eikonal
        if eik.source_disk_radius is not None:
            if not eik.source_disk_radius > 0:
                errors.append(f"源点圆盘半径必须为正: {eik.source_disk_radius}")
            elif grid_ok and eik.source_disk_radius < max(config.grid.dx, config.grid.dz):
                errors.append("源点圆盘半径不能小于声速图网格步长")
        if eik.cache_size is not None and eik.cache_size < 1:
            errors.append(f"延迟图缓存上限必须不少于 1: {eik.cache_size}")

        met = config.metrics
        if met.gcnr_bins < 2:
            errors.append(f"gCNR 直方图箱数必须不少于 2: {met.gcnr_bins}")
        if met.search_radius is not None and array_ok and met.search_radius < config.wavelength:
            errors.append(
                f"GDS 搜索半宽 {met.search_radius:.4g} m 不能小于波长 {config.wavelength:.4g} m"
            )

        if grid_ok and pixel_ok and config.preset in PRESETS:
            errors.extend(self._layout_errors(config))
        return errors

    def validate_or_raise(self, config: PipelineConfig, config_file: Optional[str] = None) -> None:
        """验证配置，存在错误时抛出 ConfigError"""
        errors = self.validate(config)
        if errors:
            raise ConfigError("; ".join(errors), config_file=config_file)

    def _type_errors(self, config: PipelineConfig) -> List[str]:
        errors = []
        if not _is_int(config.schema_version):
            errors.append("schema_version 必须为整数")
        if not _is_int(config.seed):
            errors.append("seed 必须为整数")
        if not _is_int(config.threads):
            errors.append("threads 必须为整数")
        if not isinstance(config.deterministic, bool):
            errors.append("deterministic 必须为布尔值")
        for name in ("preset", "output_dir"):
            if not isinstance(getattr(config, name), str):
                errors.append(f"{name} 必须为字符串")
        for name in ("scenarios", "methods"):
            value = getattr(config, name)
            if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
                errors.append(f"{name} 必须为字符串列表")

        for section_name, section_cls in _SECTIONS.items():
            section = getattr(config, section_name)
            if not isinstance(section, section_cls):
                errors.append(f"配置节 {section_name} 结构无效")
                continue
            if section_cls is LayoutSpec:
                # 结构由 _layout_errors 在构造布局时检查
                continue
            defaults = section_cls()
            for f in fields(section_cls):
                value = getattr(section, f.name)
                default = getattr(defaults, f.name)
                where = f"{section_name}.{f.name}"
                if value is None:
                    if default is not None:
                        errors.append(f"{where} 不能为空")
                    continue
                if f.type is bool:
                    if not isinstance(value, bool):
                        errors.append(f"{where} 必须为布尔值")
                elif isinstance(default, str):
                    if not isinstance(value, str):
                        errors.append(f"{where} 必须为字符串")
                elif f.type is int or f.type == Optional[int]:
                    if not _is_int(value):
                        errors.append(f"{where} 必须为整数")
                elif not _is_number(value):
                    errors.append(f"{where} 必须为数值")
        return errors

    def _check_grid(self, errors: List[str], name: str, spec: GridSpec) -> bool:
        ok = True
        if not (spec.dx > 0 and spec.dz > 0):
            errors.append(f"{name} 步长必须为正: dx={spec.dx}, dz={spec.dz}")
            ok = False
        if not spec.x_max > spec.x_min:
            errors.append(f"{name} 横向范围无效: [{spec.x_min}, {spec.x_max}]")
            ok = False
        if not spec.z_max > spec.z_min:
            errors.append(f"{name} 轴向范围无效: [{spec.z_min}, {spec.z_max}]")
            ok = False
        return ok

    def _layout_errors(self, config: PipelineConfig) -> List[str]:
        errors = []
        try:
            layout = config.build_layout()
            layout.fat_layer("M2")
        except Exception as e:  # 布局本身无法构造时只报告原因
            return [f"场景布局无效: {e}"]
        pixel_grid = config.build_pixel_grid()
        for xt, zt in layout.point_targets:
            if not pixel_grid.contains(xt, zt):
                errors.append(f"点目标 ({xt:.6g}, {zt:.6g}) m 位于像素网格外")
            if not layout.grid.contains(xt, zt):
                errors.append(f"点目标 ({xt:.6g}, {zt:.6g}) m 位于声速图网格外")
        for region in list(layout.cyst_regions) + list(layout.background_regions):
            if not _circle_inside(region.center, region.diameter / 2.0, pixel_grid):
                errors.append(f"评估区域 {region.label} 超出像素网格")
        return errors


def _circle_inside(center: Tuple[float, float], radius: float, grid: Grid2D) -> bool:
    cx, cz = center
    tol = 1e-9 * max(grid.dx, grid.dz)
    return (cx - radius >= grid.origin_x - tol and cx + radius <= grid.x_max + tol
            and cz - radius >= grid.origin_z - tol and cz + radius <= grid.z_max + tol)
