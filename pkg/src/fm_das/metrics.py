"""图像质量指标模块

- 几何失真分数（GDS）: 每个点目标的二值分数，峰值位置及峰值深度处横向 −6 dB
  两端点均位于真实位置一个波长以内时记 1，否则记 0；报告其均值。
- 广义对比噪声比（gCNR）: 1 减去囊肿区与背景区包络幅值概率密度的重叠面积。
- 对比报告: 按（方法，场景）汇总为 CSV 表格。
"""

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import yaml

from .beamform import BeamformedImage
from .errors import ConfigError, GeometryError, MetricError

logger = logging.getLogger(__name__)

# 峰值检测噪声底（dB，相对图像最大值）
NOISE_FLOOR_DB = -60.0

# −6 dB 阈值
HALF_AMPLITUDE_DB = -6.0

# gCNR 最少像素数
MIN_REGION_PIXELS = 100

DEFAULT_GCNR_BINS = 100


@dataclass
class TargetScore:
    """单个点目标的 GDS 结果

    Attributes:
        target: 真实位置 (x, z)
        score: 0 或 1
        found: 窗口内是否存在高于噪声底的峰值
        peak: 峰值位置 (x, z)
        left_x: 左侧 −6 dB 端点横坐标
        right_x: 右侧 −6 dB 端点横坐标
        max_distance: 候选点到真实位置的最大距离（米）
        truncated: −6 dB 端点是否因图像边界被截断
    """

    target: Tuple[float, float]
    score: int
    found: bool
    peak: Optional[Tuple[float, float]] = None
    left_x: Optional[float] = None
    right_x: Optional[float] = None
    max_distance: Optional[float] = None
    truncated: bool = False

    @property
    def width(self) -> Optional[float]:
        """横向 −6 dB 宽度（米）"""
        if self.left_x is None or self.right_x is None:
            return None
        return self.right_x - self.left_x

    def to_dict(self) -> Dict:
        return {
            "target": [float(v) for v in self.target],
            "score": int(self.score),
            "found": bool(self.found),
            "peak": None if self.peak is None else [float(v) for v in self.peak],
            "left_x": None if self.left_x is None else float(self.left_x),
            "right_x": None if self.right_x is None else float(self.right_x),
            "width": None if self.width is None else float(self.width),
            "max_distance": None if self.max_distance is None else float(self.max_distance),
            "truncated": bool(self.truncated),
        }


@dataclass
class GdsReport:
    """GDS 报告

    Attributes:
        targets: 逐目标结果
        wavelength: 判定阈值（米）
    """

    targets: List[TargetScore] = field(default_factory=list)
    wavelength: float = 0.0

    @property
    def scores(self) -> List[int]:
        return [t.score for t in self.targets]

    @property
    def mean(self) -> float:
        if not self.targets:
            return 0.0
        return float(np.mean(self.scores))


@dataclass
class GcnrReport:
    """gCNR 报告

    Attributes:
        gcnr: 取值 [0, 1]
        n_bins: 直方图箱数
        n_cyst: 囊肿区像素数
        n_background: 背景区像素数
    """

    gcnr: float
    n_bins: int
    n_cyst: int
    n_background: int


@dataclass
class MethodResult:
    """单个（方法，场景）组合的指标

    Attributes:
        gds: GDS 报告
        gcnr: 囊肿标签到 gCNR 报告的映射
    """

    gds: GdsReport
    gcnr: Dict[str, GcnrReport] = field(default_factory=dict)


def _crossing(profile: np.ndarray, x: np.ndarray, peak: int, threshold: float, step: int):
    """从峰值向一侧搜索首个低于阈值的位置并线性插值

    Returns:
        (交点横坐标, 是否触及边界)
    """
    n = profile.size
    idx = peak
    while 0 <= idx + step < n:
        nxt = idx + step
        if profile[nxt] < threshold:
            frac = (profile[idx] - threshold) / (profile[idx] - profile[nxt])
            return float(x[idx] + frac * (x[nxt] - x[idx])), False
        idx = nxt
    return float(x[idx]), True


def gds(
    image: BeamformedImage,
    targets: Sequence[Tuple[float, float]],
    wavelength: float,
    search_radius: Optional[float] = None,
) -> GdsReport:
    """计算几何失真分数

    在以真实位置为中心、边长 2·search_radius 的窗口内寻找包络峰值，取峰值深度处的
    横向剖面，以局部峰值的 −6 dB 为阈值线性插值两侧端点。

    Args:
        image: 波束形成图像
        targets: 点目标真实位置
        wavelength: 波长（米）
        search_radius: 搜索半宽，默认 2.5λ（即 5λ × 5λ 窗口）

    Returns:
        GdsReport 对象

    Raises:
        ConfigError: search_radius 小于波长
        GeometryError: 目标位于图像外
    """
    if search_radius is None:
        search_radius = 2.5 * wavelength
    if search_radius < wavelength:
        raise ConfigError(f"搜索半径 {search_radius:.3g} m 小于波长 {wavelength:.3g} m")

    grid = image.pixel_grid
    xs, zs = grid.x, grid.z
    env = image.envelope
    floor_db = max(NOISE_FLOOR_DB, -image.dynamic_range_db)
    report = GdsReport(wavelength=wavelength)

    for xt, zt in targets:
        if not grid.contains(xt, zt):
            raise GeometryError(f"点目标 ({xt:.6g}, {zt:.6g}) m 位于图像 {grid.extent_text()} 外")
        ix = np.flatnonzero(np.abs(xs - xt) <= search_radius)
        iz = np.flatnonzero(np.abs(zs - zt) <= search_radius)
        if ix.size == 0 or iz.size == 0:
            logger.warning(f"点目标 ({xt:.6g}, {zt:.6g}) m 的搜索窗口内没有像素，记为未找到")
            report.targets.append(TargetScore(target=(xt, zt), score=0, found=False))
            continue
        window = env[np.ix_(ix, iz)]
        a, b = np.unravel_index(int(np.argmax(window)), window.shape)
        pi, pk = int(ix[a]), int(iz[b])

        if image.log_db[pi, pk] <= floor_db:
            report.targets.append(TargetScore(target=(xt, zt), score=0, found=False))
            continue

        profile = env[:, pk]
        threshold = env[pi, pk] * 10.0 ** (HALF_AMPLITUDE_DB / 20.0)
        left_x, left_cut = _crossing(profile, xs, pi, threshold, -1)
        right_x, right_cut = _crossing(profile, xs, pi, threshold, +1)

        peak = (float(xs[pi]), float(zs[pk]))
        candidates = [peak, (left_x, peak[1]), (right_x, peak[1])]
        max_distance = max(math.hypot(cx - xt, cz - zt) for cx, cz in candidates)
        report.targets.append(TargetScore(
            target=(xt, zt),
            score=int(max_distance <= wavelength),
            found=True,
            peak=peak,
            left_x=left_x,
            right_x=right_x,
            max_distance=max_distance,
            truncated=left_cut or right_cut,
        ))
    return report


def gcnr(
    image: Union[BeamformedImage, np.ndarray],
    cyst_mask: np.ndarray,
    background_mask: np.ndarray,
    n_bins: int = DEFAULT_GCNR_BINS,
) -> GcnrReport:
    """广义对比噪声比

    两区域包络幅值在共享区间 [0, 两区最大值] 上按 n_bins 等宽分箱并归一化，
    gCNR = 1 − Σ min(f_CY, f_BG)。

    Raises:
        MetricError: 掩膜形状不符、重叠或像素数不足
    """
    envelope = image.envelope if isinstance(image, BeamformedImage) else np.asarray(image)
    cyst_mask = np.asarray(cyst_mask, dtype=bool)
    background_mask = np.asarray(background_mask, dtype=bool)
    if cyst_mask.shape != envelope.shape or background_mask.shape != envelope.shape:
        raise MetricError("评估掩膜形状与图像不一致")
    if np.any(cyst_mask & background_mask):
        raise MetricError("囊肿区与背景区重叠")
    n_cyst, n_bg = int(cyst_mask.sum()), int(background_mask.sum())
    if min(n_cyst, n_bg) < MIN_REGION_PIXELS:
        raise MetricError(
            f"评估区域像素不足: 囊肿 {n_cyst}, 背景 {n_bg}（至少 {MIN_REGION_PIXELS}）"
        )
    if n_bins < 2:
        raise ConfigError(f"直方图箱数必须不少于 2: {n_bins}")

    inside = envelope[cyst_mask]
    outside = envelope[background_mask]
    upper = float(max(inside.max(), outside.max()))
    if not upper > 0:
        return GcnrReport(gcnr=0.0, n_bins=n_bins, n_cyst=n_cyst, n_background=n_bg)

    bins = np.linspace(0.0, upper, n_bins + 1)
    f, _ = np.histogram(inside, bins=bins)
    g, _ = np.histogram(outside, bins=bins)
    f = f / f.sum()
    g = g / g.sum()
    value = float(np.clip(1.0 - np.sum(np.minimum(f, g)), 0.0, 1.0))
    return GcnrReport(gcnr=value, n_bins=n_bins, n_cyst=n_cyst, n_background=n_bg)


def compare_report(
    results: Mapping[Tuple[str, str], MethodResult],
    path: Optional[Path] = None,
) -> List[Dict[str, str]]:
    """生成表格形式的对比报告

    Args:
        results: (方法, 场景) 到指标的映射，方法按插入顺序输出
        path: CSV 输出路径（可选）

    Returns:
        行字典列表，列为 method、scenario、mean_gds 以及每个囊肿的 gcnr_<标签>

    Raises:
        MetricError: 各方法的场景集合不一致
    """
    methods: List[str] = []
    scenarios: Dict[str, set] = {}
    for method, scenario in results:
        if method not in scenarios:
            methods.append(method)
            scenarios[method] = set()
        scenarios[method].add(scenario)
    if not methods:
        raise MetricError("对比报告为空")
    reference = scenarios[methods[0]]
    for method in methods[1:]:
        if scenarios[method] != reference:
            raise MetricError(
                f"方法 {method} 的场景 {sorted(scenarios[method])} 与 "
                f"{methods[0]} 的场景 {sorted(reference)} 不一致"
            )

    labels = sorted({label for r in results.values() for label in r.gcnr})
    columns = ["method", "scenario", "mean_gds"] + [f"gcnr_{label}" for label in labels]
    rows = []
    for method in methods:
        for scenario in sorted(reference):
            result = results[(method, scenario)]
            row = {"method": method, "scenario": scenario, "mean_gds": f"{result.gds.mean:.4f}"}
            for label in labels:
                rep = result.gcnr.get(label)
                row[f"gcnr_{label}"] = "" if rep is None else f"{rep.gcnr:.4f}"
            rows.append(row)

    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=columns, lineterminator="\n")
            writer.writeheader()
            writer.writerows(rows)
    return rows


def write_gds_diagnostics(
    path: Path, results: Mapping[Tuple[str, str], MethodResult]
) -> None:
    """写出逐目标 GDS 诊断信息（YAML）"""
    data = {}
    for (method, scenario), result in results.items():
        data.setdefault(method, {})[scenario] = {
            "mean_gds": float(result.gds.mean),
            "wavelength": float(result.gds.wavelength),
            "targets": [t.to_dict() for t in result.gds.targets],
            "gcnr": {
                label: {
                    "gcnr": float(rep.gcnr), "n_bins": rep.n_bins,
                    "n_cyst": rep.n_cyst, "n_background": rep.n_background,
                }
                for label, rep in sorted(result.gcnr.items())
            },
        }
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(data, f, default_flow_style=False, allow_unicode=True, sort_keys=True)
