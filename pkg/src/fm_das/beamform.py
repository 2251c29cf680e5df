"""波束形成模块

实现带动态接收变迹的延迟叠加（DAS）求和，在全部聚焦发射间复合，
随后逐列包络检测并对数压缩为显示图像。另提供声速图预处理（中值滤波 + 高斯平滑）。
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.ndimage import gaussian_filter, median_filter
from scipy.signal import hilbert
from tqdm import tqdm

from .delays import DelayProvider, DelayTables, TransmitEvent, build_delay_tables
from .errors import ConfigError, DataMismatchError, ImageError
from .medium import Grid2D, SosMap, TransducerArray

logger = logging.getLogger(__name__)

# 默认显示动态范围（dB）
DEFAULT_DYNAMIC_RANGE_DB = 60.0

# 确定性归约时每块包含的发射数
DETERMINISTIC_CHUNK = 8


@dataclass(frozen=True, eq=False)
class RfDataSet:
    """聚焦发射射频通道数据

    Attributes:
        samples: 形状 (M, N_c, N_t) 的采样值
        fs: 采样率（Hz）
        t0: 采样索引 0 对应的时刻（秒），以发射事件从孔径中心激发为零点
        array: 换能器阵列
        events: 发射事件列表
    """

    samples: np.ndarray
    fs: float
    t0: float
    array: TransducerArray
    events: Tuple[TransmitEvent, ...]

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        events = tuple(self.events)
        if samples.ndim != 3:
            raise DataMismatchError(f"射频数据必须为三维 [发射][阵元][时间]，实际 {samples.ndim} 维")
        m, n_c, n_t = samples.shape
        if m != len(events):
            raise DataMismatchError(f"射频数据发射数 {m} 与发射事件数 {len(events)} 不一致")
        if n_c != self.array.n_elements:
            raise DataMismatchError(f"射频数据通道数 {n_c} 与阵元数 {self.array.n_elements} 不一致")
        if n_t < 2:
            raise DataMismatchError(f"射频数据采样点数过少: {n_t}")
        if not np.all(np.isfinite(samples)):
            raise DataMismatchError("射频数据包含非有限值")
        if not self.fs > 2.0 * self.array.f0:
            raise DataMismatchError(
                f"采样率 {self.fs:.4g} Hz 不满足奈奎斯特条件 (> 2·f0 = {2 * self.array.f0:.4g} Hz)"
            )
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "events", events)

    @property
    def n_transmits(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[2]


@dataclass(frozen=True)
class ApodizationSpec:
    """变迹配置

    接收窗为汉宁窗，动态孔径 |x_i − x_p| ≤ z_p / (2·F)；发射窗固定为 F 数 2 的汉宁窗。

    Attributes:
        f_number: 接收 F 数
        window: 窗函数名（仅支持 hanning）
        tx_gate: 是否启用以波束轴为中心的沙漏形发射门控（默认关闭）
    """

    f_number: float = 2.0
    window: str = "hanning"
    tx_gate: bool = False

    def __post_init__(self):
        if not self.f_number > 0:
            raise ConfigError(f"接收 F 数必须为正: {self.f_number}")
        if self.window != "hanning":
            raise ConfigError(f"不支持的窗函数: {self.window}")


@dataclass(frozen=True, eq=False)
class BeamformedImage:
    """波束形成图像

    Attributes:
        pixel_grid: 像素网格
        rf_sum: 逐像素 DAS 求和结果
        envelope: 包络（≥ 0）
        log_db: 对数压缩图像（≤ 0 dB，最大值恰为 0）
        dynamic_range_db: 显示动态范围
    """

    pixel_grid: Grid2D
    rf_sum: np.ndarray
    envelope: np.ndarray
    log_db: np.ndarray
    dynamic_range_db: float = DEFAULT_DYNAMIC_RANGE_DB

    @classmethod
    def from_rf_sum(
        cls, pixel_grid: Grid2D, rf_sum: np.ndarray,
        dynamic_range_db: float = DEFAULT_DYNAMIC_RANGE_DB,
    ) -> "BeamformedImage":
        """由 DAS 求和结果做包络检测和对数压缩"""
        envelope = envelope_detect(rf_sum)
        return cls(
            pixel_grid=pixel_grid,
            rf_sum=rf_sum,
            envelope=envelope,
            log_db=log_compress(envelope, dynamic_range_db),
            dynamic_range_db=dynamic_range_db,
        )

    @classmethod
    def from_envelope(
        cls, pixel_grid: Grid2D, envelope: np.ndarray,
        dynamic_range_db: float = DEFAULT_DYNAMIC_RANGE_DB,
    ) -> "BeamformedImage":
        """由包络直接构造图像（rf_sum 取包络本身）"""
        envelope = np.asarray(envelope, dtype=np.float64)
        return cls(
            pixel_grid=pixel_grid,
            rf_sum=envelope,
            envelope=envelope,
            log_db=log_compress(envelope, dynamic_range_db),
            dynamic_range_db=dynamic_range_db,
        )


def receive_apodization(
    element_x: float, x: np.ndarray, z: np.ndarray, f_number: float
) -> np.ndarray:
    """动态接收汉宁窗权重

    u = (x_i − x_p) / (z_p / (2F))，W = 0.5·(1 + cos(π·u))，|u| > 1 或 z_p ≤ 0 时为 0。
    """
    x = np.asarray(x, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    half_aperture = z / (2.0 * f_number)
    weights = np.zeros(np.broadcast(x, z).shape)
    valid = half_aperture > 0
    u = np.zeros_like(weights)
    np.divide(element_x - x, half_aperture, out=u, where=valid)
    support = valid & (np.abs(u) <= 1.0)
    weights[support] = 0.5 * (1.0 + np.cos(np.pi * u[support]))
    return weights


def transmit_gate(
    event: TransmitEvent, array: TransducerArray, x: np.ndarray, z: np.ndarray,
    lateral_step: float,
) -> np.ndarray:
    """沙漏形发射门控

    以孔径中心到焦点的连线为轴，半宽为 (D/2)·|z − z_f|/z_f，且不小于焦点横向间距。
    """
    (x_t, _), (x_f, z_f) = event.center, event.focus
    ex = array.element_x
    half_d = 0.5 * (ex[event.aperture[-1]] - ex[event.aperture[0]] + array.pitch)
    axis_x = x_t + (x_f - x_t) * np.asarray(z) / z_f
    half_width = np.maximum(half_d * np.abs(np.asarray(z) - z_f) / z_f, lateral_step)
    return np.abs(np.asarray(x) - axis_x) <= half_width


def _interp_channel(signal: np.ndarray, index: np.ndarray) -> np.ndarray:
    """按小数采样索引线性插值，[0, N_t − 1] 之外为 0"""
    n_t = signal.size
    valid = (index >= 0.0) & (index <= n_t - 1)
    idx = np.where(valid, index, 0.0)
    floor = np.floor(idx).astype(np.int64)
    np.minimum(floor, n_t - 2, out=floor)
    frac = idx - floor
    out = signal[floor] * (1.0 - frac) + signal[floor + 1] * frac
    out[~valid] = 0.0
    return out


def _receive_supports(
    array: TransducerArray, pixel_grid: Grid2D, f_number: float
) -> List[Tuple[np.ndarray, np.ndarray]]:
    """每个阵元的接收支撑（扁平像素索引, 权重）"""
    X, Z = pixel_grid.mesh()
    supports = []
    for xi in array.element_x:
        w = receive_apodization(xi, X, Z, f_number).ravel()
        idx = np.flatnonzero(w > 0)
        supports.append((idx, w[idx]))
    return supports


def das_beamform(
    rf: RfDataSet,
    provider: DelayProvider,
    apod: ApodizationSpec,
    pixel_grid: Grid2D,
    threads: int = 1,
    progress: bool = False,
    tables: Optional[DelayTables] = None,
    deterministic: bool = True,
) -> np.ndarray:
    """延迟叠加波束形成

    y(p) = Σ_j Σ_i W_i(p) · s_{j,i}((τ_p(i,j) − t0)·fs)，射频按两点线性插值。
    发射序列按连续块划分，各块部分和按块序归约，结果与线程调度无关；
    deterministic 为真时块大小固定，结果与线程数也无关。

    Args:
        rf: 射频数据
        provider: 延迟提供者
        apod: 变迹配置
        pixel_grid: 像素网格
        threads: 工作线程数
        progress: 是否显示进度条
        tables: 预先构建的延迟表（可选）
        deterministic: 是否使用与线程数无关的固定分块

    Returns:
        形状 (nx, nz) 的 DAS 求和结果

    Raises:
        DataMismatchError: 射频数据与延迟几何不一致
    """
    if provider.array != rf.array:
        raise DataMismatchError("射频数据阵列与延迟提供者阵列不一致")
    if len(provider.events) != rf.n_transmits:
        raise DataMismatchError(
            f"射频数据发射数 {rf.n_transmits} 与延迟提供者发射数 {len(provider.events)} 不一致"
        )
    if tables is None:
        tables = build_delay_tables(rf.events, rf.array, pixel_grid, provider)

    n_c = rf.array.n_elements
    supports = _receive_supports(rf.array, pixel_grid, apod.f_number)
    rx_maps = [tables.rx(i).ravel() for i in range(n_c)]
    X, Z = pixel_grid.mesh()
    focal_x = [ev.focus[0] for ev in rf.events]
    lateral_step = float(np.min(np.diff(focal_x))) if len(focal_x) > 1 else rf.array.pitch
    n_pixels = X.size

    def beamform_chunk(chunk: Sequence[int], bar) -> np.ndarray:
        acc = np.zeros(n_pixels)
        for j in chunk:
            tx = tables.tx(j).ravel()
            gate = None
            if apod.tx_gate:
                gate = transmit_gate(rf.events[j], rf.array, X, Z, lateral_step).ravel()
            for i in range(n_c):
                idx, w = supports[i]
                if idx.size == 0:
                    continue
                tau = tx[idx] + rx_maps[i][idx]
                contrib = w * _interp_channel(rf.samples[j, i], (tau - rf.t0) * rf.fs)
                if gate is not None:
                    contrib = contrib * gate[idx]
                acc[idx] += contrib
            bar.update()
        return acc

    transmits = list(range(rf.n_transmits))
    if deterministic:
        chunks = [transmits[k:k + DETERMINISTIC_CHUNK]
                  for k in range(0, len(transmits), DETERMINISTIC_CHUNK)]
    else:
        n_chunks = max(1, min(threads, len(transmits)))
        chunks = [list(c) for c in np.array_split(transmits, n_chunks)]
    workers = max(1, min(threads, len(chunks)))

    with tqdm(total=len(transmits), desc=f"波束形成 ({provider.name})",
              disable=not progress, leave=False) as bar:
        if workers == 1:
            partials = [beamform_chunk(c, bar) for c in chunks]
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                partials = list(pool.map(lambda c: beamform_chunk(c, bar), chunks))

    total = np.zeros(n_pixels)
    for part in partials:
        total += part
    return total.reshape(pixel_grid.shape)


def envelope_detect(rf_sum: np.ndarray) -> np.ndarray:
    """逐列（沿轴向）解析信号幅值

    Raises:
        ImageError: 轴向像素数少于 4
    """
    rf_sum = np.asarray(rf_sum, dtype=np.float64)
    if rf_sum.ndim != 2 or rf_sum.shape[1] < 4:
        raise ImageError(f"包络检测需要二维图像且轴向至少 4 个像素: {rf_sum.shape}")
    return np.abs(hilbert(rf_sum, axis=1))


def log_compress(
    envelope: np.ndarray, dynamic_range_db: float = DEFAULT_DYNAMIC_RANGE_DB
) -> np.ndarray:
    """对数压缩 20·log10(e / max(e))，截断到 [−DR, 0]

    Raises:
        ImageError: 包络全零
    """
    envelope = np.asarray(envelope, dtype=np.float64)
    peak = float(envelope.max()) if envelope.size else 0.0
    if not peak > 0:
        raise ImageError("包络全为零，无法对数压缩")
    with np.errstate(divide="ignore"):
        log_db = 20.0 * np.log10(envelope / peak)
    return np.clip(log_db, -dynamic_range_db, 0.0)


def preprocess_sos(sos: SosMap, median_radius: int, smooth_sigma: float) -> SosMap:
    """声速图预处理: 方形窗中值滤波（边缘复制）后高斯平滑

    Args:
        sos: 原始声速图
        median_radius: 中值滤波半径（节点），窗口边长 2r + 1
        smooth_sigma: 高斯标准差（节点）

    Returns:
        网格不变的新声速图
    """
    if median_radius < 0 or smooth_sigma < 0:
        raise ConfigError(f"预处理参数必须非负: median_radius={median_radius}, sigma={smooth_sigma}")
    c = np.array(sos.c, dtype=np.float64)
    if median_radius > 0:
        c = median_filter(c, size=2 * int(median_radius) + 1, mode="nearest")
    if smooth_sigma > 0:
        c = gaussian_filter(c, sigma=float(smooth_sigma), mode="nearest")
    return SosMap(grid=sos.grid, c=c)


def beamform_image(
    rf: RfDataSet,
    provider: DelayProvider,
    apod: ApodizationSpec,
    pixel_grid: Grid2D,
    dynamic_range_db: float = DEFAULT_DYNAMIC_RANGE_DB,
    threads: int = 1,
    progress: bool = False,
    deterministic: bool = True,
    cache_size: Optional[int] = None,
) -> BeamformedImage:
    """波束形成、包络检测与对数压缩的完整链路"""
    tables = build_delay_tables(rf.events, rf.array, pixel_grid, provider, cache_size=cache_size)
    rf_sum = das_beamform(
        rf, provider, apod, pixel_grid, threads=threads, progress=progress, tables=tables,
        deterministic=deterministic,
    )
    return BeamformedImage.from_rf_sum(pixel_grid, rf_sum, dynamic_range_db)
