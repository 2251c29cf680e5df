"""延迟计算模块

为每个（发射，阵元）对计算逐像素的往返延迟，提供两种可互换的实现:
常规几何延迟（恒定声速、虚拟源模型）和基于快速行进旅行时的折射校正延迟。

发射延迟采用虚拟源模型: τ_tx = τ_foc ± τ_foc_p，其中 τ_foc 为孔径中心到焦点的
传播时间，τ_foc_p 为焦点到像素的传播时间，像素位于焦点上方（z_p < z_f）时取负号。
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.signal.windows import hann

from .eikonal import FmConfig, TravelTimeField, solve_many, solve_receive_fields
from .errors import GeometryError
from .medium import C_REF, Grid2D, SosMap, TransducerArray

logger = logging.getLogger(__name__)

# 默认延迟图缓存上限（张）
DEFAULT_CACHE_SIZE = 256


@dataclass(frozen=True, eq=False)
class TransmitEvent:
    """一次聚焦发射

    Attributes:
        index: 发射序号 j
        aperture: 子孔径阵元索引（连续）
        center: 孔径中心 (x_t, z_t)（米）
        focus: 焦点 (x_f, z_f)（米）
        apodization: 子孔径各阵元的发射变迹权重
    """

    index: int
    aperture: np.ndarray
    center: Tuple[float, float]
    focus: Tuple[float, float]
    apodization: np.ndarray

    def __post_init__(self):
        aperture = np.asarray(self.aperture, dtype=np.int64)
        apod = np.asarray(self.apodization, dtype=np.float64)
        if aperture.ndim != 1 or aperture.size == 0:
            raise GeometryError(f"发射 {self.index} 的子孔径为空")
        if np.any(np.diff(aperture) != 1):
            raise GeometryError(f"发射 {self.index} 的子孔径必须由连续阵元组成")
        if apod.shape != aperture.shape:
            raise GeometryError(f"发射 {self.index} 的变迹权重数与子孔径阵元数不一致")
        if np.any(apod < 0) or np.any(apod > 1) or not np.allclose(apod, apod[::-1]):
            raise GeometryError(f"发射 {self.index} 的变迹权重必须位于 [0, 1] 且关于孔径中心对称")
        if self.center[1] != 0.0:
            raise GeometryError(f"发射 {self.index} 的孔径中心必须位于 z = 0")
        if not self.focus[1] > 0:
            raise GeometryError(f"发射 {self.index} 的焦点深度必须为正: {self.focus[1]}")
        aperture.setflags(write=False)
        apod.setflags(write=False)
        object.__setattr__(self, "aperture", aperture)
        object.__setattr__(self, "apodization", apod)
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        object.__setattr__(self, "focus", (float(self.focus[0]), float(self.focus[1])))

    def weight_of(self, element: np.ndarray) -> np.ndarray:
        """返回阵元索引对应的发射变迹权重（孔径外为 0）"""
        element = np.asarray(element, dtype=np.int64)
        pos = element - self.aperture[0]
        inside = (pos >= 0) & (pos < self.aperture.size)
        weights = np.zeros(element.shape)
        weights[inside] = self.apodization[pos[inside]]
        return weights


def make_transmit_events(
    array: TransducerArray,
    n_transmits: int,
    focal_depth: float,
    tx_f_number: float = 2.0,
) -> List[TransmitEvent]:
    """生成横向均匀分布的聚焦发射序列

    焦点横向位置均匀覆盖首末阵元之间；子孔径宽度满足发射 F 数
    （宽度 = 焦深 / F），在阵列边缘截断；孔径中心取子孔径阵元的中点；
    发射变迹为汉宁窗。

    Args:
        array: 换能器阵列
        n_transmits: 发射次数 M
        focal_depth: 焦深 z_f（米）
        tx_f_number: 发射 F 数

    Returns:
        TransmitEvent 列表

    Raises:
        GeometryError: 参数无效
    """
    if n_transmits < 1:
        raise GeometryError(f"发射次数必须不少于 1: {n_transmits}")
    if not focal_depth > 0:
        raise GeometryError(f"焦深必须为正: {focal_depth}")
    if not tx_f_number > 0:
        raise GeometryError(f"发射 F 数必须为正: {tx_f_number}")

    ex = array.element_x
    if n_transmits == 1:
        focal_x = np.array([0.0])
    else:
        focal_x = np.linspace(ex[0], ex[-1], n_transmits)
    half_width = focal_depth / tx_f_number / 2.0

    events = []
    for j, xf in enumerate(focal_x):
        aperture = np.flatnonzero(np.abs(ex - xf) <= half_width + 1e-12)
        if aperture.size == 0:
            aperture = np.array([int(np.argmin(np.abs(ex - xf)))])
        n_ap = aperture.size
        apod = hann(n_ap + 2, sym=True)[1:-1]
        # 消除浮点误差造成的不对称
        apod = 0.5 * (apod + apod[::-1])
        x_t = 0.5 * (ex[aperture[0]] + ex[aperture[-1]])
        events.append(
            TransmitEvent(
                index=j,
                aperture=aperture,
                center=(x_t, 0.0),
                focus=(float(xf), float(focal_depth)),
                apodization=apod,
            )
        )
    return events


def geometric_tx_delay(event: TransmitEvent, x, z, c_ref: float = C_REF):
    """常规几何发射延迟

    Args:
        event: 发射事件
        x: 像素横向坐标（米），标量或数组
        z: 像素轴向坐标（米）
        c_ref: 声速（m/s）

    Returns:
        τ_foc + τ_foc_p（秒）
    """
    (x_t, z_t), (x_f, z_f) = event.center, event.focus
    tau_foc = np.hypot(x_t - x_f, z_t - z_f) / c_ref
    tau_foc_p = np.hypot(np.subtract(x, x_f), np.subtract(z, z_f)) / c_ref
    sign = np.where(np.less(z, z_f), -1.0, 1.0)
    return tau_foc + sign * tau_foc_p


def geometric_rx_delay(element_x: float, x, z, c_ref: float = C_REF, element_z: float = 0.0):
    """常规几何接收延迟 √((x_i−x_p)² + (z_i−z_p)²) / c"""
    return np.hypot(np.subtract(x, element_x), np.subtract(z, element_z)) / c_ref


def fm_tx_delay(
    event: TransmitEvent,
    x,
    z,
    tt_from_center: TravelTimeField,
    tt_from_focus: TravelTimeField,
):
    """基于旅行时场的发射延迟

    τ_foc 取孔径中心场在焦点处的值，τ_foc_p 取焦点场在像素处的值，
    符号规则与几何模型相同。

    Raises:
        OutOfBoundsError: 像素位于网格外
    """
    tau_foc = float(tt_from_center.sample(*event.focus))
    return _fm_tx_from_tau(event, x, z, tau_foc, tt_from_focus)


def _fm_tx_from_tau(event: TransmitEvent, x, z, tau_foc: float, tt_from_focus: TravelTimeField):
    tau_foc_p = tt_from_focus.sample(x, z)
    sign = np.where(np.less(z, event.focus[1]), -1.0, 1.0)
    return tau_foc + sign * tau_foc_p


def fm_rx_delay(element_index: int, x, z, receive_fields: Sequence[TravelTimeField]):
    """基于旅行时场的接收延迟（第 i 个阵元场在像素处的双线性采样）"""
    return receive_fields[element_index].sample(x, z)


class DelayProvider(ABC):
    """延迟提供者抽象基类

    tx_delay 只依赖（发射，像素），rx_delay 只依赖（阵元，像素）。
    构造完成后只读，查询为纯函数，可从并行工作线程调用。

    Attributes:
        array: 换能器阵列
        events: 发射事件列表
    """

    name = "abstract"

    def __init__(self, array: TransducerArray, events: Sequence[TransmitEvent]):
        """初始化延迟提供者

        Args:
            array: 换能器阵列
            events: 发射事件列表
        """
        self.array = array
        self.events = list(events)

    @abstractmethod
    def tx_delay(self, j: int, x, z):
        """第 j 次发射到像素的发射延迟（秒）"""
        pass

    @abstractmethod
    def rx_delay(self, i: int, x, z):
        """像素到第 i 个阵元的接收延迟（秒）"""
        pass

    def delay(self, j: int, i: int, x, z):
        """往返延迟 τ_p(i, j)"""
        return self.tx_delay(j, x, z) + self.rx_delay(i, x, z)


class GeometricDelayProvider(DelayProvider):
    """恒定声速几何延迟"""

    name = "das"

    def __init__(
        self,
        array: TransducerArray,
        events: Sequence[TransmitEvent],
        c_ref: Optional[float] = None,
    ):
        super().__init__(array, events)
        self.c_ref = float(c_ref if c_ref is not None else array.c_ref)

    def tx_delay(self, j: int, x, z):
        return geometric_tx_delay(self.events[j], x, z, self.c_ref)

    def rx_delay(self, i: int, x, z):
        return geometric_rx_delay(self.array.element_x[i], x, z, self.c_ref)


class FmDelayProvider(DelayProvider):
    """基于快速行进旅行时的折射校正延迟

    构造时完成全部求解: M 个孔径中心场（仅保留其在焦点处的采样值）、
    M 个焦点场和 N_c 个阵元场，总求解次数为 2M + N_c。

    Attributes:
        sos: 求解使用的声速图
        solve_count: 本提供者执行的求解次数
    """

    name = "fm-das"

    def __init__(
        self,
        sos: SosMap,
        array: TransducerArray,
        events: Sequence[TransmitEvent],
        cfg: Optional[FmConfig] = None,
        threads: int = 1,
        progress: bool = False,
    ):
        super().__init__(array, events)
        self.sos = sos
        self.cfg = cfg or FmConfig()

        centers = [ev.center for ev in self.events]
        center_fields = solve_many(
            sos, centers, self.cfg, threads=threads, desc="孔径中心场求解", progress=progress
        )
        self.tau_foc = np.array(
            [float(field.sample(*ev.focus)) for field, ev in zip(center_fields, self.events)]
        )
        del center_fields

        foci = [ev.focus for ev in self.events]
        self.focus_fields = solve_many(
            sos, foci, self.cfg, threads=threads, desc="焦点场求解", progress=progress
        )
        self.receive_fields = solve_receive_fields(
            sos, array, self.cfg, threads=threads, progress=progress
        )
        self.solve_count = 2 * len(self.events) + array.n_elements
        logger.debug(f"快速行进延迟就绪: {self.solve_count} 次求解")

    def tx_delay(self, j: int, x, z):
        return _fm_tx_from_tau(self.events[j], x, z, self.tau_foc[j], self.focus_fields[j])

    def rx_delay(self, i: int, x, z):
        return fm_rx_delay(i, x, z, self.receive_fields)


class DelayTables:
    """按需生成的逐像素延迟图，带 LRU 缓存

    发射图与接收图分别缓存，τ_p(i, j) = tx(j) + rx(i)，
    延迟物化与按需计算使用同一算式，结果逐位一致。

    Attributes:
        provider: 延迟提供者
        pixel_grid: 像素网格
    """

    def __init__(self, provider: DelayProvider, pixel_grid: Grid2D, cache_size: int):
        self.provider = provider
        self.pixel_grid = pixel_grid
        self._X, self._Z = pixel_grid.mesh()
        self.tx = lru_cache(maxsize=cache_size)(self._compute_tx)
        self.rx = lru_cache(maxsize=cache_size)(self._compute_rx)

    @property
    def n_transmits(self) -> int:
        return len(self.provider.events)

    @property
    def n_elements(self) -> int:
        return self.provider.array.n_elements

    def _compute_tx(self, j: int) -> np.ndarray:
        out = np.asarray(self.provider.tx_delay(j, self._X, self._Z), dtype=np.float64)
        out.setflags(write=False)
        return out

    def _compute_rx(self, i: int) -> np.ndarray:
        out = np.asarray(self.provider.rx_delay(i, self._X, self._Z), dtype=np.float64)
        out.setflags(write=False)
        return out

    def delay(self, j: int, i: int) -> np.ndarray:
        """第 (j, i) 对的往返延迟图，形状 (nx, nz)"""
        return self.tx(j) + self.rx(i)

    def materialize(self) -> np.ndarray:
        """物化完整延迟表，形状 (M, N_c, nx, nz)"""
        out = np.empty((self.n_transmits, self.n_elements) + self.pixel_grid.shape)
        for j in range(self.n_transmits):
            for i in range(self.n_elements):
                out[j, i] = self.delay(j, i)
        return out


def build_delay_tables(
    events: Sequence[TransmitEvent],
    array: TransducerArray,
    pixel_grid: Grid2D,
    provider: DelayProvider,
    cache_size: Optional[int] = None,
) -> DelayTables:
    """构建逐（发射，阵元）的延迟表

    Args:
        events: 发射事件列表
        array: 换能器阵列
        pixel_grid: 像素网格
        provider: 延迟提供者
        cache_size: 延迟图缓存上限，默认可容纳全部接收图

    Returns:
        DelayTables 对象

    Raises:
        GeometryError: 提供者几何与给定几何不一致，或像素网格超出声速图
    """
    if provider.array != array:
        raise GeometryError("延迟提供者的阵列与采集阵列不一致")
    if len(provider.events) != len(events):
        raise GeometryError(
            f"延迟提供者发射数 {len(provider.events)} 与采集发射数 {len(events)} 不一致"
        )
    if isinstance(provider, FmDelayProvider) and not provider.sos.grid.contains_grid(pixel_grid):
        raise GeometryError(
            f"像素网格 {pixel_grid.extent_text()} 超出声速图 {provider.sos.grid.extent_text()}"
        )
    if cache_size is None:
        cache_size = max(DEFAULT_CACHE_SIZE, array.n_elements + 1)
    return DelayTables(provider, pixel_grid, cache_size)
