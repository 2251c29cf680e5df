"""射频仿真模块

以飞行时间点散射（单次散射 Born 近似）模型从仿体合成聚焦发射射频通道数据，
作为已知真值的可控替代。到达时间 T = τ_tx(j, s) + τ_rx(i, s) 由真值延迟模型
在未平滑的声速图上计算，与波束形成器使用相同的延迟模型族，因此像差效应被单独隔离。

无多次反射、无衰减、无阵元指向性。
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from numba import njit
from tqdm import tqdm

from .beamform import RfDataSet
from .delays import DelayProvider, FmDelayProvider, GeometricDelayProvider, TransmitEvent
from .eikonal import FmConfig
from .errors import ConfigError, OutOfBoundsError
from .medium import TransducerArray
from .phantom import Phantom

logger = logging.getLogger(__name__)

TRUTH_MODELS = ("fm_true_sos", "geometric_constant_c")

# 脉冲截断位置（σ 的倍数）
PULSE_TRUNCATION = 3.0


@dataclass(frozen=True)
class PulseSpec:
    """高斯调制激励脉冲

    Attributes:
        f0: 中心频率（Hz）
        bandwidth: 相对带宽（半高全宽 / f0），位于 (0, 1)
    """

    f0: float = 3e6
    bandwidth: float = 0.6

    def __post_init__(self):
        if not self.f0 > 0:
            raise ConfigError(f"脉冲中心频率必须为正: {self.f0}")
        if not 0.0 < self.bandwidth < 1.0:
            raise ConfigError(f"相对带宽必须位于 (0, 1): {self.bandwidth}")

    @property
    def sigma(self) -> float:
        """时域包络标准差（秒）"""
        sigma_f = self.bandwidth * self.f0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))
        return 1.0 / (2.0 * math.pi * sigma_f)

    @property
    def duration(self) -> float:
        """截断后的脉冲总时长（秒）"""
        return 2.0 * PULSE_TRUNCATION * self.sigma


@dataclass(frozen=True)
class SimConfig:
    """射频仿真配置

    Attributes:
        fs: 采样率（Hz），None 表示 4·f0·(1 + bw)
        truth_delay_model: 真值延迟模型
        noise_std: 加性高斯噪声标准差
        seed: 噪声随机种子
    """

    fs: Optional[float] = None
    truth_delay_model: str = "fm_true_sos"
    noise_std: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.truth_delay_model not in TRUTH_MODELS:
            raise ConfigError(
                f"未知真值延迟模型: {self.truth_delay_model}，可选: {', '.join(TRUTH_MODELS)}"
            )
        if self.noise_std < 0:
            raise ConfigError(f"噪声标准差必须非负: {self.noise_std}")

    def sampling_rate(self, pulse: PulseSpec) -> float:
        """生效采样率

        Raises:
            ConfigError: 采样率不高于 2·f0·(1 + bw)
        """
        nyquist = 2.0 * pulse.f0 * (1.0 + pulse.bandwidth)
        fs = self.fs if self.fs is not None else 2.0 * nyquist
        if not fs > nyquist:
            raise ConfigError(f"采样率 {fs:.4g} Hz 必须高于 2·f0·(1+bw) = {nyquist:.4g} Hz")
        return fs


def pulse_waveform(pulse: PulseSpec, t):
    """exp(−t²/(2σ²))·cos(2π·f0·t)，|t| > 3σ 处为 0"""
    t = np.asarray(t, dtype=np.float64)
    sigma = pulse.sigma
    out = np.exp(-t * t / (2.0 * sigma * sigma)) * np.cos(2.0 * np.pi * pulse.f0 * t)
    out = np.where(np.abs(t) <= PULSE_TRUNCATION * sigma, out, 0.0)
    return float(out) if out.ndim == 0 else out


@njit(cache=True, nogil=True)
def _accumulate_event(out, tx, rx, amp, fs, t0, f0, sigma, half_width):
    """累加一次发射的全部散射子回波

    Args:
        out: 形状 (N_c, N_t) 的输出缓冲区
        tx: 各散射子发射延迟 (K,)
        rx: 各阵元到散射子的接收延迟 (N_c, K)
        amp: 各散射子幅度（反射率 × 发射权重）(K,)
    """
    n_c, n_t = out.shape
    two_sigma2 = 2.0 * sigma * sigma
    omega = 2.0 * math.pi * f0
    for i in range(n_c):
        for s in range(amp.size):
            a = amp[s]
            if a == 0.0:
                continue
            arrival = tx[s] + rx[i, s]
            lo = int(math.ceil((arrival - half_width - t0) * fs))
            hi = int(math.floor((arrival + half_width - t0) * fs))
            if lo < 0:
                lo = 0
            if hi > n_t - 1:
                hi = n_t - 1
            for n in range(lo, hi + 1):
                tt = n / fs + t0 - arrival
                if abs(tt) <= half_width:
                    out[i, n] += a * math.exp(-tt * tt / two_sigma2) * math.cos(omega * tt)


def record_length(
    array: TransducerArray, events: Sequence[TransmitEvent], grid_corners: np.ndarray,
    c_slow: float, pulse: PulseSpec, fs: float, t0: float = 0.0,
) -> int:
    """由采集几何推导采样点数

    以最慢声速估计经网格角点的最长往返路径，与散射子分布无关。
    """
    ex = array.element_x
    t_max = 0.0
    for ev in events:
        (x_t, z_t), (x_f, z_f) = ev.center, ev.focus
        to_focus = math.hypot(x_t - x_f, z_t - z_f)
        beyond = np.max(np.hypot(grid_corners[:, 0] - x_f, grid_corners[:, 1] - z_f))
        t_max = max(t_max, (to_focus + beyond) / c_slow)
    rx_max = max(
        float(np.max(np.hypot(grid_corners[:, 0] - x, grid_corners[:, 1]))) for x in (ex[0], ex[-1])
    )
    t_max += rx_max / c_slow + PULSE_TRUNCATION * pulse.sigma
    return int(math.ceil((t_max - t0) * fs)) + 1


def simulate_rf(
    phantom: Phantom,
    array: TransducerArray,
    events: Sequence[TransmitEvent],
    pulse: PulseSpec,
    cfg: SimConfig,
    fm_cfg: Optional[FmConfig] = None,
    threads: int = 1,
    progress: bool = False,
    provider: Optional[DelayProvider] = None,
) -> RfDataSet:
    """合成聚焦发射射频数据

    Args:
        phantom: 仿体
        array: 换能器阵列
        events: 发射事件
        pulse: 激励脉冲
        cfg: 仿真配置
        fm_cfg: 真值模型为 fm_true_sos 时的快速行进配置
        threads: 工作线程数（按发射并行，各发射写入独立缓冲区）
        progress: 是否显示进度条
        provider: 预先构建的真值延迟提供者（可选）

    Returns:
        RfDataSet 对象，t0 = 0

    Raises:
        OutOfBoundsError: 散射子位于旅行时场外
    """
    if abs(pulse.f0 - array.f0) > 1e-9 * array.f0:
        raise ConfigError(f"脉冲中心频率 {pulse.f0:g} Hz 与阵列中心频率 {array.f0:g} Hz 不一致")
    fs = cfg.sampling_rate(pulse)
    t0 = 0.0
    events = list(events)
    grid = phantom.sos.grid

    if provider is None:
        if cfg.truth_delay_model == "fm_true_sos":
            provider = FmDelayProvider(
                phantom.sos, array, events, fm_cfg, threads=threads, progress=progress
            )
        else:
            provider = GeometricDelayProvider(array, events)

    if cfg.truth_delay_model == "fm_true_sos":
        c_slow = min(phantom.sos.c_min, array.c_ref)
    else:
        c_slow = array.c_ref
    corners = np.array([
        [grid.origin_x, grid.origin_z], [grid.x_max, grid.origin_z],
        [grid.origin_x, grid.z_max], [grid.x_max, grid.z_max],
    ])
    n_t = record_length(array, events, corners, c_slow, pulse, fs, t0)

    sx = np.ascontiguousarray(phantom.scatterers[:, 0])
    sz = np.ascontiguousarray(phantom.scatterers[:, 1])
    refl = phantom.scatterers[:, 2]
    if sx.size and not np.all(grid.contains(sx, sz)):
        first = int(np.flatnonzero(~grid.contains(sx, sz))[0])
        raise OutOfBoundsError(float(sx[first]), float(sz[first]), grid.extent_text())

    samples = np.zeros((len(events), array.n_elements, n_t))
    logger.debug(
        f"射频仿真: {len(events)} 次发射, {array.n_elements} 阵元, "
        f"{sx.size} 个散射子, {n_t} 采样点, fs = {fs:.4g} Hz"
    )
    if sx.size:
        rx = np.ascontiguousarray(
            np.stack([np.asarray(provider.rx_delay(i, sx, sz)) for i in range(array.n_elements)])
        )
        nearest = array.nearest_element(sx)

        def simulate_event(j: int) -> None:
            tx = np.ascontiguousarray(provider.tx_delay(j, sx, sz), dtype=np.float64)
            amp = np.ascontiguousarray(refl * events[j].weight_of(nearest))
            _accumulate_event(
                samples[j], tx, rx, amp, fs, t0, pulse.f0, pulse.sigma,
                PULSE_TRUNCATION * pulse.sigma,
            )

        with tqdm(total=len(events), desc="射频仿真", disable=not progress, leave=False) as bar:
            if threads <= 1:
                for j in range(len(events)):
                    simulate_event(j)
                    bar.update()
            else:
                with ThreadPoolExecutor(max_workers=threads) as pool:
                    for _ in pool.map(simulate_event, range(len(events))):
                        bar.update()

    if cfg.noise_std > 0:
        rng = np.random.default_rng(cfg.seed)
        samples += cfg.noise_std * rng.standard_normal(samples.shape)

    return RfDataSet(samples=samples, fs=fs, t0=t0, array=array, events=tuple(events))
