"""程函方程求解模块

用快速行进法（一阶迎风 Godunov 格式，四邻域）在非均匀声速图上求解
|∇τ| = 1/c，得到从任意点源出发的单程初至旅行时场。

单次求解按堆序严格串行；核函数以 nogil 编译，因此不同源点的求解可以在
线程池中针对同一只读声速图并行执行。
"""

import heapq
import logging
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numba import njit
from tqdm import tqdm

from .errors import ConfigError, GeometryError, MediumError
from .medium import Grid2D, SosMap, TransducerArray, sample_bilinear

logger = logging.getLogger(__name__)

# 节点状态
_FAR = 0
_TRIAL = 1
_ACCEPTED = 2

# 默认解析初始化圆盘半径（米）
DEFAULT_SOURCE_DISK_RADIUS = 1.5e-3


@dataclass(frozen=True)
class FmConfig:
    """快速行进求解配置

    邻域固定为四邻域，更新格式固定为一阶迎风。

    Attributes:
        source_disk_radius: 解析初始化圆盘半径（米）；None 表示使用默认值
            1.5 mm，且不小于网格步长
    """

    source_disk_radius: Optional[float] = None

    def __post_init__(self):
        if self.source_disk_radius is not None and not self.source_disk_radius > 0:
            raise ConfigError(f"源点圆盘半径必须为正: {self.source_disk_radius}")

    def radius_for(self, grid: Grid2D) -> float:
        """返回在给定网格上生效的圆盘半径

        Raises:
            ConfigError: 显式给定的半径小于 max(dx, dz)
        """
        h = max(grid.dx, grid.dz)
        if self.source_disk_radius is None:
            return max(DEFAULT_SOURCE_DISK_RADIUS, h)
        if self.source_disk_radius < h * (1.0 - 1e-12):
            raise ConfigError(
                f"源点圆盘半径 {self.source_disk_radius:.3g} m 小于网格步长 {h:.3g} m"
            )
        return self.source_disk_radius


@dataclass(frozen=True, eq=False)
class TravelTimeField:
    """单源旅行时场

    Attributes:
        grid: 与声速图相同的网格
        t: 形状 (nx, nz) 的旅行时（秒）
        source: 源点位置 (x, z)（米）
        accepted_order: 按接受顺序排列的扁平节点索引（i·nz + k）
    """

    grid: Grid2D
    t: np.ndarray
    source: Tuple[float, float]
    accepted_order: np.ndarray

    def sample(self, x, z):
        """在任意位置双线性采样旅行时"""
        return sample_bilinear(self.t, self.grid, x, z)


class SolveCounter:
    """线程安全的求解计数器"""

    def __init__(self):
        self._lock = threading.Lock()
        self._count = 0

    def increment(self) -> None:
        with self._lock:
            self._count += 1

    @property
    def count(self) -> int:
        with self._lock:
            return self._count

    def reset(self) -> None:
        with self._lock:
            self._count = 0


# 进程级求解计数
solve_counter = SolveCounter()


@njit(cache=True, nogil=True)
def _local_update(t, state, slowness, i, k, dx, dz):
    nx, nz = t.shape
    s = slowness[i, k]

    a = np.inf
    if i > 0 and state[i - 1, k] == _ACCEPTED:
        a = t[i - 1, k]
    if i < nx - 1 and state[i + 1, k] == _ACCEPTED and t[i + 1, k] < a:
        a = t[i + 1, k]
    b = np.inf
    if k > 0 and state[i, k - 1] == _ACCEPTED:
        b = t[i, k - 1]
    if k < nz - 1 and state[i, k + 1] == _ACCEPTED and t[i, k + 1] < b:
        b = t[i, k + 1]

    one_sided = min(a + dx * s, b + dz * s)
    if a == np.inf or b == np.inf:
        return one_sided

    # ((T-a)/dx)^2 + ((T-b)/dz)^2 = s^2，以 tau = T - a 为未知量
    beta = b - a
    qa = 1.0 / (dx * dx) + 1.0 / (dz * dz)
    qb = -2.0 * beta / (dz * dz)
    qc = beta * beta / (dz * dz) - s * s
    disc = qb * qb - 4.0 * qa * qc
    if disc < 0.0:
        return one_sided
    tau = (-qb + math.sqrt(disc)) / (2.0 * qa)
    if tau < 0.0 or tau < beta:
        return one_sided
    return min(a + tau, one_sided)


@njit(cache=True, nogil=True)
def _relax_neighbors(heap, t, state, slowness, i, k, dx, dz):
    nx, nz = t.shape
    for d in range(4):
        ni = i
        nk = k
        if d == 0:
            ni = i + 1
        elif d == 1:
            ni = i - 1
        elif d == 2:
            nk = k + 1
        else:
            nk = k - 1
        if ni < 0 or ni >= nx or nk < 0 or nk >= nz:
            continue
        if state[ni, nk] == _ACCEPTED:
            continue
        cand = _local_update(t, state, slowness, ni, nk, dx, dz)
        if cand < t[ni, nk]:
            t[ni, nk] = cand
            state[ni, nk] = _TRIAL
            heapq.heappush(heap, (cand, np.int64(ni * nz + nk)))


@njit(cache=True, nogil=True)
def _fast_march(slowness, t, state, order, n_done, dx, dz):
    """从已接受节点出发推进波前直至全部节点被接受

    Args:
        slowness: 慢度 1/c
        t: 旅行时，已接受节点已赋值，其余为 inf
        state: 节点状态
        order: 接受顺序输出缓冲区
        n_done: order 中已填写的节点数
        dx: 横向步长
        dz: 轴向步长

    Returns:
        推进结束后 order 中的节点总数
    """
    nx, nz = t.shape
    # 哨兵条目用于确定列表元素类型，弹出时跳过
    heap = [(np.inf, np.int64(-1))]

    for i in range(nx):
        for k in range(nz):
            if state[i, k] == _ACCEPTED:
                _relax_neighbors(heap, t, state, slowness, i, k, dx, dz)

    while len(heap) > 0:
        tt, idx = heapq.heappop(heap)
        if idx < 0:
            continue
        i = idx // nz
        k = idx - i * nz
        # 过期条目
        if state[i, k] == _ACCEPTED or tt > t[i, k]:
            continue
        state[i, k] = _ACCEPTED
        order[n_done] = idx
        n_done += 1
        _relax_neighbors(heap, t, state, slowness, i, k, dx, dz)
    return n_done


def solve_eikonal(
    sos: SosMap, source: Tuple[float, float], cfg: Optional[FmConfig] = None
) -> TravelTimeField:
    """从单个点源求解旅行时场

    圆盘内节点按 距离 / c(源点) 解析初始化并直接接受，其余节点由快速行进推进。

    Args:
        sos: 声速图
        source: 源点 (x, z)（米）
        cfg: 求解配置

    Returns:
        TravelTimeField 对象

    Raises:
        GeometryError: 源点位于网格外
        MediumError: 声速图包含非有限值
    """
    cfg = cfg or FmConfig()
    grid = sos.grid
    xs, zs = float(source[0]), float(source[1])
    if not grid.contains(xs, zs):
        raise GeometryError(f"源点 ({xs:.6g}, {zs:.6g}) m 位于网格外: {grid.extent_text()}")
    if not np.all(np.isfinite(sos.c)):
        raise MediumError("声速图包含非有限值")

    radius = cfg.radius_for(grid)
    slowness = np.ascontiguousarray(1.0 / sos.c)
    c_source = float(sos.sample(xs, zs))

    X, Z = grid.mesh()
    dist = np.hypot(X - xs, Z - zs)
    disk = dist <= radius

    t = np.full(grid.shape, np.inf)
    t[disk] = dist[disk] / c_source
    state = np.zeros(grid.shape, dtype=np.int8)
    state[disk] = _ACCEPTED

    order = np.empty(grid.nx * grid.nz, dtype=np.int64)
    disk_idx = np.flatnonzero(disk.ravel())
    disk_idx = disk_idx[np.argsort(t.ravel()[disk_idx], kind="stable")]
    order[: disk_idx.size] = disk_idx

    n_done = _fast_march(slowness, t, state, order, disk_idx.size, grid.dx, grid.dz)
    if n_done != order.size:
        raise MediumError(f"快速行进未覆盖全部节点: {n_done}/{order.size}")

    solve_counter.increment()
    t.setflags(write=False)
    order.setflags(write=False)
    return TravelTimeField(grid=grid, t=t, source=(xs, zs), accepted_order=order)


def solve_many(
    sos: SosMap,
    sources: Sequence[Tuple[float, float]],
    cfg: Optional[FmConfig] = None,
    threads: int = 1,
    desc: str = "程函求解",
    progress: bool = False,
) -> List[TravelTimeField]:
    """批量求解多个互相独立的源点，结果与 sources 顺序一致

    Args:
        sos: 声速图（只读共享）
        sources: 源点列表
        cfg: 求解配置
        threads: 工作线程数
        desc: 进度条描述
        progress: 是否在标准错误显示进度条

    Returns:
        旅行时场列表
    """
    cfg = cfg or FmConfig()
    sources = [(float(x), float(z)) for x, z in sources]
    logger.debug(f"{desc}: {len(sources)} 个源点, {threads} 线程")

    def solve(src: Tuple[float, float]) -> TravelTimeField:
        return solve_eikonal(sos, src, cfg)

    with tqdm(total=len(sources), desc=desc, disable=not progress, leave=False) as bar:
        if threads <= 1:
            fields = []
            for src in sources:
                fields.append(solve(src))
                bar.update()
            return fields
        with ThreadPoolExecutor(max_workers=threads) as pool:
            fields = []
            for field in pool.map(solve, sources):
                fields.append(field)
                bar.update()
            return fields


def solve_receive_fields(
    sos: SosMap,
    array: TransducerArray,
    cfg: Optional[FmConfig] = None,
    threads: int = 1,
    progress: bool = False,
) -> List[TravelTimeField]:
    """为每个阵元求解接收旅行时场，源点为 (x_i, 0)

    Raises:
        GeometryError: 阵元超出声速图横向范围
    """
    inside = sos.grid.contains(array.element_x, np.zeros(array.n_elements))
    if not np.all(inside):
        raise GeometryError(
            f"阵元横向范围 [{array.element_x[0]:.6g}, {array.element_x[-1]:.6g}] m "
            f"超出声速图 {sos.grid.extent_text()}"
        )
    sources = [(float(x), 0.0) for x in array.element_x]
    return solve_many(sos, sources, cfg, threads=threads, desc="接收场求解", progress=progress)
