"""介质模块

定义空间网格、声速图和换能器阵列几何，以及基于网格的坐标变换和双线性采样。
所有类型构造后不可变，可在并行工作线程间只读共享。

数组约定: 网格上的二维数组形状为 (nx, nz)，第一维为横向 x，第二维为轴向 z。
"""

from dataclasses import dataclass, field
from typing import Tuple, Union

import numpy as np
from scipy.ndimage import map_coordinates

from .errors import GeometryError, MediumError, OutOfBoundsError


# 参考声速（m/s），用于波长与常规延迟
C_REF = 1540.0

# 声速合理性范围（m/s）
SOS_MIN = 500.0
SOS_MAX = 5000.0

# 网格边界容差（以索引为单位），吸收浮点舍入
_INDEX_TOLERANCE = 1e-9

ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True)
class Grid2D:
    """规则二维网格

    节点 (i, k) 的物理位置为 (origin_x + i·dx, origin_z + k·dz)。

    Attributes:
        origin_x: 横向原点（米）
        origin_z: 轴向原点（米）
        dx: 横向步长（米）
        dz: 轴向步长（米）
        nx: 横向节点数
        nz: 轴向节点数
    """

    origin_x: float
    origin_z: float
    dx: float
    dz: float
    nx: int
    nz: int

    def __post_init__(self):
        if not (np.isfinite(self.dx) and self.dx > 0 and np.isfinite(self.dz) and self.dz > 0):
            raise GeometryError(f"网格步长必须为正: dx={self.dx}, dz={self.dz}")
        if self.nx < 2 or self.nz < 2:
            raise GeometryError(f"网格节点数必须不少于 2: nx={self.nx}, nz={self.nz}")
        if not (np.isfinite(self.origin_x) and np.isfinite(self.origin_z)):
            raise GeometryError("网格原点必须为有限数")
        object.__setattr__(self, "nx", int(self.nx))
        object.__setattr__(self, "nz", int(self.nz))

    @classmethod
    def from_extent(
        cls, x_min: float, x_max: float, z_min: float, z_max: float, dx: float, dz: float
    ) -> "Grid2D":
        """按物理范围创建网格

        节点数取 round(范围 / 步长) + 1，末节点可能与给定上界有亚步长偏差。

        Args:
            x_min: 横向下界（米）
            x_max: 横向上界（米）
            z_min: 轴向下界（米）
            z_max: 轴向上界（米）
            dx: 横向步长（米）
            dz: 轴向步长（米）

        Returns:
            Grid2D 对象
        """
        if dx <= 0 or dz <= 0:
            raise GeometryError(f"网格步长必须为正: dx={dx}, dz={dz}")
        nx = int(round((x_max - x_min) / dx)) + 1
        nz = int(round((z_max - z_min) / dz)) + 1
        return cls(origin_x=x_min, origin_z=z_min, dx=dx, dz=dz, nx=nx, nz=nz)

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.nx, self.nz)

    @property
    def x(self) -> np.ndarray:
        """横向节点坐标"""
        return self.origin_x + np.arange(self.nx) * self.dx

    @property
    def z(self) -> np.ndarray:
        """轴向节点坐标"""
        return self.origin_z + np.arange(self.nz) * self.dz

    @property
    def x_max(self) -> float:
        return self.origin_x + (self.nx - 1) * self.dx

    @property
    def z_max(self) -> float:
        return self.origin_z + (self.nz - 1) * self.dz

    def mesh(self) -> Tuple[np.ndarray, np.ndarray]:
        """返回形状为 (nx, nz) 的节点坐标网格 (X, Z)"""
        return np.meshgrid(self.x, self.z, indexing="ij")

    def contains(self, x: ArrayLike, z: ArrayLike) -> Union[bool, np.ndarray]:
        """判断物理位置是否位于网格范围内（含边界）"""
        fi, fk = world_to_index(self, x, z)
        tol = _INDEX_TOLERANCE
        inside = (
            (fi >= -tol) & (fi <= self.nx - 1 + tol) & (fk >= -tol) & (fk <= self.nz - 1 + tol)
        )
        return bool(inside) if np.ndim(inside) == 0 else inside

    def contains_grid(self, other: "Grid2D") -> bool:
        """判断另一网格是否完全位于本网格范围内"""
        corners_x = np.array([other.origin_x, other.x_max])
        corners_z = np.array([other.origin_z, other.z_max])
        cx, cz = np.meshgrid(corners_x, corners_z)
        return bool(np.all(self.contains(cx, cz)))

    def extent_text(self) -> str:
        """网格范围的可读描述"""
        return (
            f"x∈[{self.origin_x:.6g}, {self.x_max:.6g}] m, "
            f"z∈[{self.origin_z:.6g}, {self.z_max:.6g}] m"
        )


@dataclass(frozen=True, eq=False)
class SosMap:
    """声速图

    Attributes:
        grid: 声速采样网格
        c: 形状 (nx, nz) 的声速值（m/s），只读
    """

    grid: Grid2D
    c: np.ndarray

    def __post_init__(self):
        c = np.array(self.c, dtype=np.float64)
        if c.shape != self.grid.shape:
            raise MediumError(f"声速图形状 {c.shape} 与网格形状 {self.grid.shape} 不一致")
        if not np.all(np.isfinite(c)):
            raise MediumError("声速图包含非有限值")
        c_min, c_max = float(c.min()), float(c.max())
        if c_min < SOS_MIN or c_max > SOS_MAX:
            raise MediumError(
                f"声速超出 [{SOS_MIN:g}, {SOS_MAX:g}] m/s 范围: 最小 {c_min:.1f}, 最大 {c_max:.1f}"
            )
        c.setflags(write=False)
        object.__setattr__(self, "c", c)

    @classmethod
    def homogeneous(cls, grid: Grid2D, c: float = C_REF) -> "SosMap":
        """创建均匀声速图"""
        return cls(grid=grid, c=np.full(grid.shape, float(c)))

    @property
    def c_min(self) -> float:
        return float(self.c.min())

    @property
    def c_max(self) -> float:
        return float(self.c.max())

    def sample(self, x: ArrayLike, z: ArrayLike) -> ArrayLike:
        """在任意位置双线性采样声速"""
        return sample_bilinear(self.c, self.grid, x, z)


@dataclass(frozen=True)
class TransducerArray:
    """线阵换能器

    阵元位于 z = 0，横向以 pitch 等间距排列并以 x = 0 为中心。

    Attributes:
        n_elements: 阵元数
        pitch: 阵元间距（米）
        f0: 中心频率（Hz）
        c_ref: 参考声速（m/s）
    """

    n_elements: int
    pitch: float
    f0: float
    c_ref: float = C_REF
    element_x: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n_elements < 2:
            raise GeometryError(f"阵元数必须不少于 2: {self.n_elements}")
        if not self.pitch > 0:
            raise GeometryError(f"阵元间距必须为正: {self.pitch}")
        if not self.f0 > 0:
            raise GeometryError(f"中心频率必须为正: {self.f0}")
        if not self.c_ref > 0:
            raise GeometryError(f"参考声速必须为正: {self.c_ref}")
        object.__setattr__(self, "n_elements", int(self.n_elements))
        element_x = (np.arange(self.n_elements) - (self.n_elements - 1) / 2.0) * self.pitch
        element_x.setflags(write=False)
        object.__setattr__(self, "element_x", element_x)

    @property
    def element_z(self) -> np.ndarray:
        return np.zeros(self.n_elements)

    @property
    def wavelength(self) -> float:
        """参考声速下的波长（米）"""
        return self.c_ref / self.f0

    @property
    def width(self) -> float:
        """首末阵元中心间距（米）"""
        return (self.n_elements - 1) * self.pitch

    def nearest_element(self, x: ArrayLike) -> np.ndarray:
        """返回距横向位置最近的阵元索引"""
        idx = np.rint((np.asarray(x) - self.element_x[0]) / self.pitch).astype(np.int64)
        return np.clip(idx, 0, self.n_elements - 1)


def world_to_index(grid: Grid2D, x: ArrayLike, z: ArrayLike) -> Tuple[ArrayLike, ArrayLike]:
    """物理坐标转换为小数索引（不做截断）

    Args:
        grid: 网格
        x: 横向坐标（米）
        z: 轴向坐标（米）

    Returns:
        (i, k) 小数索引
    """
    return (np.subtract(x, grid.origin_x) / grid.dx, np.subtract(z, grid.origin_z) / grid.dz)


def index_to_world(grid: Grid2D, i: ArrayLike, k: ArrayLike) -> Tuple[ArrayLike, ArrayLike]:
    """小数索引转换为物理坐标"""
    return (grid.origin_x + np.multiply(i, grid.dx), grid.origin_z + np.multiply(k, grid.dz))


def sample_bilinear(values: np.ndarray, grid: Grid2D, x: ArrayLike, z: ArrayLike) -> ArrayLike:
    """在网格上双线性插值

    Args:
        values: 形状 (nx, nz) 的节点值
        grid: 节点网格
        x: 横向查询坐标（米），标量或数组
        z: 轴向查询坐标（米），与 x 同形状

    Returns:
        插值结果，与查询坐标同形状

    Raises:
        OutOfBoundsError: 查询点位于网格范围外
    """
    if values.shape != grid.shape:
        raise GeometryError(f"采样数组形状 {values.shape} 与网格形状 {grid.shape} 不一致")
    x_arr, z_arr = np.broadcast_arrays(np.asarray(x, dtype=np.float64),
                                       np.asarray(z, dtype=np.float64))
    fi, fk = world_to_index(grid, x_arr, z_arr)
    tol = _INDEX_TOLERANCE
    outside = (fi < -tol) | (fi > grid.nx - 1 + tol) | (fk < -tol) | (fk > grid.nz - 1 + tol)
    outside |= ~(np.isfinite(fi) & np.isfinite(fk))
    if np.any(outside):
        first = np.flatnonzero(outside.ravel())[0]
        raise OutOfBoundsError(
            float(x_arr.ravel()[first]), float(z_arr.ravel()[first]), grid.extent_text()
        )
    fi = np.clip(fi, 0.0, grid.nx - 1)
    fk = np.clip(fk, 0.0, grid.nz - 1)
    coords = np.stack([fi.ravel(), fk.ravel()])
    out = map_coordinates(values, coords, order=1, mode="nearest").reshape(fi.shape)
    return float(out) if out.ndim == 0 else out


def make_array(
    n_elements: int, pitch: float, f0: float, c_ref: float = C_REF
) -> TransducerArray:
    """创建以原点为中心的线阵

    Args:
        n_elements: 阵元数（≥ 2）
        pitch: 阵元间距（米）
        f0: 中心频率（Hz）
        c_ref: 参考声速（m/s）

    Returns:
        TransducerArray 对象

    Raises:
        GeometryError: 参数非正
    """
    return TransducerArray(n_elements=n_elements, pitch=pitch, f0=f0, c_ref=c_ref)
