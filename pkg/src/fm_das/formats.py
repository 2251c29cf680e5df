"""文件格式模块

所有二进制格式均为小端序:

- EIKR 栅格: 魔数、版本、nx、nz、原点与步长，随后为 z 优先排列的 float32 数据
  （第 k 行为深度 k 处的全部 nx 个横向值）。用于声速图、旅行时场和图像。
- EIKF 射频: 魔数、版本、M、N_c、N_t、fs、t0，随后为采集几何块（阵列与发射事件），
  最后为按 [j][i][t] 排列的 float32 采样。
- PGM: 8 位二进制灰度图，按动态范围量化，一行对应一个深度。
- 散射子列表: 连续的 float32 (x, z, 反射率) 三元组。
"""

import struct
from pathlib import Path
from typing import List, Tuple

import numpy as np

from .errors import FormatError
from .medium import Grid2D

RASTER_MAGIC = b"EIKR"
RF_MAGIC = b"EIKF"
FORMAT_VERSION = 1

_RASTER_HEADER = struct.Struct("<4sIIIdddd")
_RF_HEADER = struct.Struct("<4sIIIIdd")
_ARRAY_BLOCK = struct.Struct("<Iddd")
_EVENT_BLOCK = struct.Struct("<IIdddd")


def write_raster(path: Path, grid: Grid2D, values: np.ndarray) -> None:
    """写出 EIKR 栅格文件

    Args:
        path: 目标路径
        grid: 网格
        values: 形状 (nx, nz) 的节点值
    """
    values = np.asarray(values)
    if values.shape != grid.shape:
        raise FormatError(str(path), f"数据形状 {values.shape} 与网格 {grid.shape} 不一致")
    path.parent.mkdir(parents=True, exist_ok=True)
    header = _RASTER_HEADER.pack(
        RASTER_MAGIC, FORMAT_VERSION, grid.nx, grid.nz,
        grid.origin_x, grid.origin_z, grid.dx, grid.dz,
    )
    payload = np.ascontiguousarray(values.T, dtype="<f4").tobytes()
    with open(path, "wb") as f:
        f.write(header)
        f.write(payload)


def read_raster(path: Path) -> Tuple[Grid2D, np.ndarray]:
    """读取 EIKR 栅格文件

    Returns:
        (网格, 形状 (nx, nz) 的 float64 数组)

    Raises:
        FormatError: 文件缺失、魔数或版本不符、数据截断
    """
    data = _read_bytes(path)
    if len(data) < _RASTER_HEADER.size:
        raise FormatError(str(path), "文件头不完整")
    magic, version, nx, nz, ox, oz, dx, dz = _RASTER_HEADER.unpack_from(data, 0)
    if magic != RASTER_MAGIC:
        raise FormatError(str(path), f"魔数 {magic!r} 不是 {RASTER_MAGIC!r}")
    if version != FORMAT_VERSION:
        raise FormatError(str(path), f"不支持的版本 {version}")
    expected = _RASTER_HEADER.size + 4 * nx * nz
    if len(data) != expected:
        raise FormatError(str(path), f"文件长度 {len(data)} 与期望 {expected} 不一致")
    values = np.frombuffer(data, dtype="<f4", offset=_RASTER_HEADER.size).reshape(nz, nx)
    grid = Grid2D(origin_x=ox, origin_z=oz, dx=dx, dz=dz, nx=nx, nz=nz)
    return grid, values.T.astype(np.float64)


def write_rf(path: Path, rf) -> None:
    """写出 EIKF 射频文件

    Args:
        path: 目标路径
        rf: RfDataSet 对象
    """
    m, n_c, n_t = rf.samples.shape
    array = rf.array
    parts = [
        _RF_HEADER.pack(RF_MAGIC, FORMAT_VERSION, m, n_c, n_t, rf.fs, rf.t0),
        _ARRAY_BLOCK.pack(array.n_elements, array.pitch, array.f0, array.c_ref),
    ]
    for ev in rf.events:
        parts.append(_EVENT_BLOCK.pack(
            ev.index, ev.aperture.size, ev.center[0], ev.center[1], ev.focus[0], ev.focus[1],
        ))
        parts.append(np.asarray(ev.aperture, dtype="<u4").tobytes())
        parts.append(np.asarray(ev.apodization, dtype="<f8").tobytes())
    parts.append(np.ascontiguousarray(rf.samples, dtype="<f4").tobytes())

    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        for part in parts:
            f.write(part)


def read_rf(path: Path):
    """读取 EIKF 射频文件

    Returns:
        RfDataSet 对象

    Raises:
        FormatError: 文件缺失、魔数或版本不符、数据截断
    """
    from .beamform import RfDataSet
    from .delays import TransmitEvent
    from .medium import TransducerArray

    data = _read_bytes(path)
    try:
        magic, version, m, n_c, n_t, fs, t0 = _RF_HEADER.unpack_from(data, 0)
        if magic != RF_MAGIC:
            raise FormatError(str(path), f"魔数 {magic!r} 不是 {RF_MAGIC!r}")
        if version != FORMAT_VERSION:
            raise FormatError(str(path), f"不支持的版本 {version}")
        offset = _RF_HEADER.size
        n_elements, pitch, f0, c_ref = _ARRAY_BLOCK.unpack_from(data, offset)
        offset += _ARRAY_BLOCK.size
        array = TransducerArray(n_elements=n_elements, pitch=pitch, f0=f0, c_ref=c_ref)

        events: List[TransmitEvent] = []
        for _ in range(m):
            index, n_ap, x_t, z_t, x_f, z_f = _EVENT_BLOCK.unpack_from(data, offset)
            offset += _EVENT_BLOCK.size
            aperture = np.frombuffer(data, dtype="<u4", count=n_ap, offset=offset)
            offset += 4 * n_ap
            apod = np.frombuffer(data, dtype="<f8", count=n_ap, offset=offset)
            offset += 8 * n_ap
            events.append(TransmitEvent(
                index=index, aperture=aperture.astype(np.int64), center=(x_t, z_t),
                focus=(x_f, z_f), apodization=apod.copy(),
            ))
    except struct.error as e:
        raise FormatError(str(path), f"文件头或几何块截断: {e}") from e
    except ValueError as e:
        raise FormatError(str(path), f"几何块截断: {e}") from e

    expected = offset + 4 * m * n_c * n_t
    if len(data) != expected:
        raise FormatError(str(path), f"文件长度 {len(data)} 与期望 {expected} 不一致")
    samples = np.frombuffer(data, dtype="<f4", offset=offset).reshape(m, n_c, n_t)
    return RfDataSet(
        samples=samples.astype(np.float64), fs=fs, t0=t0, array=array, events=tuple(events),
    )


def write_pgm(path: Path, log_db: np.ndarray, dynamic_range_db: float = 60.0) -> None:
    """写出 8 位 PGM 图像，0 dB 映射为 255，−DR 映射为 0

    Args:
        path: 目标路径
        log_db: 形状 (nx, nz) 的对数图像
        dynamic_range_db: 动态范围
    """
    scaled = (np.clip(log_db, -dynamic_range_db, 0.0) + dynamic_range_db) / dynamic_range_db
    pixels = np.rint(scaled * 255.0).astype(np.uint8).T
    nz, nx = pixels.shape
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(f"P5\n{nx} {nz}\n255\n".encode("ascii"))
        f.write(np.ascontiguousarray(pixels).tobytes())


def read_pgm(path: Path) -> np.ndarray:
    """读取 fmdas 写出的 PGM 图像，返回形状 (nx, nz) 的 uint8 数组"""
    data = _read_bytes(path)
    parts = data.split(b"\n", 3)
    if len(parts) != 4 or parts[0] != b"P5":
        raise FormatError(str(path), "不是二进制 PGM 文件")
    nx, nz = (int(v) for v in parts[1].split())
    pixels = np.frombuffer(parts[3], dtype=np.uint8)
    if pixels.size != nx * nz:
        raise FormatError(str(path), "像素数据截断")
    return pixels.reshape(nz, nx).T


def write_scatterers(path: Path, scatterers: np.ndarray) -> None:
    """写出散射子列表（float32 三元组）"""
    scatterers = np.asarray(scatterers).reshape(-1, 3)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(np.ascontiguousarray(scatterers, dtype="<f4").tobytes())


def read_scatterers(path: Path) -> np.ndarray:
    """读取散射子列表，返回形状 (K, 3) 的数组"""
    data = _read_bytes(path)
    if len(data) % 12 != 0:
        raise FormatError(str(path), f"文件长度 {len(data)} 不是 12 字节的整数倍")
    return np.frombuffer(data, dtype="<f4").reshape(-1, 3).copy()


def _read_bytes(path: Path) -> bytes:
    path = Path(path)
    if not path.exists():
        raise FormatError(str(path), "文件不存在")
    with open(path, "rb") as f:
        return f.read()
