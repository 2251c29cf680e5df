"""流水线编排模块

该模块负责编排完整的对比流程:
- 逐场景生成仿体并写出仿体包
- 以真值延迟模型合成射频数据
- 对同一射频文件分别执行各波束形成方法
- 计算 GDS 与 gCNR 并生成对比报告
- 原子写出运行清单（配置哈希、版本、阶段耗时、输出哈希、求解计数）
- 打印运行摘要
"""

import hashlib
import json
import logging
import os
import time
from dataclasses import dataclass, field, asdict
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple, TypeVar

import numpy as np

from . import __version__
from .beamform import BeamformedImage, RfDataSet, beamform_image, preprocess_sos
from .config import ConfigManager, PipelineConfig
from .delays import DelayProvider, FmDelayProvider, GeometricDelayProvider
from .eikonal import solve_counter
from .errors import ConfigError, FmDasError, StageError
from .formats import read_raster, read_rf, write_pgm, write_raster, write_rf
from .logger import add_file_handler
from .medium import SosMap
from .metrics import MethodResult, compare_report, gcnr, gds, write_gds_diagnostics
from .phantom import Phantom, TargetRegistry, build_scenario, rasterize_regions, save_phantom
from .rfsim import simulate_rf

logger = logging.getLogger(__name__)

T = TypeVar("T")

MANIFEST_FILE = "manifest.json"
RUN_LOG_FILE = "run.log"
CONFIG_FILE = "config.yaml"
REPORT_FILE = "table.csv"
DIAGNOSTICS_FILE = "gds_diagnostics.yaml"

# 不参与确定性比较的文件（包含耗时）
UNHASHED_FILES = (MANIFEST_FILE, RUN_LOG_FILE)

IMAGE_FILES = {
    "rf_sum": "rf_sum.eikr",
    "envelope": "envelope.eikr",
    "log_db": "log_db.eikr",
    "pgm": "image.pgm",
}


class StageResult(Enum):
    """阶段结果枚举

    Attributes:
        SUCCESS: 阶段成功
        FAILED: 阶段失败
    """
    SUCCESS = "success"
    FAILED = "failed"


@dataclass
class StageReport:
    """阶段报告

    Attributes:
        stage: 阶段名称（如 rfsim:M3）
        result: 阶段结果
        seconds: 墙钟耗时
        outputs: 输出文件路径（相对输出目录）
        message: 描述信息
        solves: 本阶段执行的程函求解次数
    """
    stage: str
    result: StageResult
    seconds: float
    outputs: List[str] = field(default_factory=list)
    message: str = ""
    solves: int = 0

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["result"] = self.result.value
        return data


@dataclass
class RunManifest:
    """运行清单

    Attributes:
        config_hash: 配置哈希
        tool_version: 工具版本
        status: success 或 failed
        stages: 各阶段报告
        output_hashes: 输出文件（相对路径）到 sha256 的映射
        fm_solves: 各阶段程函求解次数
        fm_das_seconds: 各场景 FM-DAS 波束形成耗时
    """
    config_hash: str
    tool_version: str
    status: str = "success"
    stages: List[StageReport] = field(default_factory=list)
    output_hashes: Dict[str, str] = field(default_factory=dict)
    fm_solves: Dict[str, int] = field(default_factory=dict)
    fm_das_seconds: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "config_hash": self.config_hash,
            "tool_version": self.tool_version,
            "status": self.status,
            "stages": [s.to_dict() for s in self.stages],
            "output_hashes": dict(sorted(self.output_hashes.items())),
            "fm_solves": self.fm_solves,
            "fm_das_seconds": self.fm_das_seconds,
        }


def write_manifest(manifest: RunManifest, path: Path) -> None:
    """原子写出清单: 先写临时文件再重命名"""
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as f:
        json.dump(manifest.to_dict(), f, ensure_ascii=False, indent=2)
        f.write("\n")
    os.replace(tmp, path)


def hash_outputs(root: Path) -> Dict[str, str]:
    """计算输出目录内全部文件的 sha256（清单与运行日志除外）"""
    hashes = {}
    for path in sorted(p for p in root.rglob("*") if p.is_file()):
        rel = path.relative_to(root).as_posix()
        if rel in UNHASHED_FILES or rel.endswith(".tmp"):
            continue
        hashes[rel] = hashlib.sha256(path.read_bytes()).hexdigest()
    return hashes


def save_image(image: BeamformedImage, out_dir: Path) -> Dict[str, Path]:
    """写出图像: rf_sum、envelope、log_db 栅格及 PGM

    Returns:
        各文件路径
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {key: out_dir / name for key, name in IMAGE_FILES.items()}
    write_raster(paths["rf_sum"], image.pixel_grid, image.rf_sum)
    write_raster(paths["envelope"], image.pixel_grid, image.envelope)
    write_raster(paths["log_db"], image.pixel_grid, image.log_db)
    write_pgm(paths["pgm"], image.log_db, image.dynamic_range_db)
    return paths


def load_image(image_dir: Path, dynamic_range_db: float = 60.0) -> BeamformedImage:
    """读取 save_image 写出的图像目录（由包络重建对数图像）"""
    grid, envelope = read_raster(image_dir / IMAGE_FILES["envelope"])
    rf_sum_path = image_dir / IMAGE_FILES["rf_sum"]
    image = BeamformedImage.from_envelope(grid, envelope, dynamic_range_db)
    if rf_sum_path.exists():
        _, rf_sum = read_raster(rf_sum_path)
        image = BeamformedImage(
            pixel_grid=grid, rf_sum=rf_sum, envelope=image.envelope, log_db=image.log_db,
            dynamic_range_db=dynamic_range_db,
        )
    return image


def make_provider(
    method: str,
    config: PipelineConfig,
    rf: RfDataSet,
    sos: Optional[SosMap] = None,
    threads: int = 1,
    progress: bool = False,
) -> DelayProvider:
    """按方法名创建延迟提供者；fm-das 先对声速图做预处理

    Raises:
        ConfigError: fm-das 未提供声速图
    """
    if method == "das":
        return GeometricDelayProvider(rf.array, rf.events)
    if sos is None:
        raise ConfigError("fm-das 需要声速图")
    smoothed = preprocess_sos(sos, config.preprocess.median_radius, config.preprocess.smooth_sigma)
    return FmDelayProvider(
        smoothed, rf.array, rf.events, config.eikonal.to_fm_config(),
        threads=threads, progress=progress,
    )


def beamform_rf(
    method: str,
    config: PipelineConfig,
    rf: RfDataSet,
    sos: Optional[SosMap] = None,
    progress: bool = False,
) -> BeamformedImage:
    """以指定方法对射频数据成像"""
    provider = make_provider(method, config, rf, sos, threads=config.threads, progress=progress)
    return beamform_image(
        rf, provider, config.apodization.to_spec(), config.build_pixel_grid(),
        dynamic_range_db=config.apodization.dynamic_range_db,
        threads=config.threads,
        progress=progress,
        deterministic=config.deterministic,
        cache_size=config.eikonal.cache_size,
    )


def evaluate_image(
    config: PipelineConfig, image: BeamformedImage, registry: TargetRegistry
) -> MethodResult:
    """按登记表计算 GDS 与每个囊肿的 gCNR"""
    gds_report = gds(
        image, registry.point_targets, config.wavelength, config.metrics.search_radius
    )
    masks = rasterize_regions(registry, image.pixel_grid)
    gcnr_reports = {
        label: gcnr(image, masks[label], masks[f"{label}_BG"], config.metrics.gcnr_bins)
        for label in registry.cyst_labels
        if f"{label}_BG" in masks
    }
    return MethodResult(gds=gds_report, gcnr=gcnr_reports)


class PipelineOrchestrator:
    """流水线编排器

    阶段顺序执行，阶段内并行由各模块按 threads 完成。任一阶段失败即中止，
    异常被包装为 StageError 并携带阶段名。

    Attributes:
        config: 流水线配置
        output_dir: 输出目录
        progress: 是否显示进度条
        reports: 已执行阶段的报告
    """

    def __init__(self, config: PipelineConfig, progress: bool = False):
        """初始化流水线编排器

        Args:
            config: 已验证的配置
            progress: 是否在标准错误显示进度条
        """
        self.config = config
        self.output_dir = Path(config.output_dir)
        self.progress = progress
        self.reports: List[StageReport] = []
        self.config_manager = ConfigManager()
        self.manifest = RunManifest(
            config_hash=self.config_manager.config_hash(config), tool_version=__version__
        )

    def _rel(self, path: Path) -> str:
        return path.relative_to(self.output_dir).as_posix()

    def _stage(self, name: str, fn: Callable[[], Tuple[T, List[Path]]]) -> T:
        """执行单个阶段并记录耗时、输出和求解次数"""
        logger.info(f"▶ {name}")
        solves_before = solve_counter.count
        start = time.perf_counter()
        try:
            value, outputs = fn()
        except KeyboardInterrupt:
            raise
        except Exception as e:
            seconds = time.perf_counter() - start
            message = e.message if isinstance(e, FmDasError) else str(e)
            self.reports.append(StageReport(
                stage=name, result=StageResult.FAILED, seconds=seconds, message=message,
                solves=solve_counter.count - solves_before,
            ))
            raise StageError(name, e) from e
        seconds = time.perf_counter() - start
        solves = solve_counter.count - solves_before
        self.reports.append(StageReport(
            stage=name, result=StageResult.SUCCESS, seconds=seconds,
            outputs=[self._rel(p) for p in outputs], message=f"{seconds:.2f} s",
            solves=solves,
        ))
        if solves:
            self.manifest.fm_solves[name] = solves
        logger.debug(f"{name} 完成: {seconds:.2f} s, {solves} 次程函求解")
        return value

    def run(self) -> RunManifest:
        """执行完整流水线

        Returns:
            RunManifest 对象

        Raises:
            StageError: 任一阶段失败
        """
        cfg = self.config
        out = self.output_dir
        out.mkdir(parents=True, exist_ok=True)
        pkg_logger = logging.getLogger("fm_das")
        handler = add_file_handler(pkg_logger, out / RUN_LOG_FILE)
        try:
            self.config_manager.save_to_file(cfg, out / CONFIG_FILE)
            self._run_stages()
            self.manifest.status = "success"
            return self.manifest
        except StageError:
            self.manifest.status = "failed"
            raise
        finally:
            self.manifest.stages = list(self.reports)
            self.manifest.output_hashes = hash_outputs(out)
            write_manifest(self.manifest, out / MANIFEST_FILE)
            pkg_logger.removeHandler(handler)
            handler.close()

    def _run_stages(self) -> Dict[Tuple[str, str], MethodResult]:
        cfg = self.config
        out = self.output_dir
        layout = cfg.build_layout()
        array = cfg.build_array()
        events = cfg.transmit.to_events(array)
        results: Dict[Tuple[str, str], MethodResult] = {}

        for scenario in cfg.scenarios:
            phantom_dir = out / "phantoms" / scenario

            def phantom_stage() -> Tuple[Phantom, List[Path]]:
                phantom = build_scenario(scenario, cfg.seed, layout)
                return phantom, list(save_phantom(phantom, phantom_dir).values())

            phantom = self._stage(f"phantom:{scenario}", phantom_stage)

            rf_path = out / "rf" / f"{scenario}.eikf"

            def rfsim_stage() -> Tuple[RfDataSet, List[Path]]:
                rf = simulate_rf(
                    phantom, array, events, cfg.build_pulse(), cfg.build_sim_config(),
                    fm_cfg=cfg.eikonal.to_fm_config(), threads=cfg.threads,
                    progress=self.progress,
                )
                write_rf(rf_path, rf)
                return read_rf(rf_path), [rf_path]

            rf = self._stage(f"rfsim:{scenario}", rfsim_stage)

            for method in cfg.methods:
                image_dir = out / "images" / method / scenario

                def beamform_stage() -> Tuple[BeamformedImage, List[Path]]:
                    image = beamform_rf(method, cfg, rf, phantom.sos, progress=self.progress)
                    return image, list(save_image(image, image_dir).values())

                start = time.perf_counter()
                image = self._stage(f"beamform:{method}:{scenario}", beamform_stage)
                if method == "fm-das":
                    self.manifest.fm_das_seconds[scenario] = time.perf_counter() - start

                results[(method, scenario)] = self._stage(
                    f"metrics:{method}:{scenario}",
                    lambda: (evaluate_image(cfg, image, phantom.registry), []),
                )

        report_path = out / "metrics" / REPORT_FILE
        diagnostics_path = out / "metrics" / DIAGNOSTICS_FILE

        def report_stage() -> Tuple[List[Dict[str, str]], List[Path]]:
            rows = compare_report(results, report_path)
            write_gds_diagnostics(diagnostics_path, results)
            return rows, [report_path, diagnostics_path]

        rows = self._stage("report", report_stage)
        for row in rows:
            gcnr_text = ", ".join(f"{k}={v}" for k, v in row.items() if k.startswith("gcnr_"))
            logger.info(f"  {row['method']:<7} {row['scenario']}: GDS={row['mean_gds']} {gcnr_text}")
        return results

    def print_summary(self) -> None:
        """打印运行摘要（写入标准错误）"""
        success = [r for r in self.reports if r.result == StageResult.SUCCESS]
        failed = [r for r in self.reports if r.result == StageResult.FAILED]

        logger.info("\n" + "=" * 60)
        logger.info("运行摘要")
        logger.info("=" * 60)

        if success:
            logger.info(f"\n✓ 成功 ({len(success)}):")
            for report in success:
                solves = f", {report.solves} 次求解" if report.solves else ""
                logger.info(f"  - {report.stage}: {report.seconds:.2f} s{solves}")

        if failed:
            logger.info(f"\n✗ 失败 ({len(failed)}):")
            for report in failed:
                logger.info(f"  - {report.stage}: {report.message}")

        logger.info("\n" + "=" * 60)
        total = float(np.sum([r.seconds for r in self.reports])) if self.reports else 0.0
        logger.info(f"总计: {len(self.reports)} 个阶段, {total:.2f} s")
        if self.manifest.fm_das_seconds:
            mean = float(np.mean(list(self.manifest.fm_das_seconds.values())))
            logger.info(f"  FM-DAS 平均耗时: {mean:.2f} s")
        logger.info("=" * 60 + "\n")
