"""
CLI 入口模块

定义命令行接口和子命令（使用 argparse 标准库）。
标准输出不写任何内容，进度与诊断信息写入标准错误，结果写入文件。
"""

import argparse
import logging
import sys
import time
from pathlib import Path
from typing import List, Optional

from fm_das import __version__
from fm_das.config import PRESETS, ConfigManager, PipelineConfig
from fm_das.errors import ConfigError, handle_error
from fm_das.logger import setup_logger

logger = logging.getLogger(__name__)

METHOD_CHOICES = ["das", "fm-das"]


class ChineseHelpFormatter(argparse.RawDescriptionHelpFormatter):
    """中文化的帮助信息格式器"""

    def _format_usage(self, usage, actions, groups, prefix):
        if prefix is None:
            prefix = "用法: "
        return super()._format_usage(usage, actions, groups, prefix)


def _common_parser() -> argparse.ArgumentParser:
    """各子命令共享的参数"""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, metavar="FILE", help="YAML 配置文件路径")
    common.add_argument(
        "--preset",
        choices=PRESETS,
        default=None,
        help="未指定 --config 时使用的预设 (默认: desk)",
    )
    common.add_argument("--seed", type=int, metavar="U64", help="随机种子（覆盖配置）")
    common.add_argument("--threads", type=int, metavar="N", help="工作线程数，1 为确定性串行路径")
    common.add_argument("--out", type=str, metavar="DIR", help="输出目录（覆盖配置）")
    common.add_argument("-v", "--verbose", action="store_true", help="输出调试日志")
    common.add_argument("-q", "--quiet", action="store_true", help="不显示进度条")
    return common


def create_parser() -> argparse.ArgumentParser:
    """创建主解析器和子命令解析器

    Returns:
        配置好的 ArgumentParser 对象
    """
    parser = argparse.ArgumentParser(
        prog="fmdas",
        description="FM-DAS - 折射校正超声波束形成工具\n\n"
        "在脂肪层像差仿体上对比常规恒定声速 DAS 与基于快速行进旅行时的 FM-DAS，\n"
        "并以几何失真分数（GDS）和 gCNR 量化成像质量。",
        formatter_class=ChineseHelpFormatter,
        add_help=True,
    )

    parser.add_argument(
        "--version",
        action="version",
        version=f"FM-DAS version {__version__}",
        help="显示版本号",
    )

    common = _common_parser()
    subparsers = parser.add_subparsers(title="可用命令", dest="command", help="子命令帮助信息")

    # phantom 子命令
    phantom_parser = subparsers.add_parser(
        "phantom",
        parents=[common],
        help="生成场景仿体包（声速图、散射子、登记表）",
        description="生成场景仿体包（声速图、散射子、登记表）",
        formatter_class=ChineseHelpFormatter,
    )
    phantom_parser.add_argument(
        "--scenario", required=True, metavar="ID", help="场景编号 (M1, M2, M3, M4)"
    )

    # rfsim 子命令
    rfsim_parser = subparsers.add_parser(
        "rfsim",
        parents=[common],
        help="由仿体包合成聚焦发射射频数据",
        description="由仿体包合成聚焦发射射频数据，写出 rf.eikf",
        formatter_class=ChineseHelpFormatter,
    )
    rfsim_parser.add_argument("--phantom", required=True, metavar="DIR", help="仿体包目录")
    rfsim_parser.add_argument(
        "--truth-model",
        choices=["fm_true_sos", "geometric_constant_c"],
        default=None,
        help="真值延迟模型（覆盖配置）",
    )
    rfsim_parser.add_argument("--noise-std", type=float, metavar="STD", help="加性噪声标准差")

    # solve-times 子命令
    solve_parser = subparsers.add_parser(
        "solve-times",
        parents=[common],
        help="求解旅行时场并逐源点写出栅格（调试用）",
        description="求解旅行时场并逐源点写出栅格（调试用）",
        formatter_class=ChineseHelpFormatter,
    )
    solve_parser.add_argument(
        "--sos", metavar="FILE", help="声速栅格，缺省时使用配置网格上的均匀介质"
    )
    solve_parser.add_argument("--elements", action="store_true", help="以全部阵元位置为源点")
    solve_parser.add_argument(
        "--source",
        nargs=2,
        type=float,
        action="append",
        metavar=("X", "Z"),
        help="源点坐标（米），可重复指定",
    )

    # beamform 子命令
    beamform_parser = subparsers.add_parser(
        "beamform",
        parents=[common],
        help="对射频数据执行 DAS 或 FM-DAS 波束形成",
        description="对射频数据执行 DAS 或 FM-DAS 波束形成，写出图像栅格和 PGM",
        formatter_class=ChineseHelpFormatter,
    )
    beamform_parser.add_argument("--rf", required=True, metavar="FILE", help="射频文件 (.eikf)")
    beamform_parser.add_argument(
        "--method", choices=METHOD_CHOICES, default="das", help="波束形成方法 (默认: das)"
    )
    beamform_parser.add_argument("--sos", metavar="FILE", help="声速栅格（fm-das 必需）")
    beamform_parser.add_argument(
        "--dump-delay",
        nargs=2,
        type=int,
        metavar=("J", "I"),
        help="额外写出第 J 次发射、第 I 个阵元的往返延迟栅格",
    )

    # metrics 子命令
    metrics_parser = subparsers.add_parser(
        "metrics",
        parents=[common],
        help="按仿体登记表计算图像的 GDS 与 gCNR",
        description="按仿体登记表计算图像的 GDS 与 gCNR",
        formatter_class=ChineseHelpFormatter,
    )
    metrics_parser.add_argument("--image", required=True, metavar="DIR", help="图像目录")
    metrics_parser.add_argument("--phantom", required=True, metavar="DIR", help="仿体包目录")
    metrics_parser.add_argument("--label", metavar="NAME", help="报告中的方法名（默认取图像目录名）")

    # pipeline 子命令
    pipeline_parser = subparsers.add_parser(
        "pipeline",
        parents=[common],
        help="执行完整对比流水线",
        description="执行完整对比流水线: 仿体 → 射频仿真 → 两种波束形成 → 指标 → 报告",
        formatter_class=ChineseHelpFormatter,
    )
    pipeline_parser.add_argument(
        "--scenarios", nargs="+", metavar="ID", help="参与对比的场景（覆盖配置）"
    )
    pipeline_parser.add_argument(
        "--methods", nargs="+", choices=METHOD_CHOICES, help="参与对比的方法（覆盖配置）"
    )

    return parser


def load_config(args: argparse.Namespace, extra: Optional[dict] = None) -> PipelineConfig:
    """按 预设/配置文件 → 命令行覆盖项 的顺序加载并验证配置

    Args:
        args: 解析后的命令行参数
        extra: 额外覆盖项（点号分隔路径）

    Returns:
        已验证的配置对象

    Raises:
        ConfigError: 配置无效
    """
    manager = ConfigManager()
    if args.config:
        config = manager.load_from_file(Path(args.config))
    else:
        config = manager.load_from_defaults(args.preset or "desk")

    overrides = {"seed": args.seed, "threads": args.threads, "output_dir": args.out}
    overrides.update(extra or {})
    config = manager.apply_overrides(config, overrides)
    manager.validate_or_raise(config, config_file=args.config)
    return config


def _progress(args: argparse.Namespace) -> bool:
    return not args.quiet


def cmd_phantom(args: argparse.Namespace) -> int:
    """执行 phantom 命令

    Args:
        args: 解析后的命令行参数

    Returns:
        退出码（0 表示成功）
    """
    from fm_das.phantom import build_scenario, save_phantom

    config = load_config(args)
    out_dir = Path(args.out) if args.out else Path(config.output_dir) / "phantoms" / args.scenario

    logger.info(f"🧪 生成仿体 {args.scenario}（种子 {config.seed}）")
    phantom = build_scenario(args.scenario, config.seed, config.build_layout())
    paths = save_phantom(phantom, out_dir)
    for path in paths.values():
        logger.info(f"✓ {path}")
    return 0


def cmd_rfsim(args: argparse.Namespace) -> int:
    """执行 rfsim 命令"""
    from fm_das.formats import write_rf
    from fm_das.phantom import load_phantom
    from fm_das.rfsim import simulate_rf

    extra = {"sim.truth_delay_model": args.truth_model, "sim.noise_std": args.noise_std}
    config = load_config(args, extra)
    out_dir = Path(config.output_dir)

    phantom = load_phantom(Path(args.phantom))
    array = config.build_array()
    events = config.transmit.to_events(array)
    logger.info(
        f"📡 射频仿真 {phantom.scenario}: {len(events)} 次发射, {array.n_elements} 阵元, "
        f"真值模型 {config.sim.truth_delay_model}"
    )
    rf = simulate_rf(
        phantom, array, events, config.build_pulse(), config.build_sim_config(),
        fm_cfg=config.eikonal.to_fm_config(), threads=config.threads, progress=_progress(args),
    )
    rf_path = out_dir / "rf.eikf"
    write_rf(rf_path, rf)
    logger.info(f"✓ {rf_path} ({rf.n_samples} 采样点, fs = {rf.fs:.4g} Hz)")
    return 0


def cmd_solve_times(args: argparse.Namespace) -> int:
    """执行 solve-times 命令"""
    from fm_das.eikonal import solve_many
    from fm_das.formats import read_raster, write_raster
    from fm_das.medium import SosMap

    config = load_config(args)
    out_dir = Path(config.output_dir)

    if args.sos:
        grid, c = read_raster(Path(args.sos))
        sos = SosMap(grid=grid, c=c)
    else:
        sos = SosMap.homogeneous(config.build_grid(), config.array.c_ref)

    names: List[str] = []
    sources = []
    if args.elements:
        array = config.build_array()
        for i, x in enumerate(array.element_x):
            names.append(f"tt_element_{i:03d}.eikr")
            sources.append((float(x), 0.0))
    for k, (x, z) in enumerate(args.source or []):
        names.append(f"tt_source_{k:03d}.eikr")
        sources.append((x, z))
    if not sources:
        raise ConfigError("需要 --elements 或至少一个 --source X Z")

    logger.info(f"⏱  求解 {len(sources)} 个旅行时场，网格 {sos.grid.nx} × {sos.grid.nz}")
    start = time.perf_counter()
    fields = solve_many(
        sos, sources, config.eikonal.to_fm_config(), threads=config.threads,
        progress=_progress(args),
    )
    elapsed = time.perf_counter() - start
    for name, field in zip(names, fields):
        write_raster(out_dir / name, field.grid, field.t)
    logger.info(f"✓ {len(fields)} 个栅格写入 {out_dir}，平均 {elapsed / len(fields):.3f} s/次")
    return 0


def cmd_beamform(args: argparse.Namespace) -> int:
    """执行 beamform 命令"""
    from fm_das.beamform import beamform_image
    from fm_das.delays import build_delay_tables
    from fm_das.formats import read_raster, read_rf, write_raster
    from fm_das.medium import SosMap
    from fm_das.pipeline import make_provider, save_image

    config = load_config(args)
    out_dir = Path(config.output_dir)

    rf = read_rf(Path(args.rf))
    sos = None
    if args.sos:
        grid, c = read_raster(Path(args.sos))
        sos = SosMap(grid=grid, c=c)

    pixel_grid = config.build_pixel_grid()
    provider = make_provider(
        args.method, config, rf, sos, threads=config.threads, progress=_progress(args)
    )
    logger.info(
        f"🔊 波束形成 ({args.method}): {rf.n_transmits} 次发射, 像素网格 "
        f"{pixel_grid.nx} × {pixel_grid.nz}"
    )
    image = beamform_image(
        rf, provider, config.apodization.to_spec(), pixel_grid,
        dynamic_range_db=config.apodization.dynamic_range_db,
        threads=config.threads,
        progress=_progress(args),
        deterministic=config.deterministic,
        cache_size=config.eikonal.cache_size,
    )
    paths = save_image(image, out_dir)
    for path in paths.values():
        logger.info(f"✓ {path}")

    if args.dump_delay:
        j, i = args.dump_delay
        if not (0 <= j < rf.n_transmits and 0 <= i < rf.array.n_elements):
            raise ConfigError(
                f"--dump-delay 索引越界: J={j} (0..{rf.n_transmits - 1}), "
                f"I={i} (0..{rf.array.n_elements - 1})"
            )
        tables = build_delay_tables(rf.events, rf.array, pixel_grid, provider, cache_size=2)
        delay_path = out_dir / f"delay_j{j:03d}_i{i:03d}.eikr"
        write_raster(delay_path, pixel_grid, tables.delay(j, i))
        logger.info(f"✓ {delay_path}")
    return 0


def cmd_metrics(args: argparse.Namespace) -> int:
    """执行 metrics 命令"""
    from fm_das.metrics import compare_report, write_gds_diagnostics
    from fm_das.phantom import load_registry
    from fm_das.pipeline import DIAGNOSTICS_FILE, REPORT_FILE, evaluate_image, load_image

    config = load_config(args)
    out_dir = Path(config.output_dir)

    image_dir = Path(args.image)
    image = load_image(image_dir, config.apodization.dynamic_range_db)
    registry = load_registry(Path(args.phantom))
    label = args.label or image_dir.name

    result = evaluate_image(config, image, registry)
    results = {(label, registry.scenario): result}
    compare_report(results, out_dir / REPORT_FILE)
    write_gds_diagnostics(out_dir / DIAGNOSTICS_FILE, results)

    logger.info(f"📊 {label} / {registry.scenario}: 平均 GDS = {result.gds.mean:.2f}")
    for cyst, rep in sorted(result.gcnr.items()):
        logger.info(f"   gCNR {cyst} = {rep.gcnr:.3f}")
    logger.info(f"✓ {out_dir / REPORT_FILE}")
    return 0


def cmd_pipeline(args: argparse.Namespace) -> int:
    """执行 pipeline 命令"""
    from fm_das.pipeline import PipelineOrchestrator

    extra = {"scenarios": args.scenarios, "methods": args.methods}
    config = load_config(args, extra)

    logger.info("🚀 FM-DAS 对比流水线")
    logger.info(
        f"   预设 {config.preset}, 场景 {', '.join(config.scenarios)}, "
        f"方法 {', '.join(config.methods)}, 线程 {config.threads}"
    )
    orchestrator = PipelineOrchestrator(config, progress=_progress(args))
    try:
        orchestrator.run()
    finally:
        orchestrator.print_summary()
    logger.info(f"✨ 完成，输出目录: {config.output_dir}")
    return 0


COMMANDS = {
    "phantom": cmd_phantom,
    "rfsim": cmd_rfsim,
    "solve-times": cmd_solve_times,
    "beamform": cmd_beamform,
    "metrics": cmd_metrics,
    "pipeline": cmd_pipeline,
}


def main(argv: Optional[List[str]] = None) -> int:
    """主入口函数

    Args:
        argv: 命令行参数（默认取 sys.argv）

    Returns:
        退出码（0 成功，2 配置错误，3 阶段失败）
    """
    parser = create_parser()
    args = parser.parse_args(argv)

    # 如果没有指定子命令，显示帮助信息
    if not args.command:
        parser.print_help(sys.stderr)
        return 0

    if args.command == "beamform" and args.method == "fm-das" and not args.sos:
        parser.error("--method fm-das 需要 --sos FILE")

    setup_logger("fm_das", console_level=logging.DEBUG if args.verbose else logging.INFO)

    handler = COMMANDS.get(args.command)
    if handler is None:
        parser.print_help(sys.stderr)
        return 1
    try:
        return handler(args)
    except KeyboardInterrupt as e:
        return handle_error(e, logger)
    except Exception as e:
        return handle_error(e, logger)


if __name__ == "__main__":
    sys.exit(main())
