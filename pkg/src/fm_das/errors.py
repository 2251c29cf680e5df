"""错误处理模块

定义自定义异常类和错误恢复建议。
"""

from typing import Optional, List, Sequence
from enum import Enum


class ExitCode(Enum):
    """退出码枚举"""
    SUCCESS = 0
    GENERAL_ERROR = 1
    CONFIG_ERROR = 2
    STAGE_FAILURE = 3
    USER_INTERRUPT = 130


class FmDasError(Exception):
    """FM-DAS 基础异常类"""

    def __init__(
        self,
        message: str,
        exit_code: ExitCode = ExitCode.GENERAL_ERROR,
        recovery_suggestions: Optional[List[str]] = None
    ):
        """初始化异常

        Args:
            message: 错误消息
            exit_code: 退出码
            recovery_suggestions: 恢复建议列表
        """
        super().__init__(message)
        self.message = message
        self.exit_code = exit_code
        self.recovery_suggestions = recovery_suggestions or []


class ConfigError(FmDasError):
    """配置错误"""

    def __init__(self, message: str, config_file: Optional[str] = None):
        """初始化配置错误

        Args:
            message: 错误消息
            config_file: 配置文件路径
        """
        full_message = f"配置错误: {message}"
        if config_file:
            full_message += f" (文件: {config_file})"

        recovery_suggestions = [
            "请检查配置文件格式是否正确。",
            "配置文件应为有效的 YAML 格式，长度单位为米，频率单位为赫兹。",
            "参考示例: docs/examples/desk.yaml",
        ]

        super().__init__(
            message=full_message,
            exit_code=ExitCode.CONFIG_ERROR,
            recovery_suggestions=recovery_suggestions
        )
        self.config_file = config_file


class ScenarioError(FmDasError):
    """未知场景错误"""

    def __init__(self, scenario_id: str, valid_ids: Sequence[str]):
        """初始化场景错误

        Args:
            scenario_id: 请求的场景编号
            valid_ids: 有效的场景编号列表
        """
        message = f"未知场景: {scenario_id}，有效场景: {', '.join(valid_ids)}"
        recovery_suggestions = [
            "有效场景:",
            "  - M1 无脂肪层",
            "  - M2 水平脂肪层",
            "  - M3 倾斜 10° 脂肪层",
            "  - M4 倾斜 25° 脂肪层",
        ]
        super().__init__(
            message=message,
            exit_code=ExitCode.CONFIG_ERROR,
            recovery_suggestions=recovery_suggestions
        )
        self.scenario_id = scenario_id
        self.valid_ids = list(valid_ids)


class GeometryError(FmDasError):
    """几何错误（网格、阵列、发射事件或像素网格无效）"""

    def __init__(self, message: str):
        """初始化几何错误

        Args:
            message: 错误消息
        """
        super().__init__(
            message=f"几何错误: {message}",
            exit_code=ExitCode.STAGE_FAILURE,
            recovery_suggestions=[
                "请检查网格范围、步长以及阵列孔径是否位于声速图范围内。",
            ]
        )


class OutOfBoundsError(GeometryError):
    """查询位置超出网格范围"""

    def __init__(self, x: float, z: float, extent: str):
        """初始化越界错误

        Args:
            x: 查询点横向坐标（米）
            z: 查询点轴向坐标（米）
            extent: 网格范围描述
        """
        super().__init__(f"位置 ({x:.6g}, {z:.6g}) m 超出网格范围 {extent}")
        self.x = x
        self.z = z


class MediumError(FmDasError):
    """声速图无效"""

    def __init__(self, message: str):
        """初始化介质错误

        Args:
            message: 错误消息
        """
        super().__init__(
            message=f"介质错误: {message}",
            exit_code=ExitCode.STAGE_FAILURE,
            recovery_suggestions=[
                "声速值必须为有限数且位于 [500, 5000] m/s 区间内。",
                "如果声速图来自文件，请确认文件未损坏。",
            ]
        )


class FormatError(FmDasError):
    """二进制文件格式错误"""

    def __init__(self, path: str, reason: str):
        """初始化格式错误

        Args:
            path: 文件路径
            reason: 失败原因
        """
        super().__init__(
            message=f"文件格式错误: {path} - {reason}",
            exit_code=ExitCode.STAGE_FAILURE,
            recovery_suggestions=[
                "请确认文件由 fmdas 生成且未被截断。",
                "栅格文件魔数应为 EIKR，射频文件魔数应为 EIKF。",
            ]
        )
        self.path = path
        self.reason = reason


class DataMismatchError(FmDasError):
    """射频数据与采集几何不一致"""

    def __init__(self, message: str):
        """初始化数据不一致错误

        Args:
            message: 错误消息
        """
        super().__init__(
            message=f"数据不一致: {message}",
            exit_code=ExitCode.STAGE_FAILURE,
            recovery_suggestions=[
                "请使用与射频数据相同的配置（阵元数、发射次数）重新运行。",
            ]
        )


class ImageError(FmDasError):
    """图像处理错误"""

    def __init__(self, message: str):
        """初始化图像错误

        Args:
            message: 错误消息
        """
        super().__init__(
            message=f"图像错误: {message}",
            exit_code=ExitCode.STAGE_FAILURE,
            recovery_suggestions=[
                "请确认射频数据非空且延迟覆盖了像素网格。",
            ]
        )


class MetricError(FmDasError):
    """指标计算错误"""

    def __init__(self, message: str):
        """初始化指标错误

        Args:
            message: 错误消息
        """
        super().__init__(
            message=f"指标错误: {message}",
            exit_code=ExitCode.STAGE_FAILURE,
            recovery_suggestions=[
                "评估区域必须互不重叠且各自至少包含 100 个像素。",
                "对比报告中的各方法必须覆盖相同的场景集合。",
            ]
        )


class StageError(FmDasError):
    """流水线阶段失败"""

    def __init__(self, stage: str, cause: BaseException):
        """初始化阶段错误

        Args:
            stage: 阶段名称
            cause: 原始异常
        """
        cause_message = cause.message if isinstance(cause, FmDasError) else str(cause)
        suggestions = [f"失败阶段: {stage}"]
        if isinstance(cause, FmDasError):
            suggestions.extend(cause.recovery_suggestions)
        exit_code = (
            ExitCode.CONFIG_ERROR
            if isinstance(cause, FmDasError) and cause.exit_code == ExitCode.CONFIG_ERROR
            else ExitCode.STAGE_FAILURE
        )
        super().__init__(
            message=f"阶段 '{stage}' 失败: {cause_message}",
            exit_code=exit_code,
            recovery_suggestions=suggestions
        )
        self.stage = stage
        self.cause = cause


def format_error_message(error: FmDasError) -> str:
    """格式化错误消息

    Args:
        error: 错误对象

    Returns:
        格式化后的错误消息
    """
    lines = [
        f"❌ 错误: {error.message}",
        ""
    ]

    if error.recovery_suggestions:
        lines.append("💡 恢复建议:")
        for suggestion in error.recovery_suggestions:
            lines.append(f"   {suggestion}")
        lines.append("")

    return "\n".join(lines)


def handle_error(error: BaseException, logger) -> int:
    """统一错误处理

    Args:
        error: 异常对象
        logger: 日志记录器

    Returns:
        退出码
    """
    if isinstance(error, FmDasError):
        logger.error(format_error_message(error))
        return error.exit_code.value
    elif isinstance(error, KeyboardInterrupt):
        logger.error("\n❌ 用户中断操作")
        return ExitCode.USER_INTERRUPT.value
    else:
        logger.error(f"❌ 发生未知错误: {error}")
        logger.debug("详细错误信息:", exc_info=True)
        return ExitCode.GENERAL_ERROR.value
