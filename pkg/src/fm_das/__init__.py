"""
FM-DAS - 折射校正超声波束形成工具

在快速行进法求解的程函方程旅行时之上实现延迟叠加（DAS）波束形成，
并与常规恒定声速 DAS 在脂肪层像差仿体上进行几何失真分数和 gCNR 的对比。
"""

__version__ = "0.1.0"
__author__ = "FM-DAS Team"
__license__ = "MIT"
