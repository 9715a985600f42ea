#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
异常定义
尺度微积分库中所有模块共用的异常层次
"""

from typing import Optional


class ScaleCalculusError(Exception):
    """所有库异常的基类"""


class ExpressionError(ScaleCalculusError):
    """表达式相关错误"""


class ExpressionSyntaxError(ExpressionError):
    """
    表达式语法错误

    Args:
        message: 错误描述
        position: 出错字符在原文中的位置
    """
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (位置 {position})")
        self.position = position


class UnknownVariableError(ExpressionError):
    """未声明的变量"""


class DimensionError(ExpressionError):
    """变量分量下标超出声明维数"""


class EvaluationError(ExpressionError):
    """求值失败，例如除零或对零取对数"""


class NonDifferentiableError(ExpressionError):
    """在不可微点（abs 在 0 处）求导数值"""


class GridError(ScaleCalculusError):
    """网格相关错误"""


class GridAlignmentError(GridError):
    """ε、τ 或时间点不在网格上"""


class DomainError(GridError):
    """模板超出采样区间或区间过小"""


class ExtractionError(ScaleCalculusError):
    """外推提取 ⟨·⟩ 的输入不合法"""


class FunctionSpecError(ScaleCalculusError):
    """函数规格不合法"""


class ProblemSpecError(ScaleCalculusError):
    """
    问题规格文件错误

    Args:
        message: 错误描述
        key: 出错的键名
    """
    def __init__(self, message: str, key: Optional[str] = None):
        prefix = f"[{key}] " if key else ""
        super().__init__(f"{prefix}{message}")
        self.key = key


class InadmissibleError(ScaleCalculusError):
    """轨迹或变分不满足历史/端点约束"""


class OperatorFamilyError(ScaleCalculusError):
    """算子族定义不合法"""


class SolverError(ScaleCalculusError):
    """极值求解器错误"""


class NewtonConvergenceError(SolverError):
    """
    Newton 迭代未收敛

    Args:
        message: 错误描述
        iterations: 已执行迭代次数
        gradient_norm: 最后一次梯度范数
    """
    def __init__(self, message: str, iterations: int, gradient_norm: float):
        super().__init__(f"{message}: 迭代 {iterations} 次, 梯度范数 {gradient_norm:.3e}")
        self.iterations = iterations
        self.gradient_norm = gradient_norm


class SingularHessianError(SolverError):
    """离散 Hessian 奇异"""
