#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
问题规格文件
读取 YAML 格式的时滞变分问题与时滞最优控制问题，出错时指明键名
"""

import logging
import os
from dataclasses import dataclass
from typing import Any, Dict, Optional, Tuple, Union

import yaml

from libs.delay_variational import DelayProblem
from libs.errors import ExpressionError, FunctionSpecError, ProblemSpecError, ScaleCalculusError
from libs.expr_core import Dimensions, Expr, parse_expression
from libs.function_zoo import FunctionSpec, parse_function_spec
from libs.optimal_control import ControlProblem
from libs.scale_calculus import EpsilonSchedule

logger = logging.getLogger(__name__)

REQUIRED_KEYS = ("lagrangian", "tau", "t1", "t2", "history", "q2")


@dataclass
class ProblemFile:
    """
    已解析的问题规格文件

    Args:
        name: 问题名称
        kind: 'delay' 或 'control'
        problem: DelayProblem 或 ControlProblem
        h: 文件中给出的步长
        eps0: 文件中给出的 ε₀
        ratio: 文件中给出的公比
        levels: 文件中给出的层数
        trajectory: 候选轨迹（每个分量一个函数规格）
        control: 候选控制
        costate: 候选协态
        raw: 原始字典
    """
    name: str
    kind: str
    problem: Union[DelayProblem, ControlProblem]
    h: Optional[float] = None
    eps0: Optional[float] = None
    ratio: Optional[float] = None
    levels: Optional[int] = None
    trajectory: Optional[Tuple[FunctionSpec, ...]] = None
    control: Optional[Tuple[FunctionSpec, ...]] = None
    costate: Optional[Tuple[FunctionSpec, ...]] = None
    raw: Optional[Dict[str, Any]] = None


def read_problem_file(path: str) -> Dict[str, Any]:
    """
    读取 YAML 规格文件

    Raises:
        ProblemSpecError: 文件不可读、不是合法 YAML 或顶层不是映射
    """
    try:
        with open(path, 'r', encoding='utf-8') as f:
            raw = yaml.safe_load(f)
    except OSError as exc:
        logger.error(f"无法读取规格文件 {path}: {exc}")
        raise ProblemSpecError(f"无法读取规格文件 {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        logger.error(f"规格文件 {path} 不是合法 YAML: {exc}")
        raise ProblemSpecError(f"规格文件不是合法 YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ProblemSpecError(f"规格文件顶层必须是键值映射: {path}")
    return raw


def _number(raw: Dict[str, Any], key: str, default: Optional[float] = None) -> Optional[float]:
    if key not in raw or raw[key] is None:
        if default is None and key in REQUIRED_KEYS:
            raise ProblemSpecError("缺少必需的键", key)
        return default
    value = raw[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ProblemSpecError(f"必须是数值，实际为 {value!r}", key)
    return float(value)


def _integer(raw: Dict[str, Any], key: str, default: Optional[int]) -> Optional[int]:
    value = raw.get(key, default)
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise ProblemSpecError(f"必须是正整数，实际为 {value!r}", key)
    return value


def _text_list(raw: Dict[str, Any], key: str, count: int, required: bool = True):
    if key not in raw or raw[key] is None:
        if required:
            raise ProblemSpecError("缺少必需的键", key)
        return None
    value = raw[key]
    items = [value] if isinstance(value, (str, int, float)) and not isinstance(value, bool) else value
    if not isinstance(items, list) or len(items) != count:
        raise ProblemSpecError(f"需要 {count} 个分量，实际为 {value!r}", key)
    return [str(item) for item in items]


def _specs(raw: Dict[str, Any], key: str, count: int, required: bool = True) -> Optional[Tuple[FunctionSpec, ...]]:
    texts = _text_list(raw, key, count, required)
    if texts is None:
        return None
    try:
        return tuple(parse_function_spec(text) for text in texts)
    except FunctionSpecError as exc:
        logger.error(f"键 {key} 的函数规格非法: {exc}")
        raise ProblemSpecError(str(exc), key) from exc


def _expression(text: Any, key: str, dims: Dimensions) -> Expr:
    if not isinstance(text, str):
        raise ProblemSpecError(f"必须是表达式字符串，实际为 {text!r}", key)
    try:
        return parse_expression(text, dims)
    except ExpressionError as exc:
        logger.error(f"键 {key} 的表达式非法: {exc}")
        raise ProblemSpecError(str(exc), key) from exc


def _endpoint(raw: Dict[str, Any], d: int):
    value = raw.get("q2")
    if value is None:
        raise ProblemSpecError("缺少必需的键", "q2")
    items = value if isinstance(value, list) else [value]
    if len(items) != d or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in items):
        raise ProblemSpecError(f"需要 {d} 个数值，实际为 {value!r}", "q2")
    return [float(x) for x in items]


def parse_problem(raw: Dict[str, Any], source: str = "") -> ProblemFile:
    """
    由字典构造问题；含 phi 键时为控制问题

    Args:
        raw: 规格字典
        source: 来源（用于日志）

    Returns:
        ProblemFile

    Raises:
        ProblemSpecError: 任一键缺失或非法，异常的 key 属性为出错键名
    """
    d = _integer(raw, "d", 1)
    m = _integer(raw, "m", d)
    is_control = "phi" in raw
    dims = Dimensions(d, m)
    if "lagrangian" not in raw:
        raise ProblemSpecError("缺少必需的键", "lagrangian")
    lagrangian = _expression(raw["lagrangian"], "lagrangian", dims)
    tau = _number(raw, "tau")
    t1 = _number(raw, "t1")
    t2 = _number(raw, "t2")
    history = _specs(raw, "history", d)
    q2 = _endpoint(raw, d)
    h = _number(raw, "h", None)
    name = str(raw.get("name", os.path.splitext(os.path.basename(source))[0]))

    try:
        if is_control:
            phi_texts = _text_list(raw, "phi", d)
            phi = tuple(_expression(text, "phi", dims) for text in phi_texts)
            problem = ControlProblem(lagrangian, phi, tau, t1, t2, history, q2, d, m, h, name)
        else:
            problem = DelayProblem(lagrangian, tau, t1, t2, history, q2, d, h, name)
    except ProblemSpecError:
        raise
    except ExpressionError as exc:
        raise ProblemSpecError(str(exc), "phi" if is_control else "lagrangian") from exc
    except ScaleCalculusError as exc:
        raise ProblemSpecError(str(exc), "h") from exc

    result = ProblemFile(
        name=name,
        kind="control" if is_control else "delay",
        problem=problem,
        h=h,
        eps0=_number(raw, "epsilon0", None),
        ratio=_number(raw, "ratio", None),
        levels=_integer(raw, "levels", None),
        trajectory=_specs(raw, "trajectory", d, required=False),
        control=_specs(raw, "control", m, required=False) if is_control else None,
        costate=_specs(raw, "costate", d, required=False) if is_control else None,
        raw=raw,
    )
    logger.info(f"载入{'控制' if is_control else '时滞变分'}问题 {name}: τ={tau}, [{t1}, {t2}], d={d}")
    return result


def load_problem(path: str) -> ProblemFile:
    """
    读取并解析规格文件

    Args:
        path: YAML 文件路径

    Returns:
        ProblemFile
    """
    return parse_problem(read_problem_file(path), path)


def resolve_schedule(
    spec: ProblemFile,
    h: float,
    eps0: Optional[float] = None,
    ratio: Optional[float] = None,
    levels: Optional[int] = None,
    eps0_steps: int = 16,
    default_ratio: float = 0.5,
    default_levels: int = 5,
) -> EpsilonSchedule:
    """
    ε 序列：显式参数优先，其次文件中的值，最后是缺省值

    Raises:
        ProblemSpecError: ε 参数非法或与网格不对齐
    """
    eps0 = eps0 if eps0 is not None else (spec.eps0 if spec.eps0 is not None else eps0_steps * h)
    ratio = ratio if ratio is not None else (spec.ratio if spec.ratio is not None else default_ratio)
    levels = levels if levels is not None else (spec.levels if spec.levels is not None else default_levels)
    try:
        schedule = EpsilonSchedule(eps0, ratio, levels)
        schedule.steps(h)
    except ScaleCalculusError as exc:
        raise ProblemSpecError(str(exc), "epsilon0") from exc
    return schedule
