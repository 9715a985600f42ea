#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
时滞变分问题
作用量泛函、经典/尺度时滞 Euler-Lagrange 残差、算子族嵌入、一致性检验、一阶变分以及直接转录极值求解器
"""

import logging
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import MatrixRankWarning, spsolve

from libs.errors import (
    DomainError,
    InadmissibleError,
    NewtonConvergenceError,
    OperatorFamilyError,
    ProblemSpecError,
    SingularHessianError,
)
from libs.expr_core import (
    Const,
    Dimensions,
    Expr,
    Neg,
    Variable,
    build_binding,
    check_dimensions,
    ensure_differentiable,
    evaluate,
    partial_derivative,
    to_text,
    variables,
)
from libs.function_zoo import FunctionSpec
from libs.scale_calculus import (
    ALIGNMENT_TOL,
    DEFAULT_ATOL,
    DEFAULT_RTOL,
    EpsilonSchedule,
    SampledFunction,
    field_norms,
    grid_steps,
    integrate_trapezoid,
    scale_derivative,
)

logger = logging.getLogger(__name__)

# [y]_τ(t) 的变量槽
SLOT_KINDS = ("q", "qdot", "qtau", "qdottau")
LAGRANGIAN_KINDS = ("t",) + SLOT_KINDS
REGIMES = ("first", "second")

# 轨迹即采样函数
Trajectory = SampledFunction


@dataclass
class DelayProblem:
    """
    时滞变分问题 min ∫_{t₁}^{t₂} L(t, q, q̇, q(t−τ), q̇(t−τ)) dt

    Args:
        lagrangian: 拉格朗日量 L
        tau: 时滞 τ，0 < τ < t₂ − t₁
        t1: 起点
        t2: 终点
        history: 每个分量在 [t₁−τ, t₁] 上的历史函数 δ
        q2: 终点值
        d: 状态维数
        h: 工作网格步长（可选）
        name: 问题名称
    """
    lagrangian: Expr
    tau: float
    t1: float
    t2: float
    history: Tuple[FunctionSpec, ...]
    q2: np.ndarray
    d: int = 1
    h: Optional[float] = None
    name: str = ""

    def __post_init__(self):
        self.q2 = np.atleast_1d(np.asarray(self.q2, dtype=float))
        self.history = tuple(self.history)
        if not self.tau > 0:
            raise ProblemSpecError(f"时滞必须为正: {self.tau}", "tau")
        if not self.t1 < self.t2:
            raise ProblemSpecError(f"要求 t1 < t2: t1={self.t1}, t2={self.t2}", "t2")
        if not self.tau < self.t2 - self.t1:
            raise ProblemSpecError(f"要求 τ < t₂ − t₁: τ={self.tau}", "tau")
        if len(self.history) != self.d:
            raise ProblemSpecError(f"历史函数个数 {len(self.history)} 与维数 {self.d} 不一致", "history")
        if self.q2.shape != (self.d,):
            raise ProblemSpecError(f"终点值维数 {self.q2.shape} 与 d={self.d} 不一致", "q2")
        check_dimensions(self.lagrangian, Dimensions(self.d, 1), LAGRANGIAN_KINDS)
        ensure_differentiable(self.lagrangian, SLOT_KINDS)
        if self.h is not None:
            self.check_grid(self.h)

    @property
    def dims(self) -> Dimensions:
        return Dimensions(self.d, 1)

    def check_grid(self, h: float) -> int:
        """校验 τ 与 t₂−t₁ 均为 h 的整数倍，返回 τ/h"""
        grid_steps(self.t2 - self.t1, h, "t2-t1")
        return grid_steps(self.tau, h, "tau")

    @cached_property
    def partials(self) -> Dict[Tuple[str, int], Expr]:
        """L 关于各变量槽的一阶偏导数"""
        result = {}
        for kind in SLOT_KINDS:
            for j in range(self.d):
                result[(kind, j)] = partial_derivative(self.lagrangian, Variable(kind, j))
        return result

    @cached_property
    def second_partials(self) -> Dict[Tuple[Tuple[str, int], Tuple[str, int]], Expr]:
        """L 的二阶偏导数"""
        result = {}
        for first, expr in self.partials.items():
            for kind in SLOT_KINDS:
                for j in range(self.d):
                    result[(first, (kind, j))] = partial_derivative(expr, Variable(kind, j))
        return result

    def partial(self, kind: str, j: int) -> Expr:
        return self.partials[(kind, j)]

    def history_values(self, t: np.ndarray, grid_step: Optional[float] = None) -> np.ndarray:
        """历史函数在时间 t 上的取值，形状 (n, d)"""
        return np.stack([spec.evaluate(t, grid_step) for spec in self.history], axis=1)


# ---------------------------------------------------------------------------
# 轨迹
# ---------------------------------------------------------------------------

def sample_trajectory(
    problem: DelayProblem,
    specs: Sequence[FunctionSpec],
    h: float,
    left_margin: float = 0.0,
    right_margin: float = 0.0,
) -> Trajectory:
    """
    采样与历史相容的轨迹：t ≤ t₁ 处取 δ，其余取 specs

    Args:
        problem: 时滞问题
        specs: 每个分量的函数规格
        h: 步长
        left_margin: t₁−τ 左侧保护区长度
        right_margin: t₂ 右侧保护区长度

    Returns:
        [t₁−τ−left_margin, t₂+right_margin] 上的轨迹
    """
    if len(specs) != problem.d:
        raise ProblemSpecError(f"轨迹分量数 {len(specs)} 与 d={problem.d} 不一致", "trajectory")
    problem.check_grid(h)
    left = grid_steps(left_margin, h, "left_margin") if left_margin > 0 else 0
    right = grid_steps(right_margin, h, "right_margin") if right_margin > 0 else 0
    i_t1 = left + int(round(problem.tau / h))
    n = i_t1 + int(round((problem.t2 - problem.t1) / h)) + right + 1
    start = problem.t1 - problem.tau - left * h
    t = start + h * np.arange(n)
    values = np.empty((n, problem.d), dtype=float)
    values[:i_t1 + 1] = problem.history_values(t[:i_t1 + 1], h)
    body = np.stack([spec.evaluate(t[i_t1 + 1:], h) for spec in specs], axis=1)
    values[i_t1 + 1:] = body
    jump = np.max(np.abs(np.stack([spec.evaluate(problem.t1, h) for spec in specs]) - values[i_t1]))
    if jump > 1e-12:
        logger.warning(f"轨迹在 t₁={problem.t1} 处与历史函数不连续，跳跃 {jump:.3e}")
    return SampledFunction(start, h, values)


def extend_with_history(problem: DelayProblem, q: Trajectory, margin: float) -> Trajectory:
    """
    在轨迹左侧补上 margin 长度的历史样本（历史函数在其定义域外按最近一段延拓）
    """
    if margin <= 0:
        return q
    k = grid_steps(margin, q.h, "margin")
    t = q.a - q.h * np.arange(k, 0, -1)
    prefix = problem.history_values(t, q.h)
    return SampledFunction(q.a - k * q.h, q.h, np.concatenate([prefix, q.values], axis=0))


def check_admissible(problem: DelayProblem, q: Trajectory, tol: float = 1e-12) -> None:
    """
    校验轨迹在 [t₁−τ, t₁] 上等于 δ，且 q(t₂) = q₂

    Raises:
        InadmissibleError: 不满足约束
    """
    if q.a > problem.t1 - problem.tau + ALIGNMENT_TOL * q.h:
        raise InadmissibleError(f"轨迹起点 {q.a} 晚于 t₁−τ={problem.t1 - problem.tau}")
    i0 = q.index_of(problem.t1 - problem.tau)
    i1 = q.index_of(problem.t1)
    t = q.times[i0:i1 + 1]
    deviation = np.max(np.abs(q.values[i0:i1 + 1] - problem.history_values(t, q.h)))
    if deviation > tol:
        logger.error(f"轨迹偏离历史函数 {deviation:.3e}")
        raise InadmissibleError(f"轨迹在 [t₁−τ, t₁] 上偏离 δ: {deviation:.3e} > {tol}")
    endpoint = np.max(np.abs(q.value_at(problem.t2) - problem.q2))
    if endpoint > tol:
        logger.error(f"轨迹终点偏离 q₂ {endpoint:.3e}")
        raise InadmissibleError(f"q(t₂) 偏离 q₂: {endpoint:.3e} > {tol}")


def _crop_at_t2(problem: DelayProblem, q: Trajectory) -> Trajectory:
    # t₂ 之后的样本从不参与残差计算
    if q.a > problem.t1 - problem.tau + ALIGNMENT_TOL * q.h:
        logger.error(f"轨迹起点 {q.a} 晚于 t₁−τ")
        raise DomainError(f"轨迹必须覆盖 [t₁−τ, t₂]，实际起点 {q.a!r}")
    return q.window(q.a, problem.t2)


# ---------------------------------------------------------------------------
# 求值算子 [q]_τ 与 [q]^□_τ
# ---------------------------------------------------------------------------

@dataclass
class Jet:
    """
    网格节点上的求值算子取值 (t, q, q̇ 或 □q, q(t−τ), q̇(t−τ) 或 □q(t−τ))

    Args:
        a: 首节点
        h: 步长
        binding: 变量绑定（数组）
        n: 节点数
        flags: 逐点收敛标志（尺度模式）
    """
    a: float
    h: float
    binding: Dict[Variable, np.ndarray]
    n: int
    flags: Optional[np.ndarray] = None

    @property
    def times(self) -> np.ndarray:
        return self.a + self.h * np.arange(self.n)

    def index_of(self, t: float) -> int:
        index = int(round((t - self.a) / self.h))
        if index < 0 or index >= self.n:
            raise DomainError(f"t={t!r} 超出求值区间 [{self.a!r}, {self.a + (self.n - 1) * self.h!r}]")
        return index

    def field(self, expr: Expr) -> np.ndarray:
        """在所有节点上求值，返回形状 (n,) 的复数组"""
        value = evaluate(expr, self.binding)
        return np.broadcast_to(np.asarray(value, dtype=complex), (self.n,)).copy()


def classical_jet(q: Trajectory, tau: float) -> Jet:
    """
    经典求值算子 [q]_τ，q̇ 用二阶中心差分（端点单侧）

    Returns:
        定义在 [q.a+τ, q.b] 上的 Jet
    """
    s = grid_steps(tau, q.h, "tau")
    if q.n <= s:
        raise DomainError("轨迹长度不足一个时滞")
    velocity = np.gradient(q.values, q.h, axis=0, edge_order=2)
    n = q.n - s
    binding = build_binding(
        t=q.times[s:],
        q=q.values[s:],
        qdot=velocity[s:],
        qtau=q.values[:n],
        qdottau=velocity[:n],
    )
    return Jet(q.a + s * q.h, q.h, binding, n)


def scale_jet(
    q: Trajectory,
    tau: float,
    schedule: EpsilonSchedule,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
) -> Jet:
    """
    尺度求值算子 [q]^□_τ

    Returns:
        定义在 [q.a+ε₀+τ, q.b−ε₀] 上的 Jet，flags 为 □q 在 t 与 t−τ 处均收敛
    """
    s = grid_steps(tau, q.h, "tau")
    k0 = grid_steps(schedule.eps0, q.h, "eps0")
    box, summary = scale_derivative(q, schedule, rtol, atol)
    m = box.n
    if m <= s:
        logger.error("轨迹长度不足以计算尺度求值算子")
        raise DomainError(f"尺度导数区间 [{box.a!r}, {box.b!r}] 短于时滞 τ={tau!r}")
    n = m - s
    binding = build_binding(
        t=box.times[s:],
        q=q.values[k0 + s:k0 + m],
        qdot=box.values[s:],
        qtau=q.values[k0:k0 + n],
        qdottau=box.values[:n],
    )
    converged = summary.point_converged
    return Jet(box.a + s * q.h, q.h, binding, n, converged[s:] & converged[:n])


# ---------------------------------------------------------------------------
# 残差报告
# ---------------------------------------------------------------------------

def norm_mask(t: np.ndarray, declared: Tuple[float, float], reach: float, h: float) -> np.ndarray:
    # 距声明区间端点不足 reach 的节点不计入范数
    slack = 0.5 * h
    return (t - declared[0] >= reach - slack) & (declared[1] - t >= reach - slack)


@dataclass
class IntervalResidual:
    """
    单个区间上的残差场

    Args:
        label: 'first' 即 [t₁, t₂−τ]，'second' 即 [t₂−τ, t₂]
        declared: 声明区间
        t: 节点
        values: 残差 (n, d)
        norm_mask: 计入范数的节点
        converged: 逐点收敛标志（经典模式为 None）
    """
    label: str
    declared: Tuple[float, float]
    t: np.ndarray
    values: np.ndarray
    norm_mask: np.ndarray
    h: float
    converged: Optional[np.ndarray] = None
    sup: float = field(init=False)
    l2: float = field(init=False)

    def __post_init__(self):
        self.sup, self.l2 = field_norms(self.values, self.h, self.norm_mask)

    @property
    def effective(self) -> Tuple[float, float]:
        if self.t.size == 0:
            return (float("nan"), float("nan"))
        return (float(self.t[0]), float(self.t[-1]))

    @property
    def converged_fraction(self) -> Optional[float]:
        if self.converged is None or self.converged.size == 0:
            return None
        return float(np.mean(self.converged))


@dataclass
class ResidualReport:
    """
    两区间残差报告

    Args:
        mode: classical / embedding / least_action
        intervals: 两个区间的残差
        schedule: ε 序列（尺度模式）
    """
    mode: str
    intervals: List[IntervalResidual]
    schedule: Optional[EpsilonSchedule] = None

    @property
    def sup(self) -> float:
        return max(interval.sup for interval in self.intervals)

    @property
    def l2(self) -> float:
        return float(np.sqrt(sum(interval.l2 ** 2 for interval in self.intervals)))

    def interval(self, label: str) -> IntervalResidual:
        for item in self.intervals:
            if item.label == label:
                return item
        raise KeyError(label)

    @property
    def effective_intervals(self) -> Dict[str, Tuple[float, float]]:
        return {item.label: item.effective for item in self.intervals}


def _declared(problem: DelayProblem) -> Dict[str, Tuple[float, float]]:
    junction = problem.t2 - problem.tau
    return {"first": (problem.t1, junction), "second": (junction, problem.t2)}


def _interval_from_field(
    label: str,
    declared: Tuple[float, float],
    a: float,
    h: float,
    values: np.ndarray,
    reach: float,
    converged: Optional[np.ndarray] = None,
) -> IntervalResidual:
    # 将 [a, ...] 上的场裁剪到声明区间
    t = a + h * np.arange(values.shape[0])
    keep = (t >= declared[0] - ALIGNMENT_TOL * h) & (t <= declared[1] + ALIGNMENT_TOL * h)
    t = t[keep]
    if t.size == 0:
        logger.error(f"区间 {label} 的有效部分为空")
        raise DomainError(f"区间 {label} {declared} 的有效部分为空（数据或保护区不足）")
    return IntervalResidual(
        label=label,
        declared=declared,
        t=t,
        values=values[keep],
        norm_mask=norm_mask(t, declared, reach, h),
        h=h,
        converged=None if converged is None else converged[keep],
    )


# ---------------------------------------------------------------------------
# 作用量
# ---------------------------------------------------------------------------

def _midpoint_binding(problem: DelayProblem, values: np.ndarray, h: float, s: int, start: float):
    # values 覆盖 [t₁−τ, t₂]；单元 c 位于节点 s+c 与 s+c+1 之间
    cells = values.shape[0] - 1 - s
    left, right = values[s:s + cells], values[s + 1:s + cells + 1]
    delayed_left, delayed_right = values[:cells], values[1:cells + 1]
    t_mid = start + h * (s + np.arange(cells) + 0.5)
    return build_binding(
        t=t_mid,
        q=0.5 * (left + right),
        qdot=(right - left) / h,
        qtau=0.5 * (delayed_left + delayed_right),
        qdottau=(delayed_right - delayed_left) / h,
    ), cells


def action_value(problem: DelayProblem, q: Trajectory, quadrature: str = "trapezoid", tol: float = 1e-12) -> float:
    """
    作用量 I^τ[q]

    Args:
        problem: 时滞问题
        q: 容许轨迹
        quadrature: 'trapezoid'（q̇ 为中心差分，节点梯形积分）或
            'midpoint'（单元中点，与直接转录求解器的离散作用量一致）

    Returns:
        实数作用量
    """
    check_admissible(problem, q, tol)
    q = _crop_at_t2(problem, q)
    if quadrature == "midpoint":
        s = grid_steps(problem.tau, q.h, "tau")
        origin = q.index_of(problem.t1 - problem.tau)
        values = q.values[origin:]
        binding, cells = _midpoint_binding(problem, values, q.h, s, q.times[origin])
        integrand = np.broadcast_to(evaluate(problem.lagrangian, binding), (cells,))
        total = q.h * np.sum(integrand)
    elif quadrature == "trapezoid":
        jet = classical_jet(q, problem.tau)
        integrand = SampledFunction(jet.a, jet.h, jet.field(problem.lagrangian))
        total = integrate_trapezoid(integrand, problem.t1, problem.t2)[0]
    else:
        raise ValueError(f"未知求积方式: {quadrature}")
    if abs(np.imag(total)) > 1e-12 * max(1.0, abs(total)):
        logger.warning(f"作用量含非零虚部 {np.imag(total):.3e}")
    return float(np.real(total))


def action_value_scale(
    problem: DelayProblem,
    q: Trajectory,
    schedule: EpsilonSchedule,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
) -> complex:
    """
    嵌入泛函 I^τ_□[q] = ∫ L([q]^□_τ(t)) dt，需要 t₂ 右侧 ε₀ 的保护样本
    """
    jet = scale_jet(q, problem.tau, schedule, rtol, atol)
    integrand = SampledFunction(jet.a, jet.h, jet.field(problem.lagrangian))
    return complex(integrate_trapezoid(integrand, problem.t1, problem.t2)[0])


# ---------------------------------------------------------------------------
# 经典 EL 残差
# ---------------------------------------------------------------------------

def _partial_fields(problem: DelayProblem, jet: Jet) -> Dict[Tuple[str, int], np.ndarray]:
    return {key: jet.field(expr) for key, expr in problem.partials.items()}


def classical_el_residual(problem: DelayProblem, q: Trajectory) -> ResidualReport:
    """
    经典时滞 Euler-Lagrange 残差
    [t₁, t₂−τ]: d/dt[L_q̇(t) + L_q̇τ(t+τ)] − [L_q(t) + L_qτ(t+τ)]
    [t₂−τ, t₂]: d/dt L_q̇(t) − L_q(t)

    Args:
        problem: 时滞问题
        q: 覆盖 [t₁−τ, t₂] 的轨迹

    Returns:
        ResidualReport
    """
    q = _crop_at_t2(problem, q)
    s = problem.check_grid(q.h)
    jet = classical_jet(q, problem.tau)
    i1, i2 = jet.index_of(problem.t1), jet.index_of(problem.t2)
    if i2 - s - i1 < 2 or s < 2:
        raise DomainError("每个区间至少需要 3 个节点")
    partials = _partial_fields(problem, jet)
    declared = _declared(problem)
    logger.info(f"经典 EL 残差: 区间 [{problem.t1}, {problem.t2}], τ={problem.tau}, h={q.h}")

    first = np.empty((i2 - s - i1 + 1, problem.d), dtype=complex)
    second = np.empty((s + 1, problem.d), dtype=complex)
    for j in range(problem.d):
        now = slice(i1, i2 - s + 1)
        ahead = slice(i1 + s, i2 + 1)
        momentum = partials[("qdot", j)][now] + partials[("qdottau", j)][ahead]
        force = partials[("q", j)][now] + partials[("qtau", j)][ahead]
        first[:, j] = np.gradient(momentum, q.h, edge_order=2) - force

        tail = slice(i2 - s, i2 + 1)
        momentum = partials[("qdot", j)][tail]
        force = partials[("q", j)][tail]
        second[:, j] = np.gradient(momentum, q.h, edge_order=2) - force

    reach = 2 * q.h
    t_first = jet.a + (i1) * q.h
    t_second = jet.a + (i2 - s) * q.h
    intervals = [
        _interval_from_field("first", declared["first"], t_first, q.h, first, reach),
        _interval_from_field("second", declared["second"], t_second, q.h, second, reach),
    ]
    report = ResidualReport("classical", intervals)
    logger.info(f"经典 EL 残差 sup={report.sup:.3e}")
    return report


# ---------------------------------------------------------------------------
# 算子族与嵌入
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ShiftedTerm:
    """
    求值在 t（advanced=False）或 t+τ（advanced=True）的表达式
    """
    expr: Expr
    advanced: bool = False


TermLike = Union[Expr, ShiftedTerm, Sequence[ShiftedTerm]]


def _as_terms(item: TermLike) -> Tuple[ShiftedTerm, ...]:
    if isinstance(item, Expr):
        return (ShiftedTerm(item),)
    if isinstance(item, ShiftedTerm):
        return (item,)
    terms = tuple(item)
    if not terms or not all(isinstance(term, ShiftedTerm) for term in terms):
        raise OperatorFamilyError("算子族的每一项必须是 Expr 或非空的 ShiftedTerm 序列")
    return terms


@dataclass(frozen=True)
class OperatorFamily:
    """
    微分算子族 O = Σᵢ Fᵢ · (dⁱ/dtⁱ ∘ Gᵢ)，i = 0..n；i = 0 项为恒等

    Args:
        f: n+1 个系数 Fᵢ（Expr 或 ShiftedTerm 之和）
        g: n+1 个内函数 Gᵢ
        tau: 时滞
        k: 求值算子的阶（0 或 1）
        label: 名称
    """
    f: Tuple[Tuple[ShiftedTerm, ...], ...]
    g: Tuple[Tuple[ShiftedTerm, ...], ...]
    tau: float
    k: int = 1
    label: str = ""

    def __post_init__(self):
        f = tuple(_as_terms(item) for item in self.f)
        g = tuple(_as_terms(item) for item in self.g)
        if len(f) != len(g) or not f:
            raise OperatorFamilyError(f"len(f)={len(f)} 与 len(g)={len(g)} 必须相等且非零")
        if self.k not in (0, 1):
            raise OperatorFamilyError(f"只支持 k ∈ {{0, 1}}，实际 k={self.k}")
        if not self.tau > 0:
            raise OperatorFamilyError(f"时滞必须为正: {self.tau}")
        if self.k == 0:
            for terms in f + g:
                for term in terms:
                    if any(v.kind in ("qdot", "qdottau") for v in variables(term.expr)):
                        raise OperatorFamilyError("k=0 的算子族不能含 qdot/qdottau")
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "g", g)

    @property
    def order(self) -> int:
        return len(self.f) - 1

    @property
    def has_advanced(self) -> bool:
        return any(term.advanced for terms in self.f + self.g for term in terms)


@dataclass
class EmbeddedField:
    """
    嵌入算子作用于轨迹的结果

    Args:
        values: 标量场（d=1 的采样函数）
        converged: 逐点收敛标志
    """
    values: SampledFunction
    converged: np.ndarray


def _sum_terms(jet: Jet, terms: Tuple[ShiftedTerm, ...], s: int, length: int) -> np.ndarray:
    # 按顺序累加，超前项平移 s 个节点
    total = None
    for term in terms:
        values = jet.field(term.expr)
        values = values[s:s + length] if term.advanced else values[:length]
        total = values if total is None else total + values
    return total


class EmbeddedOperator:
    """
    Emb_□(O)：将 dⁱ/dtⁱ 换成 □ⁱ，将 [·]_τ 换成 [·]^□_τ
    """

    def __init__(self, family: OperatorFamily):
        self.family = family

    def __call__(
        self,
        q: Trajectory,
        schedule: EpsilonSchedule,
        rtol: float = DEFAULT_RTOL,
        atol: float = DEFAULT_ATOL,
    ) -> EmbeddedField:
        family = self.family
        s = grid_steps(family.tau, q.h, "tau")
        k0 = grid_steps(schedule.eps0, q.h, "eps0")
        jet = scale_jet(q, family.tau, schedule, rtol, atol)
        length = jet.n - s if family.has_advanced else jet.n
        order = family.order
        if length - 2 * order * k0 < 1:
            logger.error(f"算子族 {family.label} 作用 {order} 次后区间耗尽")
            raise DomainError(f"k·ε₀ 的区间余量不足 (阶 {order})")

        base_flags = jet.flags[:length]
        if family.has_advanced:
            base_flags = base_flags & jet.flags[s:s + length]
        out_length = length - 2 * order * k0
        offset = order * k0
        total = None
        converged = base_flags[offset:offset + out_length].copy()
        for i, (f_terms, g_terms) in enumerate(zip(family.f, family.g)):
            coefficient = _sum_terms(jet, f_terms, s, length)
            inner = SampledFunction(jet.a, jet.h, _sum_terms(jet, g_terms, s, length))
            for applied in range(1, i + 1):
                inner, summary = scale_derivative(inner, schedule, rtol, atol)
                lag = (order - applied) * k0
                converged &= summary.point_converged[lag:lag + out_length]
            shift = (order - i) * k0
            term = coefficient[offset:offset + out_length] * inner.values[shift:shift + out_length, 0]
            total = term if total is None else total + term
        values = SampledFunction(jet.a + offset * jet.h, jet.h, total)
        return EmbeddedField(values, converged)


class ClassicalOperator:
    """
    O 在经典求值算子下的作用，dⁱ/dtⁱ 用二阶中心差分
    """

    def __init__(self, family: OperatorFamily):
        self.family = family

    def __call__(self, q: Trajectory) -> SampledFunction:
        family = self.family
        s = grid_steps(family.tau, q.h, "tau")
        jet = classical_jet(q, family.tau)
        length = jet.n - s if family.has_advanced else jet.n
        total = None
        for i, (f_terms, g_terms) in enumerate(zip(family.f, family.g)):
            inner = _sum_terms(jet, g_terms, s, length)
            for _ in range(i):
                inner = np.gradient(inner, jet.h, edge_order=2)
            term = _sum_terms(jet, f_terms, s, length) * inner
            total = term if total is None else total + term
        return SampledFunction(jet.a, jet.h, total)


def embed_operator_family(family: OperatorFamily) -> EmbeddedOperator:
    """
    非可微嵌入 Emb_□

    Args:
        family: 算子族

    Returns:
        作用于 (轨迹, ε 序列) 的求值器
    """
    logger.debug(f"嵌入算子族 {family.label}: 阶 {family.order}, k={family.k}")
    return EmbeddedOperator(family)


def el_operator_family(problem: DelayProblem, component: int, regime: str) -> OperatorFamily:
    """
    编码时滞 EL 方程的算子族：f = (−F, 1)，g = (1, G)
    第一区间 F = L_q + L_qτ(·+τ)，G = L_q̇ + L_q̇τ(·+τ)；第二区间无超前项

    Args:
        problem: 时滞问题
        component: 分量下标
        regime: 'first' 或 'second'
    """
    if regime not in REGIMES:
        raise OperatorFamilyError(f"未知区间: {regime}")
    j = component
    one = Const(1)
    if regime == "first":
        force = (ShiftedTerm(Neg(problem.partial("q", j))), ShiftedTerm(Neg(problem.partial("qtau", j)), True))
        momentum = (ShiftedTerm(problem.partial("qdot", j)), ShiftedTerm(problem.partial("qdottau", j), True))
    else:
        force = (ShiftedTerm(Neg(problem.partial("q", j))),)
        momentum = (ShiftedTerm(problem.partial("qdot", j)),)
    return OperatorFamily(
        f=(force, one),
        g=(one, momentum),
        tau=problem.tau,
        k=1,
        label=f"EL[{j}]/{regime}",
    )


# ---------------------------------------------------------------------------
# 尺度 EL 残差
# ---------------------------------------------------------------------------

def _least_action_fields(problem, q, schedule, rtol, atol):
    # 直接按最小作用原理导出的方程组装 □G − F
    s = grid_steps(problem.tau, q.h, "tau")
    jet = scale_jet(q, problem.tau, schedule, rtol, atol)
    partials = _partial_fields(problem, jet)
    result = {}
    for regime in REGIMES:
        length = jet.n - s if regime == "first" else jet.n
        momentum = np.empty((length, problem.d), dtype=complex)
        force = np.empty((length, problem.d), dtype=complex)
        for j in range(problem.d):
            if regime == "first":
                momentum[:, j] = partials[("qdot", j)][:length] + partials[("qdottau", j)][s:s + length]
                force[:, j] = partials[("q", j)][:length] + partials[("qtau", j)][s:s + length]
            else:
                momentum[:, j] = partials[("qdot", j)]
                force[:, j] = partials[("q", j)]
        flags = jet.flags[:length]
        if regime == "first":
            flags = flags & jet.flags[s:s + length]
        box, summary = scale_derivative(SampledFunction(jet.a, jet.h, momentum), schedule, rtol, atol)
        k0 = int(round((box.a - jet.a) / jet.h))
        residual = box.values - force[k0:k0 + box.n]
        converged = summary.point_converged & flags[k0:k0 + box.n]
        result[regime] = (box.a, residual, converged)
    return result


def _embedding_fields(problem, q, schedule, rtol, atol):
    # 经由 Emb_□ 作用于 EL 算子族
    result = {}
    for regime in REGIMES:
        columns, flags, start = [], None, None
        for j in range(problem.d):
            evaluator = embed_operator_family(el_operator_family(problem, j, regime))
            embedded = evaluator(q, schedule, rtol, atol)
            columns.append(embedded.values.values[:, 0])
            flags = embedded.converged if flags is None else flags & embedded.converged
            start = embedded.values.a
        result[regime] = (start, np.stack(columns, axis=1), flags)
    return result


def scale_el_residual(
    problem: DelayProblem,
    q: Trajectory,
    schedule: EpsilonSchedule,
    mode: str = "least_action",
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
) -> ResidualReport:
    """
    尺度时滞 EL 残差

    Args:
        problem: 时滞问题
        q: 轨迹，左侧最好带 ε₀ 的保护区；t₂ 之后的样本被忽略
        schedule: ε 序列
        mode: 'embedding'（经 embed_operator_family）或 'least_action'（直接组装）

    Returns:
        ResidualReport，有效区间可能比声明区间短
    """
    if mode not in ("embedding", "least_action"):
        raise ValueError(f"未知模式: {mode}")
    q = _crop_at_t2(problem, q)
    problem.check_grid(q.h)
    schedule.steps(q.h)
    logger.info(
        f"尺度 EL 残差 ({mode}): ε₀={schedule.eps0}, r={schedule.ratio}, 层数 {schedule.levels}, h={q.h}"
    )
    if mode == "embedding":
        fields = _embedding_fields(problem, q, schedule, rtol, atol)
    else:
        fields = _least_action_fields(problem, q, schedule, rtol, atol)

    declared = _declared(problem)
    reach = 2 * schedule.eps0
    intervals = []
    for regime in REGIMES:
        start, values, converged = fields[regime]
        intervals.append(
            _interval_from_field(regime, declared[regime], start, q.h, values, reach, converged)
        )
    report = ResidualReport(mode, intervals, schedule)
    for item in intervals:
        if item.converged_fraction is not None and item.converged_fraction < 1.0:
            logger.warning(f"{mode} 区间 {item.label} 收敛比例 {item.converged_fraction:.3f}")
    logger.info(f"尺度 EL 残差 ({mode}) sup={report.sup:.3e}")
    return report


@dataclass
class CoherenceReport:
    """
    嵌入方程与最小作用方程的一致性

    Args:
        embedding: 嵌入模式残差
        least_action: 最小作用模式残差
        discrepancy: 公共有效区间上两者之差的 sup 范数
        tolerance: 判定阈值
    """
    embedding: ResidualReport
    least_action: ResidualReport
    discrepancy: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.discrepancy <= self.tolerance


def coherence_check(
    problem: DelayProblem,
    q: Trajectory,
    schedule: EpsilonSchedule,
    tolerance: float = 1e-10,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
) -> CoherenceReport:
    """
    比较两条独立代码路径得到的尺度 EL 残差
    """
    embedding = scale_el_residual(problem, q, schedule, "embedding", rtol, atol)
    least_action = scale_el_residual(problem, q, schedule, "least_action", rtol, atol)
    discrepancy = 0.0
    for left, right in zip(embedding.intervals, least_action.intervals):
        common, i_left, i_right = np.intersect1d(
            np.round((left.t - problem.t1) / q.h).astype(np.int64),
            np.round((right.t - problem.t1) / q.h).astype(np.int64),
            return_indices=True,
        )
        if common.size:
            difference = np.abs(left.values[i_left] - right.values[i_right])
            discrepancy = max(discrepancy, float(np.max(difference)))
    report = CoherenceReport(embedding, least_action, discrepancy, tolerance)
    if report.passed:
        logger.info(f"一致性检验通过: 最大差异 {discrepancy:.3e}")
    else:
        logger.warning(f"一致性检验失败: 最大差异 {discrepancy:.3e} > {tolerance}")
    return report


# ---------------------------------------------------------------------------
# 一阶变分
# ---------------------------------------------------------------------------

@dataclass
class FirstVariation:
    """
    一阶变分 dI/dε 的两种计算

    Args:
        finite_difference: 中心差分 (I[q+εh] − I[q−εh])/(2ε)
        analytic: 被积式 L_q·h + L_q̇·ḣ + L_qτ·h(t−τ) + L_q̇τ·ḣ(t−τ) 的积分
        discrepancy: 两者之差的模
        tolerance: 判定阈值
    """
    finite_difference: complex
    analytic: complex
    discrepancy: float
    tolerance: float

    @property
    def agrees(self) -> bool:
        return self.discrepancy <= self.tolerance


def check_variation(problem: DelayProblem, variation: Trajectory, tol: float = 1e-12) -> None:
    """
    变分须在 [t₁−τ, t₁] 上以及 t₂ 处为零

    Raises:
        InadmissibleError: 不满足
    """
    i0 = variation.index_of(problem.t1 - problem.tau)
    i1 = variation.index_of(problem.t1)
    on_history = np.max(np.abs(variation.values[i0:i1 + 1]))
    at_end = np.max(np.abs(variation.value_at(problem.t2)))
    if on_history > tol or at_end > tol:
        logger.error(f"变分在历史段上 {on_history:.3e}，在 t₂ 处 {at_end:.3e}")
        raise InadmissibleError("变分必须在 [t₁−τ, t₁] ∪ {t₂} 上为零")


def _analytic_variation(problem, jet: Jet, variation_jet: Jet, t1: float, t2: float) -> complex:
    integrand = np.zeros(jet.n, dtype=complex)
    for (kind, j), expr in problem.partials.items():
        integrand = integrand + jet.field(expr) * variation_jet.binding[Variable(kind, j)]
    field_ = SampledFunction(jet.a, jet.h, integrand)
    return complex(integrate_trapezoid(field_, t1, t2)[0])


def first_variation(
    problem: DelayProblem,
    q: Trajectory,
    variation: Trajectory,
    mode: str = "classical",
    schedule: Optional[EpsilonSchedule] = None,
    quadrature: str = "trapezoid",
    step: float = 1e-5,
    tolerance: float = 1e-5,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
) -> FirstVariation:
    """
    一阶变分探针

    Args:
        problem: 时滞问题
        q: 容许轨迹
        variation: 与 q 同网格的变分
        mode: 'classical' 或 'scale'
        schedule: 尺度模式的 ε 序列
        quadrature: 经典模式的求积方式，'midpoint' 时解析式同样按单元中点计算
        step: 中心差分步长
        tolerance: 两种计算的一致性阈值
        rtol: 尺度模式的外推相对容差
        atol: 尺度模式的外推绝对容差

    Returns:
        FirstVariation
    """
    if not q.same_grid(variation) or q.d != variation.d:
        raise InadmissibleError("变分必须与轨迹在同一网格上")
    check_variation(problem, variation)
    check_admissible(problem, q)
    plus = q.with_values(q.values + step * variation.values)
    minus = q.with_values(q.values - step * variation.values)

    if mode == "classical":
        finite = (action_value(problem, plus, quadrature) - action_value(problem, minus, quadrature)) / (2 * step)
        if quadrature == "midpoint":
            analytic = _midpoint_variation(problem, q, variation)
        else:
            cropped_q = _crop_at_t2(problem, q)
            cropped_v = _crop_at_t2(problem, variation)
            analytic = _analytic_variation(
                problem, classical_jet(cropped_q, problem.tau), classical_jet(cropped_v, problem.tau),
                problem.t1, problem.t2,
            )
    elif mode == "scale":
        if schedule is None:
            raise ValueError("尺度模式需要 ε 序列")
        finite = (
            action_value_scale(problem, plus, schedule, rtol, atol)
            - action_value_scale(problem, minus, schedule, rtol, atol)
        ) / (2 * step)
        analytic = _analytic_variation(
            problem,
            scale_jet(q, problem.tau, schedule, rtol, atol),
            scale_jet(variation, problem.tau, schedule, rtol, atol),
            problem.t1,
            problem.t2,
        )
    else:
        raise ValueError(f"未知模式: {mode}")

    discrepancy = float(abs(complex(finite) - complex(analytic)))
    result = FirstVariation(complex(finite), complex(analytic), discrepancy, tolerance)
    if not result.agrees:
        logger.warning(f"一阶变分两种计算不一致: 差分 {finite}, 解析 {analytic}")
    return result


def _midpoint_variation(problem: DelayProblem, q: Trajectory, variation: Trajectory) -> complex:
    s = grid_steps(problem.tau, q.h, "tau")
    origin = q.index_of(problem.t1 - problem.tau)
    end = q.index_of(problem.t2)
    values = q.values[origin:end + 1]
    bumps = variation.values[origin:end + 1]
    binding, cells = _midpoint_binding(problem, values, q.h, s, q.times[origin])
    variation_binding, _ = _midpoint_binding(problem, bumps, q.h, s, q.times[origin])
    integrand = np.zeros(cells, dtype=complex)
    for (kind, j), expr in problem.partials.items():
        partial = np.broadcast_to(evaluate(expr, binding), (cells,))
        integrand = integrand + partial * variation_binding[Variable(kind, j)]
    return complex(q.h * np.sum(integrand))


# ---------------------------------------------------------------------------
# 直接转录求解器
# ---------------------------------------------------------------------------

@dataclass
class SolveResult:
    """
    直接转录求解结果

    Args:
        trajectory: [t₁−τ, t₂] 上的极值轨迹
        iterations: Newton 步数
        gradient_norm: 最终梯度的最大模
        converged: 是否收敛
        history: 每步的梯度范数
    """
    trajectory: Trajectory
    iterations: int
    gradient_norm: float
    converged: bool
    history: List[float] = field(default_factory=list)


# 单元变量 (q̄, v, q̄τ, vτ) 与局部节点 (qᵢ, qᵢ₊₁, qᵢ₋ₛ, qᵢ₊₁₋ₛ) 的线性关系
def _cell_map(h: float) -> np.ndarray:
    return np.array([
        [0.5, 0.5, 0.0, 0.0],
        [-1.0 / h, 1.0 / h, 0.0, 0.0],
        [0.0, 0.0, 0.5, 0.5],
        [0.0, 0.0, -1.0 / h, 1.0 / h],
    ])


class _DiscreteAction:
    """中点单元离散作用量的梯度与 Hessian"""

    def __init__(self, problem: DelayProblem, h: float, start: float, s: int, cells: int):
        self.problem = problem
        self.h = h
        self.start = start
        self.s = s
        self.cells = cells
        self.map = _cell_map(h)
        d = problem.d
        base = s + np.arange(cells)
        # 局部节点：i, i+1, i−s, i+1−s
        self.nodes = np.stack([base, base + 1, base - s, base + 1 - s], axis=1)
        n_nodes = s + cells + 1
        unknown = np.full(n_nodes, -1, dtype=np.int64)
        unknown[s + 1:s + cells] = np.arange(cells - 1)
        self.unknown = unknown
        self.size = (cells - 1) * d

    def _fields(self, values: np.ndarray):
        problem = self.problem
        d = problem.d
        binding, cells = _midpoint_binding(problem, values, self.h, self.s, self.start)
        gradient = np.empty((cells, 4, d))
        for b, kind in enumerate(SLOT_KINDS):
            for j in range(d):
                value = evaluate(problem.partial(kind, j), binding)
                gradient[:, b, j] = np.real(np.broadcast_to(value, (cells,)))
        return binding, gradient

    def gradient(self, values: np.ndarray) -> np.ndarray:
        d = self.problem.d
        _, lx = self._fields(values)
        local = self.h * np.einsum("ba,nbj->naj", self.map, lx)
        result = np.zeros(self.size)
        for a in range(4):
            ids = self.unknown[self.nodes[:, a]]
            keep = ids >= 0
            for j in range(d):
                np.add.at(result, ids[keep] * d + j, local[keep, a, j])
        return result

    def hessian(self, values: np.ndarray) -> sparse.csr_matrix:
        problem = self.problem
        d = problem.d
        binding, _ = _midpoint_binding(problem, values, self.h, self.s, self.start)
        lxx = np.empty((self.cells, 4, d, 4, d))
        for b, kind in enumerate(SLOT_KINDS):
            for j in range(d):
                for c, kind2 in enumerate(SLOT_KINDS):
                    for l in range(d):
                        expr = problem.second_partials[((kind, j), (kind2, l))]
                        value = evaluate(expr, binding)
                        lxx[:, b, j, c, l] = np.real(np.broadcast_to(value, (self.cells,)))
        local = self.h * np.einsum("ba,nbjcl,ce->najel", self.map, lxx, self.map)
        rows, cols, data = [], [], []
        for a in range(4):
            row_ids = self.unknown[self.nodes[:, a]]
            for e in range(4):
                col_ids = self.unknown[self.nodes[:, e]]
                keep = (row_ids >= 0) & (col_ids >= 0)
                for j in range(d):
                    for l in range(d):
                        rows.append(row_ids[keep] * d + j)
                        cols.append(col_ids[keep] * d + l)
                        data.append(local[keep, a, j, e, l])
        matrix = sparse.coo_matrix(
            (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.size, self.size),
        )
        return matrix.tocsr()

    def scatter(self, values: np.ndarray, unknowns: np.ndarray) -> np.ndarray:
        result = values.copy()
        result[self.s + 1:self.s + self.cells] = unknowns.reshape(self.cells - 1, self.problem.d)
        return result

    def gather(self, values: np.ndarray) -> np.ndarray:
        return values[self.s + 1:self.s + self.cells].reshape(-1).copy()


def solve_extremal_direct(
    problem: DelayProblem,
    h: Optional[float] = None,
    initial: Optional[np.ndarray] = None,
    max_iterations: int = 50,
    gradient_tol: float = 1e-10,
    min_damping: float = 1.0 / 1024,
) -> SolveResult:
    """
    直接转录：中点单元离散作用量，固定历史与终点节点，阻尼 Newton 求驻点

    Args:
        problem: 时滞问题
        h: 网格步长（默认取问题中的 h）
        initial: 内部节点初值，形状 ((t₂−t₁)/h − 1, d)；默认线性插值
        max_iterations: 最大迭代次数
        gradient_tol: 梯度最大模的收敛阈值
        min_damping: 回溯阻尼下限

    Returns:
        SolveResult

    Raises:
        NewtonConvergenceError: 超过最大迭代次数
        SingularHessianError: Hessian 奇异
    """
    h = h if h is not None else problem.h
    if h is None:
        raise ProblemSpecError("缺少网格步长", "h")
    s = problem.check_grid(h)
    cells = grid_steps(problem.t2 - problem.t1, h, "t2-t1")
    if cells < 2:
        raise DomainError("至少需要两个单元")
    start = problem.t1 - problem.tau
    t = start + h * np.arange(s + cells + 1)
    values = np.empty((s + cells + 1, problem.d))
    values[:s + 1] = problem.history_values(t[:s + 1], h)
    values[-1] = problem.q2
    if initial is None:
        weights = (t[s + 1:-1] - problem.t1) / (problem.t2 - problem.t1)
        values[s + 1:-1] = values[s] + np.outer(weights, problem.q2 - values[s])
    else:
        values[s + 1:-1] = np.asarray(initial, dtype=float).reshape(cells - 1, problem.d)

    action = _DiscreteAction(problem, h, start, s, cells)
    logger.info(
        f"直接转录求解: {problem.name or to_text(problem.lagrangian)}，{cells} 个单元，{action.size} 个未知量"
    )
    history: List[float] = []
    iterations = 0
    gradient = action.gradient(values)
    norm = float(np.max(np.abs(gradient))) if gradient.size else 0.0
    history.append(norm)
    while norm > gradient_tol:
        if iterations >= max_iterations:
            logger.error(f"Newton 未收敛: 梯度范数 {norm:.3e}")
            raise NewtonConvergenceError("Newton 迭代未收敛", iterations, norm)
        matrix = action.hessian(values)
        with warnings.catch_warnings():
            warnings.simplefilter("error", MatrixRankWarning)
            try:
                step = spsolve(matrix, -gradient)
            except MatrixRankWarning:
                step = None
        if step is None or not np.all(np.isfinite(step)):
            logger.error("离散 Hessian 奇异")
            raise SingularHessianError("离散 Hessian 奇异，无法求 Newton 步")

        unknowns = action.gather(values)
        damping = 1.0
        while True:
            trial = action.scatter(values, unknowns + damping * step)
            trial_gradient = action.gradient(trial)
            trial_norm = float(np.max(np.abs(trial_gradient)))
            if trial_norm < norm or damping <= min_damping:
                break
            damping *= 0.5
        iterations += 1
        values, gradient, norm = trial, trial_gradient, trial_norm
        history.append(norm)
        logger.debug(f"Newton 第 {iterations} 步: 阻尼 {damping}, 梯度范数 {norm:.3e}")

    logger.info(f"Newton 收敛: {iterations} 步，梯度范数 {norm:.3e}")
    trajectory = SampledFunction(start, h, values)
    return SolveResult(trajectory, iterations, norm, True, history)
