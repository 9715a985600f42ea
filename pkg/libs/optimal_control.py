#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
时滞最优控制
Hamilton 量构造、经典与尺度 Pontryagin 残差检验以及 φ = u 时向时滞 EL 方程的约化检验
"""

import math
import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from libs.delay_variational import (
    REGIMES,
    DelayProblem,
    IntervalResidual,
    ResidualReport,
    Trajectory,
    classical_el_residual,
    norm_mask,
    sample_trajectory,
    scale_el_residual,
)
from libs.errors import DimensionError, DomainError, ProblemSpecError
from libs.expr_core import (
    Add,
    Dimensions,
    Expr,
    Mul,
    Var,
    Variable,
    build_binding,
    check_dimensions,
    ensure_differentiable,
    evaluate,
    partial_derivative,
    substitute,
    to_text,
)
from libs.function_zoo import FunctionSpec
from libs.scale_calculus import (
    ALIGNMENT_TOL,
    DEFAULT_ATOL,
    DEFAULT_RTOL,
    EpsilonSchedule,
    SampledFunction,
    grid_steps,
    scale_derivative,
)

logger = logging.getLogger(__name__)

CONTROL_KINDS = ("t", "q", "qtau", "u", "utau")
FAMILIES = ("state", "costate", "stationary")


@dataclass
class ControlProblem:
    """
    时滞最优控制问题
    min ∫ L(t, q, q(t−τ), u, u(t−τ)) dt，q̇ = φ(t, q, q(t−τ), u, u(t−τ))

    Args:
        lagrangian: L
        phi: d 个分量的动力学 φ
        tau: 时滞
        t1: 起点
        t2: 终点
        history: 状态历史函数 δ
        q2: 终点值
        d: 状态维数
        m: 控制维数
        h: 工作网格步长（可选）
        name: 问题名称
    """
    lagrangian: Expr
    phi: Tuple[Expr, ...]
    tau: float
    t1: float
    t2: float
    history: Tuple[FunctionSpec, ...]
    q2: np.ndarray
    d: int = 1
    m: int = 1
    h: Optional[float] = None
    name: str = ""

    def __post_init__(self):
        self.phi = tuple(self.phi)
        self.history = tuple(self.history)
        self.q2 = np.atleast_1d(np.asarray(self.q2, dtype=float))
        if not self.tau > 0 or not self.tau < self.t2 - self.t1:
            raise ProblemSpecError(f"要求 0 < τ < t₂ − t₁: τ={self.tau}", "tau")
        if len(self.phi) != self.d:
            raise ProblemSpecError(f"φ 的分量数 {len(self.phi)} 与 d={self.d} 不一致", "phi")
        if len(self.history) != self.d:
            raise ProblemSpecError(f"历史函数个数 {len(self.history)} 与 d={self.d} 不一致", "history")
        if self.q2.shape != (self.d,):
            raise ProblemSpecError(f"终点值维数 {self.q2.shape} 与 d={self.d} 不一致", "q2")
        dims = Dimensions(self.d, self.m)
        check_dimensions(self.lagrangian, dims, CONTROL_KINDS)
        for component in self.phi:
            check_dimensions(component, dims, CONTROL_KINDS)
        ensure_differentiable(self.hamiltonian, ("q", "qtau", "u", "utau", "p"))

    @property
    def dims(self) -> Dimensions:
        return Dimensions(self.d, self.m)

    @cached_property
    def hamiltonian(self) -> Expr:
        return build_hamiltonian(self)

    @cached_property
    def partials(self) -> Dict[Tuple[str, int], Expr]:
        """H_q、H_qτ、H_p（d 个分量）与 H_u、H_uτ（m 个分量）"""
        result = {}
        for kind in ("q", "qtau", "p"):
            for i in range(self.d):
                result[(kind, i)] = partial_derivative(self.hamiltonian, Variable(kind, i))
        for kind in ("u", "utau"):
            for j in range(self.m):
                result[(kind, j)] = partial_derivative(self.hamiltonian, Variable(kind, j))
        return result

    def check_grid(self, h: float) -> int:
        grid_steps(self.t2 - self.t1, h, "t2-t1")
        return grid_steps(self.tau, h, "tau")

    def history_values(self, t: np.ndarray, grid_step: Optional[float] = None) -> np.ndarray:
        return np.stack([spec.evaluate(t, grid_step) for spec in self.history], axis=1)

    def is_identity_dynamics(self) -> bool:
        """φ = u"""
        return self.m == self.d and all(
            component == Var(Variable("u", i)) for i, component in enumerate(self.phi)
        )


def build_hamiltonian(problem: ControlProblem) -> Expr:
    """
    H = L + Σᵢ p[i]·φ[i]

    Args:
        problem: 控制问题

    Returns:
        Hamilton 量表达式
    """
    hamiltonian = problem.lagrangian
    for i, component in enumerate(problem.phi):
        hamiltonian = Add(hamiltonian, Mul(Var(Variable("p", i)), component))
    logger.debug(f"H = {to_text(hamiltonian)}")
    return hamiltonian


@dataclass
class ControlTriple:
    """
    候选三元组 (q, u, p)，三者在同一网格上

    Args:
        q: 状态，d 维
        u: 控制，m 维（需覆盖 [t₁−τ, t₂]）
        p: 协态，d 维（[t₁, t₂] 之外的取值不参与检验）
    """
    q: SampledFunction
    u: SampledFunction
    p: SampledFunction

    def __post_init__(self):
        if not (self.q.same_grid(self.u) and self.q.same_grid(self.p)):
            raise DomainError("q、u、p 必须在同一网格上")

    @property
    def h(self) -> float:
        return self.q.h


def sample_control_triple(
    problem: ControlProblem,
    q_specs: Sequence[FunctionSpec],
    u_specs: Sequence[FunctionSpec],
    p_specs: Sequence[FunctionSpec],
    h: float,
    left_margin: float = 0.0,
    right_margin: float = 0.0,
) -> ControlTriple:
    """
    在同一网格上采样候选三元组；q 在 t ≤ t₁ 处取历史函数，u、p 直接采样

    Args:
        problem: 控制问题
        q_specs: 状态分量（t > t₁ 部分）
        u_specs: 控制分量，须覆盖 [t₁−τ, t₂]
        p_specs: 协态分量
        h: 步长
        left_margin: t₁−τ 左侧保护区
        right_margin: t₂ 右侧保护区
    """
    if len(u_specs) != problem.m:
        raise ProblemSpecError(f"控制分量数 {len(u_specs)} 与 m={problem.m} 不一致", "control")
    if len(p_specs) != problem.d:
        raise ProblemSpecError(f"协态分量数 {len(p_specs)} 与 d={problem.d} 不一致", "costate")
    q = sample_trajectory(problem, q_specs, h, left_margin, right_margin)
    t = q.times
    u = np.stack([spec.evaluate(t, h) for spec in u_specs], axis=1)
    p = np.stack([spec.evaluate(t, h) for spec in p_specs], axis=1)
    return ControlTriple(q, q.with_values(u), q.with_values(p))


@dataclass
class PontryaginReport:
    """
    三类残差（状态、协态、驻点条件）在两个区间上的结果

    Args:
        mode: classical 或 scale
        families: 类别 -> [第一区间, 第二区间]
        schedule: ε 序列（尺度模式）
    """
    mode: str
    families: Dict[str, List[IntervalResidual]]
    schedule: Optional[EpsilonSchedule] = None

    def family_sup(self, name: str) -> float:
        return max(item.sup for item in self.families[name])

    @property
    def sup(self) -> float:
        return max(self.family_sup(name) for name in self.families)

    def interval(self, family_name: str, label: str) -> IntervalResidual:
        for item in self.families[family_name]:
            if item.label == label:
                return item
        raise KeyError(f"{family_name}/{label}")


# ---------------------------------------------------------------------------
# 残差组装
# ---------------------------------------------------------------------------

@dataclass
class _Layout:
    """截断到 t₂ 后的全局节点布局"""
    a: float
    h: float
    n: int
    s: int
    i1: int
    junction: int

    @property
    def i2(self) -> int:
        return self.n - 1

    def times(self, lo: int, hi: int) -> np.ndarray:
        return self.a + self.h * np.arange(lo, hi + 1)


def _layout(problem: ControlProblem, q: SampledFunction) -> _Layout:
    if q.a > problem.t1 - problem.tau + ALIGNMENT_TOL * q.h:
        logger.error(f"三元组起点 {q.a} 晚于 t₁−τ")
        raise DomainError(f"三元组必须覆盖 [t₁−τ, t₂]，实际起点 {q.a!r}")
    grid_steps(problem.t2 - problem.t1, q.h, "t2-t1")
    s = grid_steps(problem.tau, q.h, "tau")
    cropped_n = q.index_of(problem.t2) + 1
    i1 = q.index_of(problem.t1)
    return _Layout(q.a, q.h, cropped_n, s, i1, cropped_n - 1 - s)


def _hamiltonian_fields(problem: ControlProblem, trip: ControlTriple, layout: _Layout) -> Dict[Tuple[str, int], np.ndarray]:
    # 全局下标 [s, n) 上求值，其余位置填 NaN
    n, s = layout.n, layout.s
    q = trip.q.values[:n]
    u = trip.u.values[:n]
    p = trip.p.values[:n]
    binding = build_binding(
        t=layout.times(s, n - 1),
        q=q[s:],
        qtau=q[:n - s],
        u=u[s:],
        utau=u[:n - s],
        p=p[s:],
    )
    result = {}
    for key, expr in problem.partials.items():
        values = np.full(n, np.nan, dtype=complex)
        values[s:] = np.broadcast_to(evaluate(expr, binding), (n - s,))
        result[key] = values
    return result


def _phi_fields(problem: ControlProblem, trip: ControlTriple, layout: _Layout) -> List[np.ndarray]:
    n, s = layout.n, layout.s
    q, u = trip.q.values[:n], trip.u.values[:n]
    binding = build_binding(t=layout.times(s, n - 1), q=q[s:], qtau=q[:n - s], u=u[s:], utau=u[:n - s])
    result = []
    for component in problem.phi:
        values = np.full(n, np.nan, dtype=complex)
        values[s:] = np.broadcast_to(evaluate(component, binding), (n - s,))
        result.append(values)
    return result


def _derivatives(values: np.ndarray, layout: _Layout, schedule: Optional[EpsilonSchedule], rtol: float, atol: float):
    # 返回全局下标上的导数场、可用下标范围与收敛标志
    cropped = SampledFunction(layout.a, layout.h, values[:layout.n])
    if schedule is None:
        return np.gradient(cropped.values, layout.h, axis=0, edge_order=2), 0, layout.n - 1, None
    box, summary = scale_derivative(cropped, schedule, rtol, atol)
    k0 = grid_steps(schedule.eps0, layout.h, "eps0")
    padded = np.full((layout.n, cropped.d), np.nan, dtype=complex)
    padded[k0:k0 + box.n] = box.values
    flags = np.zeros(layout.n, dtype=bool)
    flags[k0:k0 + box.n] = summary.point_converged
    return padded, k0, k0 + box.n - 1, flags


def _make_interval(
    label: str,
    declared: Tuple[float, float],
    layout: _Layout,
    lo: int,
    hi: int,
    values: np.ndarray,
    reach: float,
    flags: Optional[np.ndarray],
) -> IntervalResidual:
    if hi < lo:
        logger.error(f"区间 {label} 的有效部分为空")
        raise DomainError(f"区间 {label} {declared} 的有效部分为空（数据或保护区不足）")
    t = layout.times(lo, hi)
    return IntervalResidual(
        label=label,
        declared=declared,
        t=t,
        values=values[lo:hi + 1],
        norm_mask=norm_mask(t, declared, reach, layout.h),
        h=layout.h,
        converged=None if flags is None else flags[lo:hi + 1],
    )


def _regime_ranges(layout: _Layout, lo: int, hi: int) -> Dict[str, Tuple[int, int]]:
    return {
        "first": (max(layout.i1, lo), min(layout.junction, hi)),
        "second": (max(layout.junction, lo, layout.i1), min(layout.i2, hi)),
    }


def _pontryagin(
    problem: ControlProblem,
    trip: ControlTriple,
    schedule: Optional[EpsilonSchedule],
    rtol: float,
    atol: float,
) -> PontryaginReport:
    layout = _layout(problem, trip.q)
    if trip.q.d != problem.d or trip.p.d != problem.d or trip.u.d != problem.m:
        raise DimensionError("三元组维数与问题不一致")
    s = layout.s
    partials = _hamiltonian_fields(problem, trip, layout)
    dq, q_lo, q_hi, q_flags = _derivatives(trip.q.values, layout, schedule, rtol, atol)
    dp, p_lo, p_hi, p_flags = _derivatives(trip.p.values, layout, schedule, rtol, atol)
    reach = 2 * (schedule.eps0 if schedule is not None else layout.h)
    junction_t = problem.t2 - problem.tau
    declared = {"first": (problem.t1, junction_t), "second": (junction_t, problem.t2)}

    state = np.empty((layout.n, problem.d), dtype=complex)
    costate_first = np.empty((layout.n, problem.d), dtype=complex)
    costate_second = np.empty((layout.n, problem.d), dtype=complex)
    for i in range(problem.d):
        state[:, i] = dq[:, i] - partials[("p", i)]
        advanced = np.full(layout.n, np.nan, dtype=complex)
        advanced[:layout.n - s] = partials[("qtau", i)][s:]
        costate_first[:, i] = dp[:, i] + partials[("q", i)] + advanced
        costate_second[:, i] = dp[:, i] + partials[("q", i)]

    stationary_first = np.empty((layout.n, problem.m), dtype=complex)
    stationary_second = np.empty((layout.n, problem.m), dtype=complex)
    for j in range(problem.m):
        advanced = np.full(layout.n, np.nan, dtype=complex)
        advanced[:layout.n - s] = partials[("utau", j)][s:]
        stationary_first[:, j] = partials[("u", j)] + advanced
        stationary_second[:, j] = partials[("u", j)]

    families: Dict[str, List[IntervalResidual]] = {name: [] for name in FAMILIES}
    state_ranges = _regime_ranges(layout, max(q_lo, s), q_hi)
    costate_ranges = _regime_ranges(layout, max(p_lo, s), p_hi)
    stationary_ranges = _regime_ranges(layout, s, layout.i2)
    for regime in REGIMES:
        families["state"].append(
            _make_interval(regime, declared[regime], layout, *state_ranges[regime], state, reach, q_flags)
        )
        costate = costate_first if regime == "first" else costate_second
        families["costate"].append(
            _make_interval(regime, declared[regime], layout, *costate_ranges[regime], costate, reach, p_flags)
        )
        stationary = stationary_first if regime == "first" else stationary_second
        families["stationary"].append(
            _make_interval(regime, declared[regime], layout, *stationary_ranges[regime], stationary, reach, None)
        )
    mode = "classical" if schedule is None else "scale"
    report = PontryaginReport(mode, families, schedule)
    logger.info(
        f"Pontryagin 残差 ({mode}): 状态 {report.family_sup('state'):.3e}, "
        f"协态 {report.family_sup('costate'):.3e}, 驻点 {report.family_sup('stationary'):.3e}"
    )
    return report


def pontryagin_residual_classical(problem: ControlProblem, trip: ControlTriple) -> PontryaginReport:
    """
    经典 Pontryagin 残差
    状态 q̇ − H_p；协态 ṗ + H_q + H_qτ(t+τ)（第二区间无超前项）；驻点 H_u + H_uτ(t+τ)

    Args:
        problem: 控制问题
        trip: 候选三元组

    Returns:
        PontryaginReport
    """
    return _pontryagin(problem, trip, None, DEFAULT_RTOL, DEFAULT_ATOL)


def pontryagin_residual_scale(
    problem: ControlProblem,
    trip: ControlTriple,
    schedule: EpsilonSchedule,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
) -> PontryaginReport:
    """
    尺度 Pontryagin 残差：q̇、ṗ 换成 □q、□p，协态可为复值
    """
    schedule.steps(trip.h)
    return _pontryagin(problem, trip, schedule, rtol, atol)


def control_system_residual(
    problem: ControlProblem,
    trip: ControlTriple,
    schedule: EpsilonSchedule,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
) -> List[IntervalResidual]:
    """
    尺度控制系统残差 □q − φ，与状态族使用相同的节点
    """
    layout = _layout(problem, trip.q)
    s = layout.s
    phi = _phi_fields(problem, trip, layout)
    dq, q_lo, q_hi, q_flags = _derivatives(trip.q.values, layout, schedule, rtol, atol)
    values = np.empty((layout.n, problem.d), dtype=complex)
    for i in range(problem.d):
        values[:, i] = dq[:, i] - phi[i]
    junction_t = problem.t2 - problem.tau
    declared = {"first": (problem.t1, junction_t), "second": (junction_t, problem.t2)}
    ranges = _regime_ranges(layout, max(q_lo, s), q_hi)
    return [
        _make_interval(regime, declared[regime], layout, *ranges[regime], values, 2 * schedule.eps0, q_flags)
        for regime in REGIMES
    ]


# ---------------------------------------------------------------------------
# φ = u 时的约化
# ---------------------------------------------------------------------------

def delay_problem_from_control(problem: ControlProblem) -> DelayProblem:
    """
    φ = u 时的对应时滞变分问题：u → qdot，utau → qdottau

    Raises:
        DimensionError: 不满足 φ = u
    """
    if not problem.is_identity_dynamics():
        logger.error("约化要求 φ = u 且 m = d")
        raise DimensionError("约化要求 φ = u 且 m = d")
    mapping = {}
    for i in range(problem.d):
        mapping[Variable("u", i)] = Var(Variable("qdot", i))
        mapping[Variable("utau", i)] = Var(Variable("qdottau", i))
    lagrangian = substitute(problem.lagrangian, mapping)
    return DelayProblem(
        lagrangian=lagrangian,
        tau=problem.tau,
        t1=problem.t1,
        t2=problem.t2,
        history=problem.history,
        q2=problem.q2,
        d=problem.d,
        h=problem.h,
        name=problem.name,
    )


@dataclass
class ReductionReport:
    """
    约化检验结果

    Args:
        mode: classical 或 scale
        pontryagin: 三元组 (q, u = □q 或 q̇, p) 的 Pontryagin 残差
        el: 对应时滞问题的 EL 残差
        momentum: 每个区间上由驻点条件构造的 p
        discrepancy: 范数掩码内 −协态残差与 EL 残差之差的 sup 范数
        tolerance: 判定阈值
    """
    mode: str
    pontryagin: PontryaginReport
    el: ResidualReport
    momentum: Dict[str, SampledFunction]
    discrepancy: float
    tolerance: float

    @property
    def costate(self) -> List[IntervalResidual]:
        return self.pontryagin.families["costate"]

    @property
    def passed(self) -> bool:
        return self.discrepancy <= self.tolerance


def _stationary_momentum(problem: ControlProblem, q: SampledFunction, u: np.ndarray, layout: _Layout):
    # 驻点条件解出的 p：第一区间 −(L_u + L_uτ(t+τ))，第二区间 −L_u；t₁−τ 之前没有 q(t−τ)，填 NaN
    n, s = layout.n, layout.s
    binding = build_binding(
        t=layout.times(s, n - 1),
        q=q.values[s:n],
        qtau=q.values[:n - s],
        u=u[s:n],
        utau=u[:n - s],
    )
    first = np.full((n, problem.d), np.nan, dtype=complex)
    second = np.full((n, problem.d), np.nan, dtype=complex)
    for i in range(problem.d):
        fields = {}
        for kind in ("u", "utau"):
            values = np.full(n, np.nan, dtype=complex)
            expr = partial_derivative(problem.lagrangian, Variable(kind, i))
            values[s:] = np.broadcast_to(evaluate(expr, binding), (n - s,))
            fields[kind] = values
        first[:n - s, i] = -(fields["u"][:n - s] + fields["utau"][s:])
        second[:, i] = -fields["u"]
    return first, second


def el_reduction_check(
    problem: ControlProblem,
    q: Trajectory,
    schedule: Optional[EpsilonSchedule] = None,
    mode: str = "scale",
    tolerance: float = 1e-8,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
) -> ReductionReport:
    """
    φ = u 时：取 u = □q（或 q̇），按驻点条件构造
    p = −(L_u(t) + L_uτ(t+τ))（第二区间 p = −L_u），把三元组交给 Pontryagin 残差，
    再把协态残差与对应时滞问题的 EL 残差比较（两者只差一个符号）

    Args:
        problem: φ = u 的控制问题
        q: 轨迹，需覆盖 [t₁−τ, t₂]（尺度模式另加 ε₀ 保护区）
        schedule: ε 序列（尺度模式必需）
        mode: 'scale' 或 'classical'
        tolerance: 判定阈值

    Returns:
        ReductionReport
    """
    delay = delay_problem_from_control(problem)
    if mode == "scale":
        if schedule is None:
            raise ValueError("尺度模式需要 ε 序列")
        el = scale_el_residual(delay, q, schedule, "least_action", rtol, atol)
        derivative_schedule = schedule
    elif mode == "classical":
        el = classical_el_residual(delay, q)
        derivative_schedule = None
    else:
        raise ValueError(f"未知模式: {mode}")

    layout = _layout(problem, q)
    cropped = q.window(q.a, problem.t2)
    u, _, _, _ = _derivatives(cropped.values, layout, derivative_schedule, rtol, atol)
    first, second = _stationary_momentum(problem, cropped, u, layout)
    # 两段在交界点 t₂−τ 处拼接，交界附近的节点不在范数掩码内
    glued = second.copy()
    glued[:layout.junction + 1] = first[:layout.junction + 1]
    triple = ControlTriple(cropped, cropped.with_values(u), cropped.with_values(glued))
    pontryagin = _pontryagin(problem, triple, derivative_schedule, rtol, atol)

    momentum = {
        "first": SampledFunction(
            layout.a + layout.i1 * layout.h, layout.h, first[layout.i1:layout.junction + 1]
        ),
        "second": SampledFunction(layout.a + layout.junction * layout.h, layout.h, second[layout.junction:]),
    }

    discrepancy = 0.0
    for regime in REGIMES:
        costate = pontryagin.interval("costate", regime)
        reference = el.interval(regime)
        _, i_left, i_right = np.intersect1d(
            np.round((costate.t - problem.t1) / q.h).astype(np.int64),
            np.round((reference.t - problem.t1) / q.h).astype(np.int64),
            return_indices=True,
        )
        keep = costate.norm_mask[i_left] & reference.norm_mask[i_right]
        if not np.any(keep):
            raise DomainError(f"区间 {regime} 上没有共同的掩码内节点")
        difference = np.abs(costate.values[i_left][keep] + reference.values[i_right][keep])
        worst = float(np.max(difference)) if np.all(np.isfinite(difference)) else math.inf
        discrepancy = max(discrepancy, worst)

    report = ReductionReport(mode, pontryagin, el, momentum, discrepancy, tolerance)
    if report.passed:
        logger.info(f"约化检验通过 ({mode}): 差异 {discrepancy:.3e}")
    else:
        logger.warning(f"约化检验失败 ({mode}): 差异 {discrepancy:.3e} > {tolerance}")
    return report
