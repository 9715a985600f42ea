#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
尺度微积分
ε 左/右量子导数、复值 ε 尺度导数、外推提取 ⟨·⟩ 以及 Leibniz/Barrow 规则的数值检验
"""

import math
import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import integrate

from libs.errors import DomainError, ExtractionError, GridAlignmentError, GridError

logger = logging.getLogger(__name__)

# 外推收敛判据的默认容差
DEFAULT_RTOL = 1e-6
DEFAULT_ATOL = 1e-9
# 网格对齐容差（以步长为单位）
ALIGNMENT_TOL = 1e-6


def grid_steps(length: float, h: float, what: str = "ε") -> int:
    """
    返回 length/h 对应的整数步数

    Args:
        length: 长度（ε、τ 或区间长度）
        h: 网格步长
        what: 出错信息中的名称

    Raises:
        GridAlignmentError: length 不是 h 的正整数倍
    """
    ratio = length / h
    steps = int(round(ratio))
    if steps < 1 or abs(ratio - steps) > ALIGNMENT_TOL:
        logger.error(f"{what}={length!r} 不是步长 h={h!r} 的正整数倍")
        raise GridAlignmentError(f"{what}={length!r} 不是步长 h={h!r} 的正整数倍 (比值 {ratio!r})")
    return steps


@dataclass
class SampledFunction:
    """
    均匀网格上的复值 d 维采样函数，节点 tᵢ = a + i·h

    Args:
        a: 起点
        h: 步长
        values: 形状 (n, d) 的复数组
        failed: 显式标记失败（允许非有限值）
    """
    a: float
    h: float
    values: np.ndarray
    failed: bool = False

    def __post_init__(self):
        values = np.asarray(self.values, dtype=complex)
        if values.ndim == 1:
            values = values.reshape(-1, 1)
        if values.ndim != 2 or values.shape[0] < 1:
            raise GridError(f"采样值形状非法: {values.shape}")
        if not self.h > 0:
            raise GridError(f"步长必须为正: h={self.h}")
        if not self.failed and not np.all(np.isfinite(values)):
            raise DomainError("采样值含 NaN/Inf 且未标记为失败")
        self.values = values
        self.a = float(self.a)
        self.h = float(self.h)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    @property
    def b(self) -> float:
        return self.a + (self.n - 1) * self.h

    @property
    def times(self) -> np.ndarray:
        return self.a + self.h * np.arange(self.n)

    @property
    def interval(self) -> Tuple[float, float]:
        return (self.a, self.b)

    def index_of(self, t: float) -> int:
        """
        网格节点下标

        Raises:
            GridAlignmentError: t 不在网格上
            DomainError: t 超出采样区间
        """
        ratio = (t - self.a) / self.h
        index = int(round(ratio))
        if abs(ratio - index) > ALIGNMENT_TOL:
            raise GridAlignmentError(f"t={t!r} 不在网格上 (a={self.a!r}, h={self.h!r})")
        if index < 0 or index >= self.n:
            raise DomainError(f"t={t!r} 超出采样区间 [{self.a!r}, {self.b!r}]")
        return index

    def value_at(self, t: float) -> np.ndarray:
        return self.values[self.index_of(t)]

    def window(self, t1: float, t2: float) -> "SampledFunction":
        """截取 [t1, t2] 上的子网格"""
        i1, i2 = self.index_of(t1), self.index_of(t2)
        if i2 < i1:
            raise DomainError(f"空窗口 [{t1!r}, {t2!r}]")
        return SampledFunction(self.a + i1 * self.h, self.h, self.values[i1:i2 + 1], self.failed)

    def with_values(self, values: np.ndarray) -> "SampledFunction":
        """同一网格上的新采样值"""
        return SampledFunction(self.a, self.h, values, self.failed)

    def component(self, j: int) -> "SampledFunction":
        return SampledFunction(self.a, self.h, self.values[:, j:j + 1], self.failed)

    def same_grid(self, other: "SampledFunction") -> bool:
        return (
            self.n == other.n
            and abs(self.h - other.h) <= ALIGNMENT_TOL * self.h
            and abs(self.a - other.a) <= ALIGNMENT_TOL * self.h
        )

    def __mul__(self, other: "SampledFunction") -> "SampledFunction":
        if not self.same_grid(other):
            raise GridAlignmentError("逐点乘积要求相同网格")
        return self.with_values(self.values * other.values)

    def __add__(self, other: "SampledFunction") -> "SampledFunction":
        if not self.same_grid(other):
            raise GridAlignmentError("逐点求和要求相同网格")
        return self.with_values(self.values + other.values)

    def scaled(self, factor: complex) -> "SampledFunction":
        return self.with_values(self.values * factor)


@dataclass(frozen=True)
class EpsilonSchedule:
    """
    几何 ε 序列 εⱼ = ε₀·rʲ

    Args:
        eps0: 最大尺度 ε₀
        ratio: 公比 r ∈ (0,1)
        levels: 层数 n ≥ 3
    """
    eps0: float
    ratio: float = 0.5
    levels: int = 5

    def __post_init__(self):
        if not self.eps0 > 0:
            raise ExtractionError(f"ε₀ 必须为正: {self.eps0}")
        if not 0 < self.ratio < 1:
            raise ExtractionError(f"公比必须在 (0,1) 内: {self.ratio}")
        if self.levels < 3:
            raise ExtractionError(f"外推至少需要 3 层，实际 {self.levels}")

    @classmethod
    def default(cls, h: float, eps0_steps: int = 16, ratio: float = 0.5, levels: int = 5) -> "EpsilonSchedule":
        """默认序列：ε₀ = 16h，r = 1/2，5 层（最小 ε 为 h）"""
        return cls(eps0_steps * h, ratio, levels)

    @property
    def epsilons(self) -> Tuple[float, ...]:
        return tuple(self.eps0 * self.ratio ** j for j in range(self.levels))

    def steps(self, h: float) -> Tuple[int, ...]:
        """每层 ε 对应的网格步数，校验全部对齐"""
        return tuple(grid_steps(eps, h, f"ε{j}") for j, eps in enumerate(self.epsilons))

    def to_dict(self) -> dict:
        return {
            "eps0": self.eps0,
            "ratio": self.ratio,
            "levels": self.levels,
            "epsilons": list(self.epsilons),
        }


@dataclass
class ExtractionReport:
    """
    单点外推结果

    Args:
        value: 外推值
        raw: 各层原始值
        converged: 收敛标志
        order: 估计阶数（无法估计时为 None）
        error_estimate: 最后两条对角元之差
        fit_residual: 最后一行最后两列之差
        differences: 相邻对角元之差序列
    """
    value: np.ndarray
    raw: np.ndarray
    converged: bool
    order: Optional[float]
    error_estimate: float
    fit_residual: float
    differences: List[float] = field(default_factory=list)


@dataclass
class ExtractionSummary:
    """
    逐点外推摘要，数组形状与输出场一致 (n, d)
    """
    converged: np.ndarray
    error_estimate: np.ndarray
    order: np.ndarray
    raw: np.ndarray
    schedule: EpsilonSchedule

    @property
    def converged_fraction(self) -> float:
        return float(np.mean(self.converged)) if self.converged.size else 1.0

    @property
    def all_converged(self) -> bool:
        return bool(np.all(self.converged))

    @property
    def point_converged(self) -> np.ndarray:
        """逐点（所有分量）收敛标志"""
        return np.all(self.converged, axis=-1)


def _richardson(raw: np.ndarray, ratio: float) -> Tuple[List[np.ndarray], List[np.ndarray]]:
    # T[j][m] = (T[j][m-1] - r^m T[j-1][m-1]) / (1 - r^m)
    levels = raw.shape[0]
    previous = [raw[j] for j in range(levels)]
    diagonal = [raw[0]]
    last_row = [raw[-1]]
    for m in range(1, levels):
        factor = ratio ** m
        current: List[Optional[np.ndarray]] = [None] * levels
        for j in range(m, levels):
            current[j] = (previous[j] - factor * previous[j - 1]) / (1.0 - factor)
        diagonal.append(current[m])
        last_row.append(current[levels - 1])
        previous = current
    return diagonal, last_row


def _extract(raw: np.ndarray, ratio: float, rtol: float, atol: float):
    # 沿第 0 轴外推，其余维度逐点处理
    levels = raw.shape[0]
    if levels < 3:
        raise ExtractionError(f"外推至少需要 3 层，实际 {levels}")
    diagonal, last_row = _richardson(raw, ratio)
    value = diagonal[-1]
    error_estimate = np.abs(diagonal[-1] - diagonal[-2])
    fit_residual = np.abs(last_row[-1] - last_row[-2])
    deltas = [np.abs(diagonal[j] - diagonal[j - 1]) for j in range(1, levels)]

    floored = [np.maximum(delta, atol) for delta in deltas[-3:]]
    monotone = np.ones(np.shape(value), dtype=bool)
    for earlier, later in zip(floored[:-1], floored[1:]):
        monotone &= later <= earlier

    bound = atol + rtol * np.abs(value)
    converged = (
        np.isfinite(value)
        & (error_estimate <= bound)
        & (fit_residual <= bound)
        & monotone
    )

    raw_last = np.abs(raw[-1] - raw[-2])
    raw_prev = np.abs(raw[-2] - raw[-3])
    with np.errstate(divide="ignore", invalid="ignore"):
        order = np.where(
            (raw_last > 0) & (raw_prev > 0),
            np.log(raw_prev / np.where(raw_last > 0, raw_last, 1.0)) / math.log(1.0 / ratio),
            np.nan,
        )
    return value, converged, error_estimate, fit_residual, order, deltas


def extract_limit(
    raw: Sequence,
    schedule: EpsilonSchedule,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
) -> ExtractionReport:
    """
    由各层原始值外推 ε→0 极限

    Args:
        raw: 每层一个（标量或向量）原始值
        schedule: ε 序列
        rtol: 相对容差
        atol: 绝对容差

    Returns:
        ExtractionReport
    """
    values = np.asarray(raw, dtype=complex)
    if values.shape[0] != schedule.levels:
        raise ExtractionError(f"原始值层数 {values.shape[0]} 与序列层数 {schedule.levels} 不一致")
    value, converged, error_estimate, fit_residual, order, deltas = _extract(
        values, schedule.ratio, rtol, atol
    )
    is_converged = bool(np.all(converged))
    order_value = float(np.nanmin(order)) if np.any(np.isfinite(order)) else None
    if not is_converged:
        # 发散时返回最后一层原始值
        value = values[-1]
    return ExtractionReport(
        value=np.asarray(value),
        raw=values,
        converged=is_converged,
        order=order_value,
        error_estimate=float(np.max(error_estimate)),
        fit_residual=float(np.max(fit_residual)),
        differences=[float(np.max(delta)) for delta in deltas],
    )


def delta_sided(f: SampledFunction, eps: float, t: float, side: str) -> np.ndarray:
    """
    ε 右（side='+'）或 ε 左（side='-'）量子导数

    Args:
        f: 采样函数
        eps: 尺度 ε
        t: 网格节点
        side: '+' 或 '-'

    Returns:
        复向量 Δ^σ_ε f(t)
    """
    k = grid_steps(eps, f.h)
    i = f.index_of(t)
    if side == "+":
        if i + k >= f.n:
            raise DomainError(f"模板 t+ε={t + eps!r} 超出采样区间")
        return (f.values[i + k] - f.values[i]) / eps
    if side == "-":
        if i - k < 0:
            raise DomainError(f"模板 t-ε={t - eps!r} 超出采样区间")
        return (f.values[i] - f.values[i - k]) / eps
    raise ValueError(f"side 必须是 '+' 或 '-': {side!r}")


def _box(plus: np.ndarray, minus: np.ndarray) -> np.ndarray:
    # 实部、虚部分别套用定义后重组
    def real_box(p, m):
        return 0.5 * ((p + m) - 1j * (p - m))

    return real_box(plus.real, minus.real) + 1j * real_box(plus.imag, minus.imag)


def _box_values(values: np.ndarray, k: int, eps: float) -> np.ndarray:
    n = values.shape[0]
    forward = values[2 * k:]
    centre = values[k:n - k]
    backward = values[:n - 2 * k]
    return _box((forward - centre) / eps, (centre - backward) / eps)


def scale_derivative_eps(f: SampledFunction, eps: float) -> SampledFunction:
    """
    固定 ε 的复值尺度导数 □_ε f

    Args:
        f: 采样函数
        eps: 尺度 ε（步长整数倍）

    Returns:
        定义在 [a+ε, b−ε] 上的采样函数
    """
    k = grid_steps(eps, f.h)
    if f.n - 1 <= 2 * k:
        logger.error(f"区间 [{f.a}, {f.b}] 不足以容纳 ε={eps}")
        raise DomainError(f"区间长度 {f.b - f.a!r} 不大于 2ε={2 * eps!r}")
    return SampledFunction(f.a + k * f.h, f.h, _box_values(f.values, k, eps))


@dataclass
class LevelFields:
    """
    各层 □_εⱼ f 在公共窗口 [a+ε₀, b−ε₀] 上的原始值

    Args:
        a: 窗口起点
        h: 步长
        raw: 形状 (levels, n, d)
        schedule: ε 序列
    """
    a: float
    h: float
    raw: np.ndarray
    schedule: EpsilonSchedule

    def level(self, j: int) -> SampledFunction:
        return SampledFunction(self.a, self.h, self.raw[j])


def scale_derivative_eps_levels(f: SampledFunction, schedule: EpsilonSchedule) -> LevelFields:
    """
    按 ε 序列逐层计算 □_ε f，并裁剪到最大 ε 对应的公共窗口

    Args:
        f: 采样函数
        schedule: ε 序列

    Returns:
        LevelFields
    """
    steps = schedule.steps(f.h)
    k0 = steps[0]
    if f.n - 1 <= 2 * k0:
        logger.error(f"区间 [{f.a}, {f.b}] 不足以容纳 ε₀={schedule.eps0}")
        raise DomainError(f"区间长度 {f.b - f.a!r} 不大于 2ε₀={2 * schedule.eps0!r}")
    n_out = f.n - 2 * k0
    raw = np.empty((schedule.levels, n_out, f.d), dtype=complex)
    for j, (k, eps) in enumerate(zip(steps, schedule.epsilons)):
        full = _box_values(f.values, k, eps)
        offset = k0 - k
        raw[j] = full[offset:offset + n_out]
    return LevelFields(f.a + k0 * f.h, f.h, raw, schedule)


def extract_field(
    levels: LevelFields,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
) -> Tuple[SampledFunction, ExtractionSummary]:
    """
    对各层原始场逐点外推；未收敛点取最后一层原始值
    """
    value, converged, error_estimate, _, order, _ = _extract(
        levels.raw, levels.schedule.ratio, rtol, atol
    )
    result = np.where(converged, value, levels.raw[-1])
    summary = ExtractionSummary(
        converged=np.asarray(converged, dtype=bool),
        error_estimate=np.asarray(error_estimate),
        order=np.asarray(order),
        raw=levels.raw,
        schedule=levels.schedule,
    )
    return SampledFunction(levels.a, levels.h, result), summary


def scale_derivative(
    f: SampledFunction,
    schedule: EpsilonSchedule,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
) -> Tuple[SampledFunction, ExtractionSummary]:
    """
    尺度导数 □f/□t = ⟨□_ε f/□t⟩

    Args:
        f: 采样函数
        schedule: ε 序列
        rtol: 外推相对容差
        atol: 外推绝对容差

    Returns:
        (输出区间两端各收缩 ε₀ 的采样函数, 逐点外推摘要)
    """
    levels = scale_derivative_eps_levels(f, schedule)
    result, summary = extract_field(levels, rtol, atol)
    logger.debug(
        f"□f 于 [{result.a:.6g}, {result.b:.6g}]，收敛比例 {summary.converged_fraction:.3f}"
    )
    if not summary.all_converged:
        logger.info(f"尺度导数有 {np.count_nonzero(~summary.converged)} 个分量点未收敛，取最后一层原始值")
    return result, summary


def scale_derivative_k(
    f: SampledFunction,
    k: int,
    schedule: EpsilonSchedule,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
) -> Tuple[SampledFunction, List[ExtractionSummary]]:
    """
    k 阶尺度导数 □/□t ∘ ⋯ ∘ □/□t

    Returns:
        (结果, 每次作用的外推摘要)
    """
    if k < 1:
        raise ValueError(f"阶数必须为正整数: {k}")
    current = f
    summaries = []
    for order in range(k):
        if current.n - 1 <= 2 * grid_steps(schedule.eps0, current.h):
            logger.error(f"第 {order + 1} 次作用时区间已耗尽")
            raise DomainError(f"k={k} 次收缩后区间耗尽 (第 {order + 1} 次)")
        current, summary = scale_derivative(current, schedule, rtol, atol)
        summaries.append(summary)
    return current, summaries


def integrate_trapezoid(f: SampledFunction, t1: float, t2: float) -> np.ndarray:
    """
    网格节点上的复合梯形积分

    Returns:
        形状 (d,) 的复向量
    """
    i1, i2 = f.index_of(t1), f.index_of(t2)
    if i2 < i1:
        raise DomainError(f"积分区间反向: [{t1!r}, {t2!r}]")
    segment = f.values[i1:i2 + 1]
    if segment.shape[0] == 1:
        return np.zeros(f.d, dtype=complex)
    return f.h * (np.sum(segment, axis=0) - 0.5 * (segment[0] + segment[-1]))


def field_norms(values: np.ndarray, h: float, mask: Optional[np.ndarray] = None) -> Tuple[float, float]:
    """
    掩码内的 sup 范数与 L2 范数 sqrt(h·Σ|v|²)

    Args:
        values: 形状 (n, d) 的复数组
        h: 步长
        mask: 形状 (n,) 的布尔掩码

    Returns:
        (sup, l2)
    """
    values = np.asarray(values)
    if mask is not None:
        values = values[np.asarray(mask, dtype=bool)]
    if values.size == 0:
        return 0.0, 0.0
    magnitude = np.abs(values)
    return float(np.max(magnitude)), float(math.sqrt(h * np.sum(magnitude ** 2)))


def epsilon_mean(
    func: Callable[[float], Union[complex, float]],
    eps: float,
    t: float,
    side: str,
) -> complex:
    """
    ε 平均函数 f^σ_ε(t) = (σ/ε)∫_t^{t+σε} f，用 scipy 自适应积分

    Args:
        func: 可在任意实数 t 求值的标量函数
        eps: 尺度 ε
        t: 求值点
        side: '+' 或 '-'
    """
    sigma = 1.0 if side == "+" else -1.0
    upper = t + sigma * eps

    def real_part(s):
        return float(np.real(func(s)))

    def imag_part(s):
        return float(np.imag(func(s)))

    re_value, _ = integrate.quad(real_part, t, upper, epsabs=1e-14, epsrel=1e-12)
    im_value, _ = integrate.quad(imag_part, t, upper, epsabs=1e-14, epsrel=1e-12)
    return sigma / eps * complex(re_value, im_value)


@dataclass
class RuleReport:
    """
    Leibniz 规则残差

    Args:
        t: 窗口节点
        residual: 残差场 (n, d)
        regime: 逐点是否使用外推值（否则为最后一层原始值）
        sup: sup 范数
        l2: L2 范数
        interval: 有效区间
        hypothesis_ok: α+β>1 是否成立
    """
    t: np.ndarray
    residual: np.ndarray
    regime: np.ndarray
    sup: float
    l2: float
    interval: Tuple[float, float]
    alpha: float
    beta: float
    hypothesis_ok: bool


def leibniz_residual(
    f: SampledFunction,
    g: SampledFunction,
    alpha: float,
    beta: float,
    schedule: EpsilonSchedule,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
) -> RuleReport:
    """
    量子 Leibniz 规则残差 □(f·g) − (□f·g + f·□g)

    每个节点统一取一种 ε 机制：三个提取都收敛时用外推值，否则三者都用最后一层原始值。

    Args:
        f: 采样函数
        g: 采样函数（与 f 同网格）
        alpha: f 的 Hölder 指数
        beta: g 的 Hölder 指数
        schedule: ε 序列

    Returns:
        RuleReport
    """
    if not f.same_grid(g) or f.d != g.d:
        logger.error("Leibniz 检验的两个函数网格不一致")
        raise GridAlignmentError("f 与 g 必须在同一网格上且维数相同")
    hypothesis_ok = alpha + beta > 1
    if not hypothesis_ok:
        logger.warning(f"Leibniz 规则的假设 α+β>1 不成立: α={alpha}, β={beta}")

    product = f * g
    df, sf = scale_derivative(f, schedule, rtol, atol)
    dg, sg = scale_derivative(g, schedule, rtol, atol)
    dfg, sfg = scale_derivative(product, schedule, rtol, atol)

    regime = sf.point_converged & sg.point_converged & sfg.point_converged
    use_extracted = regime[:, None]
    d_f = np.where(use_extracted, df.values, sf.raw[-1])
    d_g = np.where(use_extracted, dg.values, sg.raw[-1])
    d_fg = np.where(use_extracted, dfg.values, sfg.raw[-1])

    window = f.window(df.a, df.b)
    g_window = g.window(df.a, df.b)
    residual = d_fg - (d_f * g_window.values + window.values * d_g)
    sup, l2 = field_norms(residual, f.h)
    logger.info(
        f"Leibniz 残差 sup={sup:.3e}, L2={l2:.3e}, 外推机制占比 {np.mean(regime):.3f}"
    )
    return RuleReport(
        t=df.times,
        residual=residual,
        regime=regime,
        sup=sup,
        l2=l2,
        interval=(df.a, df.b),
        alpha=alpha,
        beta=beta,
        hypothesis_ok=hypothesis_ok,
    )


@dataclass
class BarrowReport:
    """
    量子 Barrow 规则检验结果

    Args:
        residual: |∫□f − (f(t₂)−f(t₁))| 的分量最大值
        integral: ∫□f
        increment: f(t₂)−f(t₁)
        level_integrals: 各层 ∫□_εⱼ f
        level_defects: 各层 |∫□_εⱼ f − (f(t₂)−f(t₁))|
        trend_ok: 各层缺陷随 ε 减小而不增（或低于下限）
        interval: 积分区间
    """
    residual: float
    integral: np.ndarray
    increment: np.ndarray
    level_integrals: np.ndarray
    level_defects: List[float]
    trend_ok: bool
    interval: Tuple[float, float]
    epsilons: Tuple[float, ...]


def barrow_residual(
    f: SampledFunction,
    t1: float,
    t2: float,
    schedule: EpsilonSchedule,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
    trend_floor: float = 1e-12,
) -> BarrowReport:
    """
    量子 Barrow 规则残差，并报告 ∫□_ε f 随 ε 的趋势

    Args:
        f: 采样函数
        t1: 积分下限
        t2: 积分上限
        schedule: ε 序列

    Returns:
        BarrowReport
    """
    levels = scale_derivative_eps_levels(f, schedule)
    derivative, _ = extract_field(levels, rtol, atol)
    if not (derivative.a - ALIGNMENT_TOL * f.h <= t1 <= t2 <= derivative.b + ALIGNMENT_TOL * f.h):
        logger.error(f"[{t1}, {t2}] 不在 □f 的定义域 [{derivative.a}, {derivative.b}] 内")
        raise DomainError(f"[{t1!r}, {t2!r}] 超出 □f 的定义域 [{derivative.a!r}, {derivative.b!r}]")

    integral = integrate_trapezoid(derivative, t1, t2)
    increment = f.value_at(t2) - f.value_at(t1)
    residual = float(np.max(np.abs(integral - increment)))

    level_integrals = np.array(
        [integrate_trapezoid(levels.level(j), t1, t2) for j in range(schedule.levels)]
    )
    level_defects = [float(np.max(np.abs(value - increment))) for value in level_integrals]
    floored = [max(defect, trend_floor) for defect in level_defects]
    trend_ok = all(later <= earlier for earlier, later in zip(floored[:-1], floored[1:]))
    if not trend_ok:
        logger.warning(f"∫□_ε f 的缺陷未随 ε 减小: {level_defects}")
    logger.info(f"Barrow 残差 {residual:.3e} 于 [{t1:.6g}, {t2:.6g}]")
    return BarrowReport(
        residual=residual,
        integral=integral,
        increment=increment,
        level_integrals=level_integrals,
        level_defects=level_defects,
        trend_ok=trend_ok,
        interval=(t1, t2),
        epsilons=schedule.epsilons,
    )


@dataclass
class HolderEstimate:
    """
    Hölder 指数估计

    Args:
        alpha: 截断到 (0,1] 的指数（退化时为 None）
        slope: 回归斜率
        r_squared: 拟合优度
        scales: 尺度 h·2^j
        increments: 各尺度的 sup 增量
        degenerate: 常数输入
    """
    alpha: Optional[float]
    slope: Optional[float]
    r_squared: Optional[float]
    scales: List[float]
    increments: List[float]
    degenerate: bool


def holder_estimate(f: SampledFunction, scales: int = 7, min_scales: int = 4) -> HolderEstimate:
    """
    以 log sup 增量对 log 尺度回归估计 Hölder 指数

    Args:
        f: 采样函数
        scales: 尺度个数，尺度为 h·2^j (j=0..scales-1)
        min_scales: 最少可用尺度数

    Returns:
        HolderEstimate
    """
    lags = [2 ** j for j in range(scales) if 2 ** j < f.n - 1]
    if len(lags) < min_scales:
        logger.error(f"可用二进尺度只有 {len(lags)} 个")
        raise DomainError(f"至少需要 {min_scales} 个二进尺度，网格只提供 {len(lags)} 个")
    step_scales = [lag * f.h for lag in lags]
    increments = [float(np.max(np.abs(f.values[lag:] - f.values[:-lag]))) for lag in lags]

    if min(increments) <= 0.0:
        logger.warning("输入在某一尺度上增量为零，Hölder 指数无定义")
        return HolderEstimate(None, None, None, step_scales, increments, True)

    x = np.log(step_scales)
    y = np.log(increments)
    slope, intercept = np.polyfit(x, y, 1)
    fitted = slope * x + intercept
    total = float(np.sum((y - np.mean(y)) ** 2))
    r_squared = 1.0 - float(np.sum((y - fitted) ** 2)) / total if total > 0 else 1.0
    alpha = float(min(max(slope, np.finfo(float).eps), 1.0))
    logger.info(f"Hölder 指数估计 α={alpha:.4f} (斜率 {slope:.4f}, R²={r_squared:.4f})")
    return HolderEstimate(alpha, float(slope), r_squared, step_scales, increments, False)
