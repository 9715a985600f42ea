#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
函数库
光滑解析函数与 Hölder 连续、处处不可微的生成函数，以及它们的文本形式和经典导数
"""

import re
import math
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from libs.errors import FunctionSpecError, GridAlignmentError
from libs.scale_calculus import ALIGNMENT_TOL, SampledFunction

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]


def _fmt(value: float) -> str:
    return repr(float(value))


class FunctionSpec(ABC):
    """
    闭式函数规格基类
    evaluate 接受任意实数 t（标量或数组）
    """

    @abstractmethod
    def evaluate(self, t: ArrayLike, grid_step: Optional[float] = None) -> np.ndarray:
        """
        逐点求值

        Args:
            t: 时间
            grid_step: 采样步长；给定时超过 Nyquist 频率的 Weierstrass 项被舍弃
        """

    @abstractmethod
    def to_text(self) -> str:
        """文本形式，可由 parse_function_spec 读回"""

    def knots(self) -> Tuple[float, ...]:
        """不可微点"""
        return ()

    def __call__(self, t: ArrayLike) -> np.ndarray:
        return self.evaluate(t)

    def __str__(self) -> str:
        return self.to_text()


@dataclass(frozen=True)
class Polynomial(FunctionSpec):
    """多项式，系数按升幂排列"""
    coefficients: Tuple[float, ...]

    def __post_init__(self):
        if not self.coefficients:
            raise FunctionSpecError("多项式至少需要一个系数")
        object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))

    def evaluate(self, t, grid_step=None):
        return np.polynomial.polynomial.polyval(np.asarray(t, dtype=float), self.coefficients)

    def to_text(self):
        return "poly(" + ", ".join(_fmt(c) for c in self.coefficients) + ")"

    def derivative(self) -> "Polynomial":
        if len(self.coefficients) == 1:
            return Polynomial((0.0,))
        return Polynomial(tuple(k * c for k, c in enumerate(self.coefficients) if k > 0))


@dataclass(frozen=True)
class Trig(FunctionSpec):
    """
    kind(frequency·t + phase)

    Args:
        kind: 'sin' 或 'cos'
        frequency: 角频率
        phase: 相位
    """
    kind: str
    frequency: float = 1.0
    phase: float = 0.0

    def __post_init__(self):
        if self.kind not in ("sin", "cos"):
            raise FunctionSpecError(f"三角函数类型必须是 sin 或 cos: {self.kind!r}")

    def evaluate(self, t, grid_step=None):
        argument = self.frequency * np.asarray(t, dtype=float) + self.phase
        return np.sin(argument) if self.kind == "sin" else np.cos(argument)

    def to_text(self):
        return f"{self.kind}({_fmt(self.frequency)}, {_fmt(self.phase)})"

    def derivative(self) -> FunctionSpec:
        if self.kind == "sin":
            return ScaledSum(((self.frequency, Trig("cos", self.frequency, self.phase)),))
        return ScaledSum(((-self.frequency, Trig("sin", self.frequency, self.phase)),))


@dataclass(frozen=True)
class Weierstrass(FunctionSpec):
    """
    截断 Weierstrass 函数 W(t) = Σ_{n<terms} aⁿ cos(bⁿ π t)
    Hölder 指数 α = ln(1/a)/ln b
    """
    a: float
    b: int
    terms: int

    def __post_init__(self):
        if not 0 < self.a < 1:
            raise FunctionSpecError(f"Weierstrass 要求 0 < a < 1: a={self.a}")
        if int(self.b) != self.b or self.b < 3 or int(self.b) % 2 == 0:
            raise FunctionSpecError(f"Weierstrass 要求 b 为不小于 3 的奇数: b={self.b}")
        if self.a * self.b <= 1:
            raise FunctionSpecError(f"Weierstrass 要求 ab > 1: a·b={self.a * self.b}")
        if self.terms < 1:
            raise FunctionSpecError(f"项数必须为正: {self.terms}")
        object.__setattr__(self, "b", int(self.b))
        object.__setattr__(self, "terms", int(self.terms))

    @property
    def alpha(self) -> float:
        return math.log(1.0 / self.a) / math.log(self.b)

    def resolved_terms(self, grid_step: Optional[float] = None) -> int:
        """满足 bⁿ·h < 1 的项数"""
        if grid_step is None:
            return self.terms
        kept = 0
        while kept < self.terms and self.b ** kept * grid_step < 1.0:
            kept += 1
        if kept < self.terms:
            logger.debug(f"Weierstrass 在 h={grid_step} 下舍弃 {self.terms - kept} 个超出 Nyquist 频率的项")
        return kept

    def evaluate(self, t, grid_step=None):
        t = np.asarray(t, dtype=float)
        total = np.zeros_like(t)
        for n in range(self.resolved_terms(grid_step)):
            total = total + self.a ** n * np.cos(self.b ** n * math.pi * t)
        return total

    def to_text(self):
        return f"weierstrass({_fmt(self.a)}, {self.b}, {self.terms})"

    def derivative(self) -> FunctionSpec:
        return ScaledSum(tuple(
            (-(self.a ** n) * self.b ** n * math.pi, Trig("sin", self.b ** n * math.pi, 0.0))
            for n in range(self.terms)
        ))


@dataclass(frozen=True)
class AbsPow(FunctionSpec):
    """|t − center|^exponent"""
    center: float = 0.0
    exponent: float = 1.0

    def __post_init__(self):
        if not self.exponent > 0:
            raise FunctionSpecError(f"abspow 指数必须为正: {self.exponent}")

    def evaluate(self, t, grid_step=None):
        return np.abs(np.asarray(t, dtype=float) - self.center) ** self.exponent

    def to_text(self):
        return f"abspow({_fmt(self.center)}, {_fmt(self.exponent)})"

    def knots(self):
        return (float(self.center),)


@dataclass(frozen=True)
class Piecewise(FunctionSpec):
    """
    分段函数，区间 [lo, hi) 首尾相接（最后一段为闭区间）
    区间外的点由最近的一段延拓求值
    """
    pieces: Tuple[Tuple[float, float, FunctionSpec], ...]

    def __post_init__(self):
        if not self.pieces:
            raise FunctionSpecError("分段函数至少需要一段")
        for lo, hi, _ in self.pieces:
            if not lo < hi:
                raise FunctionSpecError(f"分段区间非法: [{lo}, {hi}]")
        for (_, hi, _), (lo, _, _) in zip(self.pieces[:-1], self.pieces[1:]):
            if hi != lo:
                raise FunctionSpecError(f"分段区间不连续: {hi} ≠ {lo}")

    @property
    def domain(self) -> Tuple[float, float]:
        return (self.pieces[0][0], self.pieces[-1][1])

    def evaluate(self, t, grid_step=None):
        t = np.asarray(t, dtype=float)
        boundaries = np.array([hi for _, hi, _ in self.pieces[:-1]])
        selector = np.searchsorted(boundaries, t, side="right")
        result = np.zeros(t.shape, dtype=float)
        for index, (_, _, spec) in enumerate(self.pieces):
            chosen = selector == index
            if np.any(chosen):
                result = np.where(chosen, spec.evaluate(t, grid_step), result)
        return result

    def to_text(self):
        parts = [f"[{_fmt(lo)}, {_fmt(hi)}] {spec.to_text()}" for lo, hi, spec in self.pieces]
        return "piecewise(" + ", ".join(parts) + ")"

    def knots(self):
        inner = [hi for _, hi, _ in self.pieces[:-1]]
        for lo, hi, spec in self.pieces:
            inner.extend(k for k in spec.knots() if lo < k < hi)
        return tuple(sorted(inner))


@dataclass(frozen=True)
class ScaledSum(FunctionSpec):
    """Σ cᵢ·specᵢ"""
    terms: Tuple[Tuple[float, FunctionSpec], ...]

    def __post_init__(self):
        if not self.terms:
            raise FunctionSpecError("加权和至少需要一项")

    def evaluate(self, t, grid_step=None):
        t = np.asarray(t, dtype=float)
        total = np.zeros(t.shape, dtype=float)
        for coefficient, spec in self.terms:
            total = total + coefficient * spec.evaluate(t, grid_step)
        return total

    def to_text(self):
        return "sum(" + ", ".join(f"{_fmt(c)} * {spec.to_text()}" for c, spec in self.terms) + ")"

    def knots(self):
        return tuple(sorted({k for _, spec in self.terms for k in spec.knots()}))


def make_weierstrass(a: float, b: int, terms: int = 25) -> Weierstrass:
    """
    构造 Weierstrass 规格

    Args:
        a: 振幅比 0 < a < 1
        b: 频率比，奇数 ≥ 3，且 ab > 1
        terms: 项数 ≥ 1
    """
    spec = Weierstrass(a, b, terms)
    logger.debug(f"Weierstrass(a={a}, b={b}, terms={terms})，α={spec.alpha:.6f}")
    return spec


def sample_on_grid(
    spec: FunctionSpec,
    a: float,
    b: float,
    h: float,
    nyquist: bool = True,
) -> SampledFunction:
    """
    在网格 tᵢ = a + i·h 上采样

    Args:
        spec: 函数规格
        a: 起点
        b: 终点
        h: 步长，(b−a)/h 必须为整数
        nyquist: 是否舍弃 bⁿ·h ≥ 1 的 Weierstrass 项

    Returns:
        SampledFunction
    """
    if not h > 0:
        raise GridAlignmentError(f"步长必须为正: h={h}")
    ratio = (b - a) / h
    n = int(round(ratio))
    if n < 0 or abs(ratio - n) > ALIGNMENT_TOL:
        logger.error(f"[{a}, {b}] 与步长 {h} 不对齐")
        raise GridAlignmentError(f"(b−a)/h = {ratio!r} 不是整数")
    t = a + h * np.arange(n + 1)
    values = spec.evaluate(t, h if nyquist else None)
    return SampledFunction(a, h, np.asarray(values, dtype=complex))


def sample_vector(
    specs: Sequence[FunctionSpec],
    a: float,
    b: float,
    h: float,
    nyquist: bool = True,
) -> SampledFunction:
    """逐分量采样 d 维函数"""
    columns = [sample_on_grid(spec, a, b, h, nyquist).values[:, 0] for spec in specs]
    return SampledFunction(a, h, np.stack(columns, axis=1))


@dataclass(frozen=True)
class DerivativeResult:
    """
    经典导数

    Args:
        spec: 导数规格；无闭式导数时为 None
        knots: 不可微点
        differentiable: 是否处处可微
    """
    spec: Optional[FunctionSpec]
    knots: Tuple[float, ...]
    differentiable: bool


def _derivative_spec(spec: FunctionSpec, grid_step: Optional[float]) -> Optional[FunctionSpec]:
    if isinstance(spec, Weierstrass):
        # 高频项被舍弃时不给经典导数
        if spec.resolved_terms(grid_step) < spec.terms:
            return None
        return spec.derivative()
    if isinstance(spec, (Polynomial, Trig)):
        return spec.derivative()
    if isinstance(spec, AbsPow):
        return None
    if isinstance(spec, Piecewise):
        pieces = []
        for lo, hi, inner in spec.pieces:
            derived = _derivative_spec(inner, grid_step)
            if derived is None:
                return None
            pieces.append((lo, hi, derived))
        return Piecewise(tuple(pieces))
    if isinstance(spec, ScaledSum):
        terms = []
        for coefficient, inner in spec.terms:
            derived = _derivative_spec(inner, grid_step)
            if derived is None:
                return None
            terms.append((coefficient, derived))
        return ScaledSum(tuple(terms))
    raise FunctionSpecError(f"未知规格类型: {type(spec).__name__}")


def classical_derivative(spec: FunctionSpec, grid_step: Optional[float] = None) -> DerivativeResult:
    """
    经典导数规格及不可微点标记

    Args:
        spec: 函数规格
        grid_step: 采样步长；给出时按 sample_on_grid 的 Nyquist 规则判断 Weierstrass 是否仍有经典导数

    Returns:
        DerivativeResult
    """
    knots = spec.knots()
    derived = _derivative_spec(spec, grid_step)
    if knots:
        logger.debug(f"{spec.to_text()} 在 {knots} 处不可微")
    return DerivativeResult(derived, knots, not knots and derived is not None)


# ---------------------------------------------------------------------------
# 文本形式
# ---------------------------------------------------------------------------

_SPEC_TOKEN_RE = re.compile(
    r"\s*(?:(?P<number>[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_]+)"
    r"|(?P<op>[()\[\],*]))"
)


class _SpecParser:
    """函数规格文本的递归下降解析器"""

    def __init__(self, text: str):
        self.text = text
        self.tokens: List[Tuple[str, str, int]] = []
        pos = 0
        end = len(text.rstrip())
        while pos < end:
            match = _SPEC_TOKEN_RE.match(text, pos)
            if not match or match.end() == pos:
                raise FunctionSpecError(f"函数规格中的非法字符 {text[pos:pos + 1]!r} (位置 {pos})")
            kind = match.lastgroup
            self.tokens.append((kind, match.group(kind), match.start(kind)))
            pos = match.end()
        self.pos = 0

    def peek(self) -> Optional[Tuple[str, str, int]]:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def advance(self) -> Tuple[str, str, int]:
        token = self.peek()
        if token is None:
            raise FunctionSpecError(f"函数规格意外结束: {self.text!r}")
        self.pos += 1
        return token

    def expect(self, symbol: str) -> None:
        kind, text, position = self.advance()
        if kind != "op" or text != symbol:
            raise FunctionSpecError(f"期望 {symbol!r}，实际 {text!r} (位置 {position})")

    def at(self, symbol: str) -> bool:
        token = self.peek()
        return token is not None and token[0] == "op" and token[1] == symbol

    def number(self) -> float:
        kind, text, position = self.advance()
        if kind == "name" and text == "pi":
            return math.pi
        if kind != "number":
            raise FunctionSpecError(f"期望数值，实际 {text!r} (位置 {position})")
        return float(text)

    def numbers(self) -> List[float]:
        values = []
        self.expect("(")
        if self.at(")"):
            self.advance()
            return values
        values.append(self.number())
        while self.at(","):
            self.advance()
            values.append(self.number())
        self.expect(")")
        return values

    def parse(self) -> FunctionSpec:
        spec = self.spec()
        if self.peek() is not None:
            raise FunctionSpecError(f"函数规格末尾有多余内容 (位置 {self.peek()[2]})")
        return spec

    def spec(self) -> FunctionSpec:
        token = self.peek()
        if token is None:
            raise FunctionSpecError("空函数规格")
        kind, text, position = token
        if kind == "number":
            self.advance()
            return Polynomial((float(text),))
        if kind != "name":
            raise FunctionSpecError(f"意外的记号 {text!r} (位置 {position})")
        self.advance()
        if text == "poly":
            return Polynomial(tuple(self.numbers()))
        if text in ("sin", "cos"):
            args = self.numbers()
            if len(args) > 2:
                raise FunctionSpecError(f"{text} 最多两个参数 (位置 {position})")
            return Trig(text, *args)
        if text == "weierstrass":
            args = self.numbers()
            if len(args) not in (2, 3):
                raise FunctionSpecError(f"weierstrass 需要 2 或 3 个参数 (位置 {position})")
            return make_weierstrass(args[0], int(args[1]), int(args[2]) if len(args) == 3 else 25)
        if text == "abspow":
            args = self.numbers()
            if len(args) != 2:
                raise FunctionSpecError(f"abspow 需要 2 个参数 (位置 {position})")
            return AbsPow(*args)
        if text == "piecewise":
            return self.piecewise()
        if text == "sum":
            return self.scaled_sum()
        raise FunctionSpecError(f"未知函数规格 {text!r} (位置 {position})")

    def piecewise(self) -> Piecewise:
        pieces = []
        self.expect("(")
        while True:
            self.expect("[")
            lo = self.number()
            self.expect(",")
            hi = self.number()
            self.expect("]")
            pieces.append((lo, hi, self.spec()))
            if not self.at(","):
                break
            self.advance()
        self.expect(")")
        return Piecewise(tuple(pieces))

    def scaled_sum(self) -> ScaledSum:
        terms = []
        self.expect("(")
        while True:
            coefficient = self.number()
            self.expect("*")
            terms.append((coefficient, self.spec()))
            if not self.at(","):
                break
            self.advance()
        self.expect(")")
        return ScaledSum(tuple(terms))


def parse_function_spec(text: str) -> FunctionSpec:
    """
    解析函数规格文本，例如 "weierstrass(0.5, 3, 25)"、"poly(0, 0, 1)"、
    "piecewise([-0.5, 0] poly(0, 1), [0, 1] sin(1, 0))"、"sum(1 * poly(0, 1), 0.01 * weierstrass(0.5, 3, 25))"

    Args:
        text: 文本形式

    Returns:
        FunctionSpec
    """
    return _SpecParser(text).parse()
