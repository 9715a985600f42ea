#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
表达式核心
解析、求值并符号求导时滞变分变量上的表达式（L、φ、H 及其偏导数）
"""

import re
import logging
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Set, Tuple, Union, Iterable

import numpy as np

from libs.errors import (
    DimensionError,
    EvaluationError,
    ExpressionSyntaxError,
    NonDifferentiableError,
    UnknownVariableError,
)

logger = logging.getLogger(__name__)

# 状态类变量的维数为 d，控制类变量的维数为 m
STATE_KINDS = ("q", "qdot", "qtau", "qdottau", "p")
CONTROL_KINDS = ("u", "utau")
VARIABLE_KINDS = ("t",) + STATE_KINDS + CONTROL_KINDS

FUNCTIONS = ("sin", "cos", "exp", "log", "abs", "sign")

# 打印优先级
_PREC_ADD = 1
_PREC_MUL = 2
_PREC_NEG = 3
_PREC_POW = 4
_PREC_ATOM = 5

Value = Union[complex, np.ndarray]


@dataclass(frozen=True)
class Dimensions:
    """
    变量维数

    Args:
        d: 状态维数
        m: 控制维数
    """
    d: int = 1
    m: int = 1

    def __post_init__(self):
        if self.d < 1 or self.m < 1:
            raise DimensionError(f"维数必须为正整数: d={self.d}, m={self.m}")

    def bound(self, kind: str) -> int:
        """返回某类变量的分量上界"""
        if kind == "t":
            return 1
        return self.d if kind in STATE_KINDS else self.m


@dataclass(frozen=True, order=True)
class Variable:
    """
    变量类别加分量下标，例如 qdot[0]

    Args:
        kind: 变量类别，取自 VARIABLE_KINDS
        index: 分量下标
    """
    kind: str
    index: int = 0

    def __post_init__(self):
        if self.kind not in VARIABLE_KINDS:
            raise UnknownVariableError(f"未知变量类别: {self.kind}")
        if self.index < 0 or (self.kind == "t" and self.index != 0):
            raise DimensionError(f"非法分量下标: {self.kind}[{self.index}]")

    def __str__(self) -> str:
        return "t" if self.kind == "t" else f"{self.kind}[{self.index}]"


class Expr:
    """
    表达式树节点基类
    节点不可变，支持 Python 算术运算符构造新树
    """
    precedence = _PREC_ATOM

    def __add__(self, other):
        return Add(self, _coerce(other))

    def __radd__(self, other):
        return Add(_coerce(other), self)

    def __sub__(self, other):
        return Sub(self, _coerce(other))

    def __rsub__(self, other):
        return Sub(_coerce(other), self)

    def __mul__(self, other):
        return Mul(self, _coerce(other))

    def __rmul__(self, other):
        return Mul(_coerce(other), self)

    def __truediv__(self, other):
        return Div(self, _coerce(other))

    def __rtruediv__(self, other):
        return Div(_coerce(other), self)

    def __neg__(self):
        return Neg(self)

    def __pow__(self, exponent: int):
        return Pow(self, int(exponent))

    def __str__(self) -> str:
        return to_text(self)

    def children(self) -> Tuple["Expr", ...]:
        return ()


@dataclass(frozen=True, eq=True)
class Const(Expr):
    value: complex

    def __post_init__(self):
        object.__setattr__(self, "value", complex(self.value))


@dataclass(frozen=True, eq=True)
class Var(Expr):
    var: Variable


@dataclass(frozen=True, eq=True)
class Add(Expr):
    left: Expr
    right: Expr
    precedence = _PREC_ADD

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True, eq=True)
class Sub(Expr):
    left: Expr
    right: Expr
    precedence = _PREC_ADD

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True, eq=True)
class Mul(Expr):
    left: Expr
    right: Expr
    precedence = _PREC_MUL

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True, eq=True)
class Div(Expr):
    left: Expr
    right: Expr
    precedence = _PREC_MUL

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True, eq=True)
class Neg(Expr):
    operand: Expr
    precedence = _PREC_NEG

    def children(self):
        return (self.operand,)


@dataclass(frozen=True, eq=True)
class Pow(Expr):
    base: Expr
    exponent: int
    precedence = _PREC_POW

    def children(self):
        return (self.base,)


@dataclass(frozen=True, eq=True)
class Func(Expr):
    name: str
    arg: Expr

    def __post_init__(self):
        if self.name not in FUNCTIONS:
            raise UnknownVariableError(f"未知函数: {self.name}")

    def children(self):
        return (self.arg,)


def _coerce(value) -> Expr:
    if isinstance(value, Expr):
        return value
    return Const(complex(value))


def var(kind: str, index: int = 0) -> Var:
    """快捷构造变量节点"""
    return Var(Variable(kind, index))


# ---------------------------------------------------------------------------
# 解析
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?j?)"
    r"|(?P<name>[A-Za-z_]+)"
    r"|(?P<op>[-+*/^()\[\]]))"
)
_INTEGER_RE = re.compile(r"\d+")
# 复常数字面量 (a+bj)：只在左括号之后、右括号之前成立，内部不含空白
_COMPLEX_RE = re.compile(
    r"\s*(?P<number>-?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?[+-](?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?j)(?=\s*\))"
)


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    position: int


def _tokenize(text: str) -> List[_Token]:
    tokens = []
    pos = 0
    stripped_end = len(text.rstrip())
    while pos < stripped_end:
        after_paren = bool(tokens) and tokens[-1].kind == "op" and tokens[-1].text == "("
        match = (after_paren and _COMPLEX_RE.match(text, pos)) or _TOKEN_RE.match(text, pos)
        if not match or match.end() == pos:
            raise ExpressionSyntaxError(f"非法字符 {text[pos:pos + 1]!r}", pos)
        kind = match.lastgroup
        start = match.start(kind)
        tokens.append(_Token(kind, match.group(kind), start))
        pos = match.end()
    return tokens


def _number_value(text: str) -> complex:
    if text.endswith("j"):
        return complex(text)
    return complex(float(text))


class _Parser:
    """递归下降解析器"""

    def __init__(self, text: str, dims: Dimensions):
        self.text = text
        self.dims = dims
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self, offset: int = 0) -> Optional[_Token]:
        index = self.pos + offset
        return self.tokens[index] if index < len(self.tokens) else None

    def at_op(self, symbol: str, offset: int = 0) -> bool:
        token = self.peek(offset)
        return token is not None and token.kind == "op" and token.text == symbol

    def advance(self) -> _Token:
        token = self.peek()
        if token is None:
            raise ExpressionSyntaxError("表达式意外结束", len(self.text))
        self.pos += 1
        return token

    def expect_op(self, symbol: str) -> _Token:
        token = self.advance()
        if token.kind != "op" or token.text != symbol:
            raise ExpressionSyntaxError(f"期望 {symbol!r}，实际 {token.text!r}", token.position)
        return token

    def parse(self) -> Expr:
        node = self.expression()
        token = self.peek()
        if token is not None:
            raise ExpressionSyntaxError(f"多余的记号 {token.text!r}", token.position)
        return node

    def expression(self) -> Expr:
        node = self.term()
        while self.at_op("+") or self.at_op("-"):
            op = self.advance().text
            right = self.term()
            node = Add(node, right) if op == "+" else Sub(node, right)
        return node

    def term(self) -> Expr:
        node = self.unary()
        while self.at_op("*") or self.at_op("/"):
            op = self.advance().text
            right = self.unary()
            node = Mul(node, right) if op == "*" else Div(node, right)
        return node

    def unary(self) -> Expr:
        if self.at_op("-"):
            self.advance()
            following = self.peek()
            # 负号紧跟数字字面量时折叠为负常数
            if following is not None and following.kind == "number" and not self.at_op("^", 1):
                self.advance()
                return Const(-_number_value(following.text))
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.at_op("^"):
            self.advance()
            sign = 1
            if self.at_op("-"):
                self.advance()
                sign = -1
            token = self.advance()
            if token.kind != "number" or not _INTEGER_RE.fullmatch(token.text):
                raise ExpressionSyntaxError("指数必须是整数字面量", token.position)
            return Pow(base, sign * int(token.text))
        return base

    def atom(self) -> Expr:
        token = self.advance()
        if token.kind == "number":
            return Const(_number_value(token.text))
        if token.kind == "name":
            if token.text in FUNCTIONS:
                self.expect_op("(")
                arg = self.expression()
                self.expect_op(")")
                return Func(token.text, arg)
            if token.text not in VARIABLE_KINDS:
                raise UnknownVariableError(f"未知变量 {token.text!r} (位置 {token.position})")
            if token.text == "t":
                return Var(Variable("t", 0))
            self.expect_op("[")
            index_token = self.advance()
            if index_token.kind != "number" or not _INTEGER_RE.fullmatch(index_token.text):
                raise ExpressionSyntaxError("分量下标必须是非负整数", index_token.position)
            self.expect_op("]")
            index = int(index_token.text)
            bound = self.dims.bound(token.text)
            if index >= bound:
                raise DimensionError(
                    f"{token.text}[{index}] 超出维数 {bound} (位置 {index_token.position})"
                )
            return Var(Variable(token.text, index))
        if token.kind == "op" and token.text == "(":
            node = self.expression()
            self.expect_op(")")
            return node
        raise ExpressionSyntaxError(f"意外的记号 {token.text!r}", token.position)


def parse_expression(text: str, dims: Optional[Dimensions] = None) -> Expr:
    """
    解析表达式文本

    Args:
        text: 中缀表达式，例如 "0.5*qdot[0]^2"
        dims: 变量维数，默认 d=m=1

    Returns:
        表达式树
    """
    dims = dims or Dimensions()
    expr = _Parser(text, dims).parse()
    logger.debug(f"解析表达式: {text!r} -> {to_text(expr)}")
    return expr


# ---------------------------------------------------------------------------
# 打印
# ---------------------------------------------------------------------------

def _format_real(value: float) -> str:
    return repr(float(value))


def _const_text(value: complex) -> str:
    if value.imag == 0:
        text = _format_real(value.real)
    elif value.real == 0:
        text = _format_real(value.imag) + "j"
    else:
        sign = "+" if value.imag >= 0 else "-"
        return f"({_format_real(value.real)}{sign}{_format_real(abs(value.imag))}j)"
    return f"({text})" if text.startswith("-") else text


def _wrap(expr: Expr, min_precedence: int) -> str:
    text = to_text(expr)
    return f"({text})" if expr.precedence < min_precedence else text


def to_text(expr: Expr) -> str:
    """
    规范括号化的确定性打印

    Args:
        expr: 表达式树

    Returns:
        可被 parse_expression 读回的文本
    """
    if isinstance(expr, Const):
        return _const_text(expr.value)
    if isinstance(expr, Var):
        return str(expr.var)
    if isinstance(expr, (Add, Sub)):
        symbol = "+" if isinstance(expr, Add) else "-"
        return f"{_wrap(expr.left, _PREC_ADD)} {symbol} {_wrap(expr.right, _PREC_MUL)}"
    if isinstance(expr, (Mul, Div)):
        symbol = "*" if isinstance(expr, Mul) else "/"
        return f"{_wrap(expr.left, _PREC_MUL)} {symbol} {_wrap(expr.right, _PREC_NEG)}"
    if isinstance(expr, Neg):
        if isinstance(expr.operand, Const):
            return f"-({to_text(expr.operand)})"
        return "-" + _wrap(expr.operand, _PREC_NEG)
    if isinstance(expr, Pow):
        exponent = str(expr.exponent) if expr.exponent >= 0 else f"-{-expr.exponent}"
        return f"{_wrap(expr.base, _PREC_ATOM)}^{exponent}"
    if isinstance(expr, Func):
        return f"{expr.name}({to_text(expr.arg)})"
    raise TypeError(f"未知节点类型: {type(expr).__name__}")


# ---------------------------------------------------------------------------
# 求值
# ---------------------------------------------------------------------------

def _int_power(base: Value, exponent: int) -> Value:
    # 反复平方，实数输入时虚部保持精确为零
    result = None
    factor = base
    n = exponent
    while n > 0:
        if n & 1:
            result = factor if result is None else result * factor
        n >>= 1
        if n:
            factor = factor * factor
    if result is None:
        return np.ones_like(base) if isinstance(base, np.ndarray) else complex(1.0)
    return result


def _apply_function(name: str, x: Value) -> Value:
    if name == "sin":
        return np.sin(x)
    if name == "cos":
        return np.cos(x)
    if name == "exp":
        return np.exp(x)
    if name == "log":
        if np.any(x == 0):
            raise EvaluationError("对零取对数")
        return np.log(x)
    if name == "abs":
        return np.abs(x) + 0j
    if name == "sign":
        if np.any(x == 0):
            raise NonDifferentiableError("sign 在 0 处无定义（abs 的不可微点）")
        return x / np.abs(x)
    raise EvaluationError(f"未知函数: {name}")


def _evaluate(expr: Expr, binding: Mapping[Variable, Value]) -> Value:
    if isinstance(expr, Const):
        return expr.value
    if isinstance(expr, Var):
        try:
            value = binding[expr.var]
        except KeyError:
            raise EvaluationError(f"绑定缺少变量 {expr.var}") from None
        if isinstance(value, np.ndarray):
            return value.astype(complex, copy=False)
        return complex(value)
    if isinstance(expr, Add):
        return _evaluate(expr.left, binding) + _evaluate(expr.right, binding)
    if isinstance(expr, Sub):
        return _evaluate(expr.left, binding) - _evaluate(expr.right, binding)
    if isinstance(expr, Mul):
        return _evaluate(expr.left, binding) * _evaluate(expr.right, binding)
    if isinstance(expr, Div):
        denominator = _evaluate(expr.right, binding)
        if np.any(denominator == 0):
            raise EvaluationError(f"除零: {to_text(expr.right)}")
        return _evaluate(expr.left, binding) / denominator
    if isinstance(expr, Neg):
        return -_evaluate(expr.operand, binding)
    if isinstance(expr, Pow):
        base = _evaluate(expr.base, binding)
        if expr.exponent >= 0:
            return _int_power(base, expr.exponent)
        if np.any(base == 0):
            raise EvaluationError(f"除零: {to_text(expr.base)} 的负整数次幂")
        return 1.0 / _int_power(base, -expr.exponent)
    if isinstance(expr, Func):
        return _apply_function(expr.name, _evaluate(expr.arg, binding))
    raise TypeError(f"未知节点类型: {type(expr).__name__}")


def evaluate(expr: Expr, binding: Mapping[Variable, Value]) -> Value:
    """
    在绑定下对表达式求值

    绑定值可以是标量，也可以是同形状的 numpy 数组（网格上的逐点求值）。

    Args:
        expr: 表达式树
        binding: 变量到取值的映射

    Returns:
        标量时返回 complex，否则返回复数组
    """
    result = _evaluate(expr, binding)
    if np.ndim(result) == 0:
        return complex(result)
    return np.asarray(result, dtype=complex)


def build_binding(t: Optional[Value] = None, **fields: np.ndarray) -> Dict[Variable, Value]:
    """
    由分量数组构造绑定

    Args:
        t: 时间（标量或数组）
        fields: 变量类别 -> 形状 (n, dim) 或 (dim,) 的数组

    Returns:
        绑定字典
    """
    binding: Dict[Variable, Value] = {}
    if t is not None:
        binding[Variable("t")] = t
    for kind, values in fields.items():
        array = np.asarray(values)
        if array.ndim == 1 and np.ndim(t) == 0:
            for index in range(array.shape[0]):
                binding[Variable(kind, index)] = complex(array[index])
        else:
            for index in range(array.shape[-1]):
                binding[Variable(kind, index)] = array[..., index]
    return binding


# ---------------------------------------------------------------------------
# 常数折叠与符号求导
# ---------------------------------------------------------------------------

def _is_const(expr: Expr, value: Optional[complex] = None) -> bool:
    if not isinstance(expr, Const):
        return False
    return value is None or expr.value == value


def _add(a: Expr, b: Expr) -> Expr:
    if _is_const(a) and _is_const(b):
        return Const(a.value + b.value)
    if _is_const(a, 0):
        return b
    if _is_const(b, 0):
        return a
    return Add(a, b)


def _sub(a: Expr, b: Expr) -> Expr:
    if _is_const(a) and _is_const(b):
        return Const(a.value - b.value)
    if _is_const(b, 0):
        return a
    if _is_const(a, 0):
        return _neg(b)
    return Sub(a, b)


def _neg(a: Expr) -> Expr:
    if _is_const(a):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.operand
    return Neg(a)


def _mul(a: Expr, b: Expr) -> Expr:
    if _is_const(a) and _is_const(b):
        return Const(a.value * b.value)
    if _is_const(a, 0) or _is_const(b, 0):
        return Const(0)
    if _is_const(b):
        return _mul(b, a)
    if _is_const(a):
        if a.value == 1:
            return b
        if a.value == -1:
            return _neg(b)
        if isinstance(b, Mul) and _is_const(b.left):
            return _mul(Const(a.value * b.left.value), b.right)
        if isinstance(b, Neg):
            return _mul(Const(-a.value), b.operand)
    return Mul(a, b)


def _div(a: Expr, b: Expr) -> Expr:
    if _is_const(b) and b.value != 0:
        if _is_const(a):
            return Const(a.value / b.value)
        if b.value == 1:
            return a
    if _is_const(a, 0) and not _is_const(b, 0):
        return Const(0)
    return Div(a, b)


def _pow(base: Expr, exponent: int) -> Expr:
    if exponent == 0:
        return Const(1)
    if exponent == 1:
        return base
    if _is_const(base) and (base.value != 0 or exponent > 0):
        return Const(evaluate(Pow(base, exponent), {}))
    return Pow(base, exponent)


def _func(name: str, arg: Expr) -> Expr:
    if _is_const(arg):
        try:
            return Const(evaluate(Func(name, arg), {}))
        except (EvaluationError, NonDifferentiableError):
            pass
    return Func(name, arg)


def fold_constants(expr: Expr) -> Expr:
    """
    自底向上的常数折叠

    Args:
        expr: 表达式树

    Returns:
        折叠后的表达式
    """
    if isinstance(expr, (Const, Var)):
        return expr
    if isinstance(expr, Add):
        return _add(fold_constants(expr.left), fold_constants(expr.right))
    if isinstance(expr, Sub):
        return _sub(fold_constants(expr.left), fold_constants(expr.right))
    if isinstance(expr, Mul):
        return _mul(fold_constants(expr.left), fold_constants(expr.right))
    if isinstance(expr, Div):
        return _div(fold_constants(expr.left), fold_constants(expr.right))
    if isinstance(expr, Neg):
        return _neg(fold_constants(expr.operand))
    if isinstance(expr, Pow):
        return _pow(fold_constants(expr.base), expr.exponent)
    if isinstance(expr, Func):
        return _func(expr.name, fold_constants(expr.arg))
    raise TypeError(f"未知节点类型: {type(expr).__name__}")


def _derivative(expr: Expr, v: Variable) -> Expr:
    if isinstance(expr, Const):
        return Const(0)
    if isinstance(expr, Var):
        return Const(1) if expr.var == v else Const(0)
    if isinstance(expr, Add):
        return _add(_derivative(expr.left, v), _derivative(expr.right, v))
    if isinstance(expr, Sub):
        return _sub(_derivative(expr.left, v), _derivative(expr.right, v))
    if isinstance(expr, Mul):
        left, right = expr.left, expr.right
        return _add(_mul(_derivative(left, v), right), _mul(left, _derivative(right, v)))
    if isinstance(expr, Div):
        num, den = expr.left, expr.right
        numerator = _sub(_mul(_derivative(num, v), den), _mul(num, _derivative(den, v)))
        if _is_const(numerator, 0):
            return Const(0)
        return _div(numerator, _pow(den, 2))
    if isinstance(expr, Neg):
        return _neg(_derivative(expr.operand, v))
    if isinstance(expr, Pow):
        inner = _derivative(expr.base, v)
        if _is_const(inner, 0):
            return Const(0)
        outer = _mul(Const(expr.exponent), _pow(expr.base, expr.exponent - 1))
        return _mul(outer, inner)
    if isinstance(expr, Func):
        inner = _derivative(expr.arg, v)
        if _is_const(inner, 0):
            return Const(0)
        arg = expr.arg
        if expr.name == "sin":
            outer = _func("cos", arg)
        elif expr.name == "cos":
            outer = _neg(_func("sin", arg))
        elif expr.name == "exp":
            outer = _func("exp", arg)
        elif expr.name == "log":
            return _div(inner, arg)
        elif expr.name == "abs":
            logger.warning(f"对 abs({to_text(arg)}) 关于 {v} 求导，结果含 sign，已标记")
            outer = _func("sign", arg)
        else:
            # sign 在 0 以外分段为常数
            return Const(0)
        return _mul(outer, inner)
    raise TypeError(f"未知节点类型: {type(expr).__name__}")


def partial_derivative(expr: Expr, v: Variable) -> Expr:
    """
    符号偏导数

    Args:
        expr: 表达式树
        v: 求导变量

    Returns:
        常数折叠后的偏导数表达式；若含 sign(·) 则视为已标记（见 is_flagged）
    """
    result = _derivative(fold_constants(expr), v)
    logger.debug(f"∂/∂{v} [{to_text(expr)}] = {to_text(result)}")
    return result


# ---------------------------------------------------------------------------
# 结构工具
# ---------------------------------------------------------------------------

def walk(expr: Expr) -> Iterable[Expr]:
    """先序遍历所有节点"""
    stack = [expr]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(reversed(node.children()))


def variables(expr: Expr) -> Set[Variable]:
    """表达式中出现的变量集合"""
    return {node.var for node in walk(expr) if isinstance(node, Var)}


def is_flagged(expr: Expr) -> bool:
    """是否含有不可解析节点 sign(·)（abs 的导数）"""
    return any(isinstance(node, Func) and node.name == "sign" for node in walk(expr))


def has_nonanalytic(expr: Expr) -> bool:
    """是否含有 abs 或 sign 节点"""
    return any(isinstance(node, Func) and node.name in ("abs", "sign") for node in walk(expr))


def ensure_differentiable(expr: Expr, kinds: Iterable[str]) -> None:
    """
    拒绝在待求导变量上出现 abs

    Args:
        expr: 表达式树
        kinds: 将被求导的变量类别

    Raises:
        NonDifferentiableError: abs 的参数依赖于这些变量
    """
    kinds = set(kinds)
    for node in walk(expr):
        if isinstance(node, Func) and node.name in ("abs", "sign"):
            offending = sorted(str(v) for v in variables(node.arg) if v.kind in kinds)
            if offending:
                logger.error(f"{node.name} 依赖于待求导变量 {offending}: {to_text(expr)}")
                raise NonDifferentiableError(
                    f"{node.name}({to_text(node.arg)}) 依赖于待求导变量 {', '.join(offending)}"
                )


def check_dimensions(expr: Expr, dims: Dimensions, allowed_kinds: Optional[Iterable[str]] = None) -> None:
    """
    校验变量类别和分量下标

    Args:
        expr: 表达式树
        dims: 维数
        allowed_kinds: 允许出现的变量类别，None 表示全部
    """
    allowed = set(allowed_kinds) if allowed_kinds is not None else set(VARIABLE_KINDS)
    for v in variables(expr):
        if v.kind not in allowed:
            raise UnknownVariableError(f"变量 {v} 不属于允许的类别 {sorted(allowed)}")
        if v.index >= dims.bound(v.kind):
            raise DimensionError(f"{v} 超出维数 {dims.bound(v.kind)}")


def substitute(expr: Expr, mapping: Mapping[Variable, Expr]) -> Expr:
    """
    结构替换变量

    Args:
        expr: 表达式树
        mapping: 变量 -> 替换表达式

    Returns:
        新表达式
    """
    if isinstance(expr, Var):
        return mapping.get(expr.var, expr)
    if isinstance(expr, Const):
        return expr
    if isinstance(expr, Add):
        return Add(substitute(expr.left, mapping), substitute(expr.right, mapping))
    if isinstance(expr, Sub):
        return Sub(substitute(expr.left, mapping), substitute(expr.right, mapping))
    if isinstance(expr, Mul):
        return Mul(substitute(expr.left, mapping), substitute(expr.right, mapping))
    if isinstance(expr, Div):
        return Div(substitute(expr.left, mapping), substitute(expr.right, mapping))
    if isinstance(expr, Neg):
        return Neg(substitute(expr.operand, mapping))
    if isinstance(expr, Pow):
        return Pow(substitute(expr.base, mapping), expr.exponent)
    if isinstance(expr, Func):
        return Func(expr.name, substitute(expr.arg, mapping))
    raise TypeError(f"未知节点类型: {type(expr).__name__}")
