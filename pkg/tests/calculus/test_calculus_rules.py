#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
运算规则测试
测试量子 Leibniz 规则、量子 Barrow 规则与 Hölder 指数估计
"""

import math
import pytest
import logging
from typing import Dict, Any, List

import numpy as np

from libs.errors import DomainError
from libs.function_zoo import Polynomial, Trig, make_weierstrass, parse_function_spec, sample_on_grid
from libs.scale_calculus import (
    EpsilonSchedule,
    SampledFunction,
    barrow_residual,
    holder_estimate,
    leibniz_residual,
)

logger = logging.getLogger(__name__)

# 低于该值的残差视为相同
RESIDUAL_FLOOR = 1e-9


def _padded_pair(f_text: str, g_text: str, h: float):
    schedule = EpsilonSchedule.default(h)
    margin = schedule.eps0
    f = sample_on_grid(parse_function_spec(f_text), -margin, 1.0 + margin, h)
    g = sample_on_grid(parse_function_spec(g_text), -margin, 1.0 + margin, h)
    return f, g, schedule


def _non_increasing(values: List[float], floor: float = RESIDUAL_FLOOR) -> bool:
    floored = [max(value, floor) for value in values]
    return all(later <= earlier for earlier, later in zip(floored[:-1], floored[1:]))


class TestLeibnizRule:
    """
    量子 Leibniz 规则测试类
    """

    @pytest.fixture(scope="class")
    def test_data(self, load_data) -> Dict[str, Any]:
        """
        测试数据fixture

        Returns:
            Dict: 尺度微积分测试数据
        """
        logger.info("加载 Leibniz 测试数据")
        return load_data("calculus_cases.yaml")

    def test_smooth_pairs(self, test_data: Dict[str, Any]):
        """
        测试光滑函数对的残差随 h 减小而不增，且在最细网格上可忽略
        """
        logger.info("测试光滑函数对")
        for pair in (p for p in test_data["leibniz_pairs"] if p["smooth"]):
            residuals = []
            for h in test_data["leibniz_steps"]:
                f, g, schedule = _padded_pair(pair["f"], pair["g"], h)
                report = leibniz_residual(f, g, pair["alpha"], pair["beta"], schedule)
                assert report.hypothesis_ok
                residuals.append(report.sup)
            logger.info(f"{pair['f']} · {pair['g']}: {residuals}")
            assert _non_increasing(residuals), f"{pair['f']} · {pair['g']} 残差未随 h 减小: {residuals}"
            assert residuals[-1] <= 1e-6, f"{pair['f']} · {pair['g']} 最细网格残差 {residuals[-1]:.3e} 超过 1e-6"

    def test_rough_pairs(self, test_data: Dict[str, Any]):
        """
        测试含 Weierstrass 函数的函数对：残差有限，且随 h 减小严格单调下降
        """
        logger.info("测试非光滑函数对")
        for pair in (p for p in test_data["leibniz_pairs"] if not p["smooth"]):
            residuals = []
            for h in test_data["leibniz_steps"]:
                f, g, schedule = _padded_pair(pair["f"], pair["g"], h)
                report = leibniz_residual(f, g, pair["alpha"], pair["beta"], schedule)
                assert report.hypothesis_ok, f"α+β={pair['alpha'] + pair['beta']} 应满足 > 1"
                assert np.all(np.isfinite(report.residual)), "残差必须有限"
                residuals.append(report.sup)
            logger.info(f"{pair['f']} · {pair['g']}: {residuals}")
            assert all(later < earlier for earlier, later in zip(residuals[:-1], residuals[1:])), \
                f"残差未严格下降: {residuals}"

    def test_linear_product(self):
        """
        测试 f = g = t 时残差可忽略
        """
        logger.info("测试 t · t")
        f, g, schedule = _padded_pair("poly(0, 1)", "poly(0, 1)", 2.0 ** -10)
        report = leibniz_residual(f, g, 1.0, 1.0, schedule)
        assert report.sup <= 1e-8, f"残差 {report.sup:.3e} 超过 1e-8"
        assert bool(np.all(report.regime)), "t·t 的三个提取都应收敛"

    def test_symmetry(self):
        """
        测试交换 f 与 g 残差不变
        """
        logger.info("测试对称性")
        f, g, schedule = _padded_pair("sin(3, 0)", "poly(1, 0, 1)", 2.0 ** -9)
        forward = leibniz_residual(f, g, 1.0, 1.0, schedule)
        backward = leibniz_residual(g, f, 1.0, 1.0, schedule)
        assert np.max(np.abs(forward.residual - backward.residual)) <= 1e-12

    def test_hypothesis_warning(self):
        """
        测试 α+β ≤ 1 时仍计算残差但标记假设不成立
        """
        logger.info("测试假设不成立")
        f, g, schedule = _padded_pair("weierstrass(0.5, 3, 25)", "abspow(0.5, 0.3)", 2.0 ** -9)
        report = leibniz_residual(f, g, 0.6309, 0.3, schedule)
        assert not report.hypothesis_ok
        assert report.interval == pytest.approx((0.0, 1.0), abs=1e-12)


class TestBarrowRule:
    """
    量子 Barrow 规则测试类
    """

    @pytest.fixture(scope="class")
    def test_data(self, load_data) -> Dict[str, Any]:
        logger.info("加载 Barrow 测试数据")
        return load_data("calculus_cases.yaml")

    def test_smooth_functions(self, test_data: Dict[str, Any]):
        """
        测试 [0,1] 上光滑函数的残差与各层缺陷的趋势
        """
        logger.info("测试 Barrow 规则")
        h = 2.0 ** -11
        schedule = EpsilonSchedule.default(h)
        for text in test_data["barrow_functions"]:
            f = sample_on_grid(parse_function_spec(text), -schedule.eps0, 1.0 + schedule.eps0, h)
            report = barrow_residual(f, 0.0, 1.0, schedule)
            assert report.residual <= 1e-6, f"{text}: Barrow 残差 {report.residual:.3e} 超过 1e-6"
            assert report.trend_ok, f"{text}: 各层缺陷未随 ε 减小 {report.level_defects}"
            assert len(report.level_defects) == schedule.levels

    def test_square(self):
        """
        测试 t²：梯形公式对线性被积函数精确
        """
        logger.info("测试 t² 的 Barrow 规则")
        h = 2.0 ** -10
        schedule = EpsilonSchedule.default(h)
        f = sample_on_grid(Polynomial((0.0, 0.0, 1.0)), -schedule.eps0, 1.0 + schedule.eps0, h)
        report = barrow_residual(f, 0.0, 1.0, schedule)
        assert report.residual <= 1e-8, f"残差 {report.residual:.3e} 超过 1e-8"
        assert abs(report.increment[0] - 1.0) <= 1e-12

    def test_sine_half_period(self):
        """
        测试 sin 在 [0, π] 上
        """
        logger.info("测试 sin 于 [0, π]")
        h = math.pi / 3000
        schedule = EpsilonSchedule.default(h)
        f = sample_on_grid(Trig("sin"), -schedule.eps0, math.pi + schedule.eps0, h)
        report = barrow_residual(f, 0.0, math.pi, schedule)
        assert report.residual <= 1e-6, f"残差 {report.residual:.3e} 超过 1e-6"

    def test_constant(self):
        """
        测试常数的 Barrow 残差为零
        """
        logger.info("测试常数")
        h = 2.0 ** -8
        schedule = EpsilonSchedule.default(h)
        f = sample_on_grid(Polynomial((2.5,)), -schedule.eps0, 1.0 + schedule.eps0, h)
        report = barrow_residual(f, 0.0, 1.0, schedule)
        assert report.residual == 0.0

    def test_interval_outside_domain(self):
        """
        测试积分区间超出 □f 的定义域
        """
        logger.info("测试积分区间越界")
        h = 2.0 ** -8
        schedule = EpsilonSchedule.default(h)
        f = sample_on_grid(Polynomial((0.0, 1.0)), 0.0, 1.0, h)
        with pytest.raises(DomainError):
            barrow_residual(f, 0.0, 1.0, schedule)


class TestHolderEstimate:
    """
    Hölder 指数估计测试类
    """

    @pytest.fixture(scope="class")
    def test_data(self, load_data) -> Dict[str, Any]:
        logger.info("加载 Hölder 测试数据")
        return load_data("calculus_cases.yaml")["holder"]

    def test_known_exponents(self, test_data: List[Dict[str, Any]]):
        """
        测试已知指数的函数
        """
        logger.info("测试 Hölder 指数")
        for case in test_data:
            f = sample_on_grid(parse_function_spec(case["function"]), case["t1"], case["t2"], case["h"], nyquist=False)
            estimate = holder_estimate(f)
            assert not estimate.degenerate
            error = abs(estimate.alpha - case["expected"])
            assert error <= case["tolerance"], \
                f"{case['function']} 指数不匹配: 期望 {case['expected']}, 实际 {estimate.alpha:.4f}"
            assert 0 < estimate.alpha <= 1

    def test_degenerate_constant(self):
        """
        测试常数输入的退化标记
        """
        logger.info("测试常数输入")
        f = sample_on_grid(Polynomial((1.0,)), 0.0, 1.0, 1e-3)
        estimate = holder_estimate(f)
        assert estimate.degenerate and estimate.alpha is None

    def test_too_few_scales(self):
        """
        测试网格过粗时尺度不足
        """
        logger.info("测试尺度不足")
        f = SampledFunction(0.0, 0.125, np.arange(8, dtype=float))
        with pytest.raises(DomainError):
            holder_estimate(f)

    def test_term_count_drift(self):
        """
        测试 Weierstrass 项数对估计的影响：项数过少时偏离，足够多后稳定
        """
        logger.info("测试项数漂移")
        target = math.log(2) / math.log(3)
        errors = {}
        for terms in (5, 15, 25):
            f = sample_on_grid(make_weierstrass(0.5, 3, terms), 0.0, 1.0, 1e-3, nyquist=False)
            errors[terms] = abs(holder_estimate(f).alpha - target)
        logger.info(f"指数误差: {errors}")
        assert errors[5] > errors[15], f"项数 5 的误差应更大: {errors}"
        assert errors[25] <= errors[15] + 5e-3, f"项数 25 的误差不应明显变大: {errors}"
