#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
作用量与 EL 残差测试
测试作用量求积、经典时滞 EL 残差、尺度 EL 残差的两种模式以及 t₂ 之后样本的隔离
"""

import os
import pytest
import logging
from typing import Dict, Any

import numpy as np

from libs.delay_variational import (
    action_value,
    classical_el_residual,
    sample_trajectory,
    scale_el_residual,
)
from libs.errors import DomainError, GridAlignmentError, InadmissibleError
from libs.function_zoo import parse_function_spec
from libs.problem_loader import load_problem, parse_problem
from libs.scale_calculus import EpsilonSchedule

logger = logging.getLogger(__name__)

H = 2.0 ** -8


def _problem(lagrangian: str, history: str = "poly(0, 1)", q2=1.0, tau: float = 0.5, t1: float = 0.0, t2: float = 1.0):
    raw = {"lagrangian": lagrangian, "tau": tau, "t1": t1, "t2": t2, "history": history, "q2": [q2]}
    return parse_problem(raw, "inline").problem


def _trajectory(problem, text: str, h: float = H, left: float = 0.0, right: float = 0.0):
    return sample_trajectory(problem, [parse_function_spec(text)], h, left, right)


def _masked(item) -> np.ndarray:
    return item.values[item.norm_mask]


class TestActionValue:
    """
    作用量测试类
    """

    @pytest.mark.parametrize("quadrature", ["trapezoid", "midpoint"])
    def test_constant_integrands(self, quadrature: str):
        """
        测试被积式恒定的例子
        """
        logger.info(f"测试恒定被积式 ({quadrature})")
        line = _problem("qdot[0]^2")
        value = action_value(line, _trajectory(line, "poly(0, 1)"), quadrature)
        assert abs(value - 1.0) <= 1e-9, f"作用量不匹配: 期望 1.0, 实际 {value}"

        rest = _problem("q[0]^2", history="poly(0)", q2=0.0)
        value = action_value(rest, _trajectory(rest, "poly(0)"), quadrature)
        assert value == 0.0, f"作用量不匹配: 期望 0, 实际 {value}"

        delayed = _problem("qdot[0] * qdottau[0]", tau=0.25)
        value = action_value(delayed, _trajectory(delayed, "poly(0, 1)"), quadrature)
        assert abs(value - 1.0) <= 1e-9, f"含时滞作用量不匹配: 期望 1.0, 实际 {value}"

    def test_delayed_quadratic(self):
        """
        测试 ∫ q(t−τ)² dt
        """
        logger.info("测试时滞平方项")
        problem = _problem("qtau[0]^2")
        value = action_value(problem, _trajectory(problem, "poly(0, 1)"))
        assert abs(value - 1.0 / 12.0) <= 1e-5, f"作用量不匹配: 期望 1/12, 实际 {value}"

    def test_regrid_convergence(self):
        """
        测试 h → h/2 时作用量按 O(h²) 收敛
        """
        logger.info("测试网格加密")
        problem = _problem("0.5 * qdot[0]^2 + q[0] * qtau[0]")
        text = "sum(1 * poly(0.1, 1), -0.1 * cos(6.283185307179586, 0))"
        values = [action_value(problem, _trajectory(problem, text, h)) for h in (2.0 ** -7, 2.0 ** -8, 2.0 ** -9)]
        coarse, fine = abs(values[0] - values[1]), abs(values[1] - values[2])
        logger.info(f"作用量 {values}")
        assert coarse <= 1e-3, f"相邻网格作用量差 {coarse:.3e} 过大"
        assert coarse / fine >= 3.0, f"收敛阶不足: 比值 {coarse / fine:.3f}"

    def test_inadmissible(self):
        """
        测试终点或历史段不满足约束
        """
        logger.info("测试非容许轨迹")
        problem = _problem("0.5 * qdot[0]^2")
        with pytest.raises(InadmissibleError):
            action_value(problem, _trajectory(problem, "poly(0.1, 1)"))
        q = _trajectory(problem, "poly(0, 1)")
        values = q.values.copy()
        values[3] += 1e-6
        with pytest.raises(InadmissibleError):
            action_value(problem, q.with_values(values))
        with pytest.raises(ValueError):
            action_value(problem, q, "simpson")


class TestClassicalResidual:
    """
    经典时滞 EL 残差测试类
    """

    @pytest.fixture(scope="class")
    def straight_line(self, data_dir: str):
        return load_problem(os.path.join(data_dir, "problems", "straight_line.yaml"))

    def test_straight_line(self, straight_line):
        """
        测试直线的残差为零
        """
        logger.info("测试直线残差")
        problem = straight_line.problem
        q = sample_trajectory(problem, straight_line.trajectory, problem.h)
        report = classical_el_residual(problem, q)
        assert report.mode == "classical"
        for item in report.intervals:
            assert item.sup <= 1e-9, f"区间 {item.label} 残差 {item.sup:.3e} 超过 1e-9"

    def test_square(self):
        """
        测试 q = t² 时两个区间的残差恒为 2
        """
        logger.info("测试 t² 残差")
        problem = _problem("0.5 * qdot[0]^2", history="poly(0, 0, 1)")
        report = classical_el_residual(problem, _trajectory(problem, "poly(0, 0, 1)"))
        for item in report.intervals:
            error = np.max(np.abs(_masked(item) - 2.0))
            assert error <= 1e-6, f"区间 {item.label} 残差偏离 2: {error:.3e}"

    def test_junction_in_both_intervals(self, straight_line):
        """
        测试 t₂−τ 同时出现在两个区间且按各自机制计算
        """
        logger.info("测试交接点")
        problem = straight_line.problem
        report = classical_el_residual(problem, sample_trajectory(problem, straight_line.trajectory, problem.h))
        assert report.effective_intervals == {"first": (0.0, 0.5), "second": (0.5, 1.0)}
        first, second = report.interval("first"), report.interval("second")
        assert not first.norm_mask[-1] and not second.norm_mask[0], "端点附近的节点不计入范数"

    def test_too_few_nodes(self):
        """
        测试区间节点不足
        """
        logger.info("测试节点不足")
        problem = _problem("0.5 * qdot[0]^2", tau=0.25)
        q = _trajectory(problem, "poly(0, 1)", h=0.25)
        with pytest.raises(DomainError):
            classical_el_residual(problem, q)

    def test_samples_beyond_t2_ignored(self):
        """
        测试 t₂ 之后的样本被替换后残差逐项不变
        """
        logger.info("测试 t₂ 之后样本的隔离（经典）")
        problem = _problem("0.5 * qdot[0]^2 - 0.5 * qtau[0]^2 + qdot[0] * qdottau[0]", history="poly(1)", q2=0.0)
        q = _trajectory(problem, "cos(1, 0)", right=0.25)
        poisoned = q.values.copy()
        poisoned[q.index_of(1.0) + 1:] = 1e6
        clean = classical_el_residual(problem, q)
        dirty = classical_el_residual(problem, q.with_values(poisoned))
        for left, right in zip(clean.intervals, dirty.intervals):
            assert np.array_equal(left.values, right.values), f"区间 {left.label} 受 t₂ 之后样本影响"


class TestScaleResidual:
    """
    尺度 EL 残差测试类
    """

    @pytest.fixture(scope="class")
    def test_data(self, data_dir: str) -> Dict[str, Any]:
        logger.info("加载时滞变分问题")
        return {
            "straight_line": load_problem(os.path.join(data_dir, "problems", "straight_line.yaml")),
            "oscillator": load_problem(os.path.join(data_dir, "problems", "delayed_oscillator.yaml")),
        }

    @pytest.mark.parametrize("mode", ["least_action", "embedding"])
    def test_straight_line(self, test_data: Dict[str, Any], mode: str):
        """
        测试直线在两种模式下残差为零
        """
        logger.info(f"测试直线尺度残差 ({mode})")
        spec = test_data["straight_line"]
        schedule = EpsilonSchedule.default(H)
        q = sample_trajectory(spec.problem, spec.trajectory, H, schedule.eps0, schedule.eps0)
        report = scale_el_residual(spec.problem, q, schedule, mode)
        assert report.sup <= 1e-8, f"残差 {report.sup:.3e} 超过 1e-8"
        assert all(item.converged_fraction == 1.0 for item in report.intervals)

    @pytest.mark.parametrize("mode", ["least_action", "embedding"])
    def test_square_matches_classical(self, mode: str):
        """
        测试光滑轨迹 t² 的尺度残差趋于经典残差 2
        """
        logger.info(f"测试 t² 尺度残差 ({mode})")
        problem = _problem("0.5 * qdot[0]^2", history="poly(0, 0, 1)")
        for h in (2.0 ** -8, 2.0 ** -9):
            schedule = EpsilonSchedule.default(h)
            q = _trajectory(problem, "poly(0, 0, 1)", h, schedule.eps0)
            scale = scale_el_residual(problem, q, schedule, mode)
            classical = classical_el_residual(problem, q)
            bound = 5 * (schedule.eps0 + h)
            for item in scale.intervals:
                error = np.max(np.abs(_masked(item) - 2.0))
                assert error <= bound, f"h={h} 区间 {item.label}: 偏离 {error:.3e} 超过 {bound:.3e}"
            assert abs(scale.sup - classical.sup) <= bound

    def test_effective_intervals(self, test_data: Dict[str, Any]):
        """
        测试有效区间：右端收缩 2ε₀，左侧有保护区时第一区间只收缩 ε₀
        """
        logger.info("测试有效区间")
        spec = test_data["straight_line"]
        schedule = EpsilonSchedule.default(H)
        eps0 = schedule.eps0
        q = sample_trajectory(spec.problem, spec.trajectory, H, eps0)
        report = scale_el_residual(spec.problem, q, schedule)
        first = report.effective_intervals["first"]
        second = report.effective_intervals["second"]
        assert first == pytest.approx((eps0, 0.5 - 2 * eps0), abs=1e-12), f"第一区间 {first}"
        assert second == pytest.approx((0.5, 1.0 - 2 * eps0), abs=1e-12), f"第二区间 {second}"
        for item in report.intervals:
            assert item.declared[0] <= item.effective[0] <= item.effective[1] <= item.declared[1]

    def test_rough_trajectory(self):
        """
        测试 Weierstrass 轨迹：残差有限并报告收敛标志
        """
        logger.info("测试 Weierstrass 轨迹")
        problem = _problem("0.5 * qdot[0]^2", history="weierstrass(0.5, 3, 25)", q2=0.0)
        schedule = EpsilonSchedule.default(H)
        q = _trajectory(problem, "weierstrass(0.5, 3, 25)", H, schedule.eps0)
        report = scale_el_residual(problem, q, schedule)
        for item in report.intervals:
            assert np.all(np.isfinite(item.values)), f"区间 {item.label} 残差含非有限值"
            assert item.converged is not None and item.converged.shape == item.t.shape
            assert 0.0 <= item.converged_fraction < 1.0

    @pytest.mark.parametrize("mode", ["least_action", "embedding"])
    def test_samples_beyond_t2_ignored(self, test_data: Dict[str, Any], mode: str):
        """
        测试 t₂ 之后的样本被替换后尺度残差逐项不变
        """
        logger.info(f"测试 t₂ 之后样本的隔离 ({mode})")
        problem = test_data["oscillator"].problem
        schedule = EpsilonSchedule.default(H)
        q = _trajectory(problem, "cos(1, 0)", H, schedule.eps0, schedule.eps0)
        poisoned = q.values.copy()
        poisoned[q.index_of(problem.t2) + 1:] = 1e6
        clean = scale_el_residual(problem, q, schedule, mode)
        dirty = scale_el_residual(problem, q.with_values(poisoned), schedule, mode)
        for left, right in zip(clean.intervals, dirty.intervals):
            assert np.array_equal(left.values, right.values), f"区间 {left.label} 受 t₂ 之后样本影响"

    def test_misaligned_schedule(self, test_data: Dict[str, Any]):
        """
        测试 ε 与网格不对齐
        """
        logger.info("测试 ε 不对齐")
        spec = test_data["straight_line"]
        q = sample_trajectory(spec.problem, spec.trajectory, H)
        with pytest.raises(GridAlignmentError):
            scale_el_residual(spec.problem, q, EpsilonSchedule(0.1, 0.5, 5))
        with pytest.raises(ValueError):
            scale_el_residual(spec.problem, q, EpsilonSchedule.default(H), "classical")
