#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
直接转录求解器测试
测试 Newton 求解、闭式解对照、极值处的一阶变分与尺度残差
"""

import os
import math
import pytest
import logging
from typing import Dict, Any

import numpy as np

from libs.delay_variational import (
    classical_el_residual,
    extend_with_history,
    first_variation,
    scale_el_residual,
    solve_extremal_direct,
)
from libs.errors import NewtonConvergenceError, ProblemSpecError, SingularHessianError
from libs.function_zoo import Piecewise, Polynomial, Trig, sample_on_grid
from libs.problem_loader import load_problem, parse_problem
from libs.scale_calculus import EpsilonSchedule

logger = logging.getLogger(__name__)

H = 2.0 ** -8


def _oscillator_exact(t: np.ndarray) -> np.ndarray:
    """
    q̈ = −q 于 [0, 2]，q̈ = 0 于 [2, 3]，q(0) = 1，q(3) = 0，t = 2 处 C¹ 衔接
    """
    b = (math.sin(2) - math.cos(2)) / (math.sin(2) + math.cos(2))
    at_two = math.cos(2) + b * math.sin(2)
    slope = -math.sin(2) + b * math.cos(2)
    return np.where(t <= 2.0, np.cos(t) + b * np.sin(t), at_two + slope * (t - 2.0))


def _masked_converged(item):
    keep = item.norm_mask if item.converged is None else item.norm_mask & item.converged
    return item.t[keep], item.values[keep]


@pytest.fixture(scope="module")
def problems(data_dir: str) -> Dict[str, Any]:
    """
    直线与时滞振子问题
    """
    return {
        name: load_problem(os.path.join(data_dir, "problems", f"{name}.yaml")).problem
        for name in ("straight_line", "delayed_oscillator")
    }


class TestDirectSolver:
    """
    直接转录求解测试类
    """

    def test_straight_line(self, problems: Dict[str, Any]):
        """
        测试 L = ½q̇² 时线性初值即为极值
        """
        logger.info("测试直线问题")
        result = solve_extremal_direct(problems["straight_line"])
        assert result.converged and result.iterations == 0, f"迭代次数不匹配: 期望 0, 实际 {result.iterations}"
        q = result.trajectory
        assert q.a == pytest.approx(-0.5) and q.b == pytest.approx(1.0)
        error = np.max(np.abs(q.values[:, 0] - q.times))
        assert error <= 1e-9, f"节点误差 {error:.3e} 超过 1e-9"

    def test_oscillator(self, problems: Dict[str, Any]):
        """
        测试时滞振子：二次作用量一步收敛，与闭式解一致
        """
        logger.info("测试时滞振子")
        problem = problems["delayed_oscillator"]
        result = solve_extremal_direct(problem, H)
        assert result.converged and result.iterations <= 2, f"迭代次数 {result.iterations}"
        assert result.gradient_norm <= 1e-10
        assert len(result.history) == result.iterations + 1

        q = result.trajectory
        body = q.times >= problem.t1
        error = np.max(np.abs(q.values[body, 0] - _oscillator_exact(q.times[body])))
        assert error <= 1e-3, f"与闭式解误差 {error:.3e} 超过 1e-3"

        report = classical_el_residual(problem, q)
        for item in report.intervals:
            sup = np.max(np.abs(item.values[item.norm_mask]))
            assert sup <= 1e-4, f"区间 {item.label} 经典残差 {sup:.3e} 超过 1e-4"

    def test_zero_initial_guess(self, problems: Dict[str, Any]):
        """
        测试初值为零时得到相同的解
        """
        logger.info("测试零初值")
        problem = problems["delayed_oscillator"]
        cells = int(round((problem.t2 - problem.t1) / H))
        reference = solve_extremal_direct(problem, H)
        result = solve_extremal_direct(problem, H, initial=np.zeros((cells - 1, 1)))
        assert result.converged and result.iterations <= 2
        assert np.max(np.abs(result.trajectory.values - reference.trajectory.values)) <= 1e-9

    def test_nonlinear_convex(self):
        """
        测试非二次凸拉格朗日量的阻尼 Newton
        """
        logger.info("测试非线性问题")
        raw = {
            "lagrangian": "0.5*qdot[0]^2 + 0.25*qdot[0]*qdottau[0] + 0.25*q[0]^4",
            "tau": 0.5, "t1": 0.0, "t2": 1.0, "history": "poly(0.5)", "q2": [0.0], "h": 2.0 ** -7,
        }
        problem = parse_problem(raw, "quartic").problem
        result = solve_extremal_direct(problem)
        assert result.converged and result.gradient_norm <= 1e-10
        assert result.iterations >= 2, "非二次问题应需要多步 Newton"
        assert result.history[-1] < result.history[0]

    def test_first_variation_at_extremal(self, problems: Dict[str, Any]):
        """
        测试极值处任意容许变分的一阶变分为零（中点求积与求解器一致）
        """
        logger.info("测试极值处的一阶变分")
        problem = problems["delayed_oscillator"]
        q = solve_extremal_direct(problem, H).trajectory
        for k in range(1, 11):
            spec = Piecewise(((-1.0, 0.0, Polynomial((0.0,))), (0.0, 3.0, Trig("sin", k * math.pi / 3))))
            bump = sample_on_grid(spec, q.a, q.b, q.h)
            result = first_variation(problem, q, bump, quadrature="midpoint")
            assert abs(result.finite_difference) <= 1e-5, f"k={k} 差分 {result.finite_difference}"
            assert abs(result.analytic) <= 1e-5, f"k={k} 解析 {result.analytic}"

    def test_scale_residual_reduces(self, problems: Dict[str, Any]):
        """
        测试求解所得轨迹上尺度残差与经典残差之差受 ε₀ + h 控制
        """
        logger.info("测试尺度残差的经典约化")
        problem = problems["delayed_oscillator"]
        gaps = []
        for h in (2.0 ** -7, 2.0 ** -8):
            schedule = EpsilonSchedule.default(h)
            solved = solve_extremal_direct(problem, h).trajectory
            classical = classical_el_residual(problem, solved)
            scale = scale_el_residual(problem, extend_with_history(problem, solved, schedule.eps0), schedule)
            bound = 5 * (schedule.eps0 + h)
            worst = 0.0
            for left, right in zip(classical.intervals, scale.intervals):
                t_left, v_left = _masked_converged(left)
                t_right, v_right = _masked_converged(right)
                common, i_left, i_right = np.intersect1d(
                    np.round((t_left - problem.t1) / h).astype(np.int64),
                    np.round((t_right - problem.t1) / h).astype(np.int64),
                    return_indices=True,
                )
                assert common.size > 0, f"区间 {left.label} 没有公共节点"
                gap = np.max(np.abs(v_left[i_left] - v_right[i_right]))
                worst = max(worst, float(gap))
                logger.info(f"h={h} 区间 {left.label}: 差 {gap:.3e}")
                assert gap <= bound, f"h={h} 区间 {left.label} 差 {gap:.3e} 超过 {bound:.3e}"
            gaps.append(worst)
        assert gaps[0] <= 1e-7 or gaps[0] / max(gaps[1], 1e-300) >= 1.8, f"步长减半后差没有按预期缩小: {gaps}"


class TestSolverErrors:
    """
    求解器错误处理测试类
    """

    def test_iteration_limit(self, problems: Dict[str, Any]):
        """
        测试超过最大迭代次数
        """
        logger.info("测试迭代次数上限")
        with pytest.raises(NewtonConvergenceError) as info:
            solve_extremal_direct(problems["delayed_oscillator"], H, max_iterations=0)
        assert info.value.iterations == 0 and info.value.gradient_norm > 1e-10

    def test_singular_hessian(self):
        """
        测试与速度无关的线性拉格朗日量导致 Hessian 奇异
        """
        logger.info("测试奇异 Hessian")
        raw = {"lagrangian": "t * q[0]", "tau": 0.5, "t1": 0.0, "t2": 1.0,
               "history": "poly(0)", "q2": [0.0], "h": 2.0 ** -5}
        with pytest.raises(SingularHessianError):
            solve_extremal_direct(parse_problem(raw, "singular").problem)

    def test_missing_step(self):
        """
        测试未给出网格步长
        """
        logger.info("测试缺少步长")
        raw = {"lagrangian": "0.5*qdot[0]^2", "tau": 0.5, "t1": 0.0, "t2": 1.0, "history": "poly(0)", "q2": [0.0]}
        with pytest.raises(ProblemSpecError) as info:
            solve_extremal_direct(parse_problem(raw, "no_step").problem)
        assert info.value.key == "h"
