#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
φ = u 约化测试
测试控制问题到时滞变分问题的约化与协态/EL 残差一致性
"""

import os
import pytest
import logging
from typing import Dict, Any

import numpy as np

from libs.delay_variational import extend_with_history, sample_trajectory, solve_extremal_direct
from libs.errors import DimensionError
from libs.expr_core import to_text
from libs import optimal_control
from libs.optimal_control import (
    ControlTriple,
    delay_problem_from_control,
    el_reduction_check,
    pontryagin_residual_classical,
)
from libs.problem_loader import load_problem
from libs.scale_calculus import EpsilonSchedule

logger = logging.getLogger(__name__)


@pytest.fixture(scope="module")
def reduction_files(data_dir: str) -> Dict[str, Any]:
    """
    约化用的控制问题
    """
    names = ("reduction_line", "reduction_square", "reduction_oscillator", "control_delayed_dynamics")
    return {name: load_problem(os.path.join(data_dir, "problems", f"{name}.yaml")) for name in names}


class TestReduction:
    """
    约化测试类
    """

    def test_delay_problem(self, reduction_files: Dict[str, Any]):
        """
        测试 u → qdot、utau → qdottau 的代换
        """
        logger.info("测试约化后的时滞问题")
        problem = reduction_files["reduction_oscillator"].problem
        delay = delay_problem_from_control(problem)
        assert to_text(delay.lagrangian) == "0.5 * qdot[0]^2 - 0.5 * qtau[0]^2"
        assert delay.tau == problem.tau and delay.h == problem.h
        assert np.array_equal(delay.q2, problem.q2)

    def test_requires_identity_dynamics(self, reduction_files: Dict[str, Any]):
        """
        测试 φ ≠ u 时拒绝约化
        """
        logger.info("测试非恒等动力学")
        with pytest.raises(DimensionError):
            delay_problem_from_control(reduction_files["control_delayed_dynamics"].problem)

    @pytest.mark.parametrize("name", ["reduction_line", "reduction_square"])
    def test_sampled_trajectories(self, reduction_files: Dict[str, Any], name: str):
        """
        测试协态残差与 EL 残差只差一个符号（两种模式）
        """
        logger.info(f"测试约化一致性: {name}")
        spec = reduction_files[name]
        problem = spec.problem
        schedule = EpsilonSchedule.default(spec.h)
        classical_q = sample_trajectory(problem, spec.trajectory, spec.h)
        scale_q = sample_trajectory(problem, spec.trajectory, spec.h, schedule.eps0)

        classical = el_reduction_check(problem, classical_q, mode="classical")
        scale = el_reduction_check(problem, scale_q, schedule)
        for report in (classical, scale):
            assert report.passed, f"{name} {report.mode} 差异 {report.discrepancy:.3e} 超过 {report.tolerance}"
            assert set(report.momentum) == {"first", "second"}
            # u 取 q 的导数、p 取驻点条件的解，状态与驻点两族在掩码内恒为零
            for family in ("state", "stationary"):
                sup = report.pontryagin.family_sup(family)
                assert sup <= 1e-12, f"{name} {report.mode} {family} 残差 {sup:.3e} 应为零"

        if name == "reduction_square":
            # q = t²：p = −q̇ = −2t，协态残差 ṗ = −2 非零
            first = classical.costate[0]
            assert np.allclose(first.values[first.norm_mask], -2.0, atol=1e-9)
            el_first = classical.el.interval("first")
            assert np.allclose(el_first.values[el_first.norm_mask], 2.0, atol=1e-9)
            assert np.allclose(classical.momentum["second"].values[:, 0], -2 * classical.momentum["second"].times)

    def test_solved_oscillator(self, reduction_files: Dict[str, Any]):
        """
        测试时滞振子：用约化问题的直接转录解检验
        """
        logger.info("测试时滞振子约化")
        spec = reduction_files["reduction_oscillator"]
        problem = spec.problem
        schedule = EpsilonSchedule.default(spec.h)
        solved = solve_extremal_direct(delay_problem_from_control(problem)).trajectory

        classical = el_reduction_check(problem, solved, mode="classical")
        scale = el_reduction_check(problem, extend_with_history(problem, solved, schedule.eps0), schedule)
        for report in (classical, scale):
            assert report.passed, f"{report.mode} 差异 {report.discrepancy:.3e}"
            for item in report.costate:
                keep = item.norm_mask if item.converged is None else item.norm_mask & item.converged
                sup = np.max(np.abs(item.values[keep]))
                assert sup <= 1e-4, f"{report.mode} 区间 {item.label} 协态残差 {sup:.3e} 超过 1e-4"

    def test_mode_errors(self, reduction_files: Dict[str, Any]):
        """
        测试未知模式与缺少 ε 序列
        """
        logger.info("测试模式参数")
        spec = reduction_files["reduction_line"]
        q = sample_trajectory(spec.problem, spec.trajectory, spec.h)
        with pytest.raises(ValueError):
            el_reduction_check(spec.problem, q)
        with pytest.raises(ValueError):
            el_reduction_check(spec.problem, q, EpsilonSchedule.default(spec.h), mode="embedding")

    def test_uses_pontryagin_assembly(self, reduction_files: Dict[str, Any], mocker):
        """
        测试约化检验经由 Pontryagin 残差组装，协态族与直接调用的结果一致
        """
        logger.info("测试约化经由 Pontryagin 残差")
        spec = reduction_files["reduction_square"]
        problem = spec.problem
        q = sample_trajectory(problem, spec.trajectory, spec.h)
        spy = mocker.spy(optimal_control, "_pontryagin")
        report = el_reduction_check(problem, q, mode="classical")
        assert spy.call_count == 1, f"Pontryagin 组装调用次数不匹配: 期望 1, 实际 {spy.call_count}"

        trip = spy.call_args.args[1]
        direct = pontryagin_residual_classical(problem, trip)
        for ours, theirs in zip(report.costate, direct.families["costate"]):
            assert np.array_equal(ours.t, theirs.t)
            mask = ours.norm_mask
            assert np.array_equal(ours.values[mask], theirs.values[mask]), f"区间 {ours.label} 协态残差不一致"

    def test_wrong_momentum_is_detected(self, reduction_files: Dict[str, Any]):
        """
        测试协态取反号时协态残差与 EL 残差不再互为相反数
        """
        logger.info("测试反号协态")
        spec = reduction_files["reduction_square"]
        problem = spec.problem
        q = sample_trajectory(problem, spec.trajectory, spec.h)
        report = el_reduction_check(problem, q, mode="classical")
        trip = ControlTriple(q, q.with_values(np.gradient(q.values, q.h, axis=0, edge_order=2)), q.with_values(-q.values))
        flipped = pontryagin_residual_classical(problem, trip)
        assert flipped.family_sup("stationary") > 1e-3, "错误的协态应使驻点条件失效"
        assert report.pontryagin.family_sup("stationary") <= 1e-12
