#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
命令行入口
python -m libs.cli <子命令> ...，输出 <out>/<子命令>/report.json 及 CSV，退出码 0 通过 / 1 超出容差 / 2 输入错误
"""

import sys
import argparse
import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from libs.delay_variational import (
    ResidualReport,
    classical_el_residual,
    coherence_check,
    extend_with_history,
    sample_trajectory,
    scale_el_residual,
    solve_extremal_direct,
)
from libs.errors import ProblemSpecError, ScaleCalculusError, SolverError
from libs.function_zoo import classical_derivative, parse_function_spec, sample_on_grid
from libs.optimal_control import (
    ControlProblem,
    el_reduction_check,
    pontryagin_residual_classical,
    pontryagin_residual_scale,
    sample_control_triple,
)
from libs.problem_loader import ProblemFile, load_problem, resolve_schedule
from libs.scale_calculus import (
    EpsilonSchedule,
    SampledFunction,
    barrow_residual,
    holder_estimate,
    leibniz_residual,
    scale_derivative,
)
from utils.config_utils import ConfigUtils
from utils.log_utils import LogUtils
from utils.report_utils import ReportUtils

logger = logging.getLogger(__name__)

SUBCOMMANDS = ("derive", "rules", "holder", "residual", "solve", "coherence", "control")
EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_INPUT = 2


@dataclass
class RunConfig:
    """
    一次运行的配置

    Args:
        subcommand: 子命令
        inputs: 输入文件（问题规格）
        function: 函数规格文本（derive / holder）
        h: 网格步长
        eps0: ε₀
        ratio: 公比
        levels: 层数
        tol: 容差（覆盖缺省表）
        out: 输出目录（缺省取 reporting.output_dir）
        fmt: 'csv'（报告加 CSV 文件）或 'report'（只写报告），缺省取 reporting.format
        profile: 运行档位
        config_file: 全局配置文件
        options: 子命令专有参数
    """
    subcommand: str
    inputs: List[str] = field(default_factory=list)
    function: Optional[str] = None
    h: Optional[float] = None
    eps0: Optional[float] = None
    ratio: Optional[float] = None
    levels: Optional[int] = None
    tol: Optional[float] = None
    out: Optional[str] = None
    fmt: Optional[str] = None
    profile: Optional[str] = None
    config_file: Optional[str] = None
    options: Dict[str, Any] = field(default_factory=dict)

    def echo(self) -> Dict[str, Any]:
        """回显中不含输出目录与配置文件路径"""
        data = asdict(self)
        data.pop("out")
        data.pop("config_file")
        data["inputs"] = [path.replace("\\", "/").split("/")[-1] for path in self.inputs]
        for key in ("trajectory",):
            if data["options"].get(key):
                data["options"][key] = data["options"][key].replace("\\", "/").split("/")[-1]
        return data


@dataclass
class Outcome:
    """子命令结果"""
    passed: bool
    summary: Dict[str, Any]
    schedule: Optional[EpsilonSchedule] = None
    effective_intervals: Dict[str, Any] = field(default_factory=dict)
    inline: Dict[str, str] = field(default_factory=dict)
    files: Dict[str, str] = field(default_factory=dict)
    inputs: List[str] = field(default_factory=list)


class _Settings:
    """合并后的配置与运行参数的取值规则：显式参数 > 规格文件 > 档位 > 全局缺省"""

    def __init__(self, config: RunConfig, merged: Dict[str, Any]):
        self.config = config
        self.merged = merged

    def get(self, path: str, default: Any = None) -> Any:
        return ConfigUtils.get(self.merged, path, default)

    @property
    def rtol(self) -> float:
        return float(self.get("numerics.rtol", 1e-6))

    @property
    def atol(self) -> float:
        return float(self.get("numerics.atol", 1e-9))

    @property
    def output_dir(self) -> str:
        return self.config.out or str(self.get("reporting.output_dir", "reports"))

    @property
    def output_format(self) -> str:
        fmt = self.config.fmt or str(self.get("reporting.format", "csv"))
        if fmt not in ("csv", "report"):
            raise ProblemSpecError(f"未知输出格式: {fmt}", "reporting.format")
        return fmt

    def grid_step(self, spec_h: Optional[float] = None) -> float:
        for value in (self.config.h, spec_h, self.get("profile_config.h"), self.get("numerics.h")):
            if value is not None:
                return float(value)
        raise ProblemSpecError("未给出网格步长", "h")

    def schedule(self, h: float, spec: Optional[ProblemFile] = None) -> EpsilonSchedule:
        steps = int(self.get("profile_config.eps0_steps", self.get("numerics.eps0_steps", 16)))
        ratio = float(self.get("numerics.ratio", 0.5))
        levels = int(self.get("numerics.levels", 5))
        if spec is not None:
            return resolve_schedule(
                spec, h, self.config.eps0, self.config.ratio, self.config.levels, steps, ratio, levels
            )
        try:
            schedule = EpsilonSchedule(
                self.config.eps0 if self.config.eps0 is not None else steps * h,
                self.config.ratio if self.config.ratio is not None else ratio,
                self.config.levels if self.config.levels is not None else levels,
            )
            schedule.steps(h)
        except ScaleCalculusError as exc:
            raise ProblemSpecError(str(exc), "eps0") from exc
        return schedule

    def tolerance(self, key: str) -> float:
        if self.config.tol is not None:
            return float(self.config.tol)
        value = self.get(f"tolerances.{key}")
        if value is None:
            raise ProblemSpecError(f"缺省容差表中没有 {key}", "tolerances")
        return float(value)


def _plain(value: Any) -> Any:
    # 转成 JSON 可序列化的普通类型
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (complex, np.complexfloating)):
        return {"re": float(np.real(value)), "im": float(np.imag(value))}
    if isinstance(value, (float, np.floating)):
        return float(value)
    return value


def _interval_entries(prefix: str, intervals, outcome: Outcome) -> None:
    for item in intervals:
        name = f"{prefix}_{item.label}"
        outcome.effective_intervals[name] = list(item.effective)
        outcome.inline[name] = ReportUtils.grid_csv_text(item.t, item.values)
        outcome.files[f"{name}.csv"] = outcome.inline[name]
        if item.converged is not None:
            outcome.files[f"{name}_flags.csv"] = ReportUtils.flags_csv_text(item.t, item.converged)
        outcome.summary[f"{name}_sup"] = item.sup
        outcome.summary[f"{name}_l2"] = item.l2


def _option(config: RunConfig, key: str, default: Any = None) -> Any:
    value = config.options.get(key)
    return default if value is None else value


# ---------------------------------------------------------------------------
# 子命令
# ---------------------------------------------------------------------------

def _run_derive(config: RunConfig, settings: _Settings) -> Outcome:
    spec = parse_function_spec(config.function)
    t1, t2 = float(_option(config, "t1", 0.0)), float(_option(config, "t2", 1.0))
    h = settings.grid_step()
    schedule = settings.schedule(h)
    f = sample_on_grid(spec, t1 - schedule.eps0, t2 + schedule.eps0, h)
    box, summary = scale_derivative(f, schedule, settings.rtol, settings.atol)
    lo = box.index_of(t1)
    hi = box.index_of(t2)
    result = box.window(t1, t2)
    flags = summary.point_converged[lo:hi + 1]

    tol = settings.tolerance("derive") if config.tol is not None else float(
        settings.get("tolerances.derive_factor", 5.0)
    ) * (schedule.eps0 + h)
    classical = classical_derivative(spec, h)
    report = {
        "function": spec.to_text(),
        "converged_fraction": float(np.mean(flags)),
        "imag_sup": float(np.max(np.abs(result.values.imag))),
        "knots": list(classical.knots),
        "tolerance": tol,
    }
    passed = bool(np.all(np.isfinite(result.values)))
    if classical.differentiable:
        reference = sample_on_grid(classical.spec, t1, t2, h)
        error = float(np.max(np.abs(result.values - reference.values)))
        report["classical_error_sup"] = error
        passed = passed and error <= tol and report["imag_sup"] <= tol
    else:
        report["classical_error_sup"] = None
    outcome = Outcome(passed, report, schedule, {"derivative": [result.a, result.b]})
    outcome.inline["derivative"] = ReportUtils.sampled_csv_text(result)
    outcome.files["derivative.csv"] = outcome.inline["derivative"]
    outcome.files["flags.csv"] = ReportUtils.flags_csv_text(result.times, flags)
    return outcome


def _run_rules(config: RunConfig, settings: _Settings) -> Outcome:
    f_spec = parse_function_spec(_option(config, "f", config.function or ""))
    g_spec = parse_function_spec(_option(config, "g", "poly(1)"))
    t1, t2 = float(_option(config, "t1", 0.0)), float(_option(config, "t2", 1.0))
    h = settings.grid_step()
    schedule = settings.schedule(h)
    f = sample_on_grid(f_spec, t1 - schedule.eps0, t2 + schedule.eps0, h)
    g = sample_on_grid(g_spec, t1 - schedule.eps0, t2 + schedule.eps0, h)
    scales = int(settings.get("holder.scales", 7))

    def exponent(key, sampled):
        value = config.options.get(key)
        if value is not None:
            return float(value)
        estimate = holder_estimate(sampled, scales)
        return 1.0 if estimate.degenerate else estimate.alpha

    alpha, beta = exponent("alpha", f), exponent("beta", g)
    leibniz = leibniz_residual(f, g, alpha, beta, schedule, settings.rtol, settings.atol)
    barrow = barrow_residual(f, t1, t2, schedule, settings.rtol, settings.atol)
    leibniz_tol = settings.tolerance("rules_leibniz")
    barrow_tol = settings.tolerance("rules_barrow")
    passed = barrow.residual <= barrow_tol
    if leibniz.hypothesis_ok:
        passed = passed and leibniz.sup <= leibniz_tol
    summary = {
        "f": f_spec.to_text(),
        "g": g_spec.to_text(),
        "alpha": alpha,
        "beta": beta,
        "leibniz_hypothesis": leibniz.hypothesis_ok,
        "leibniz_sup": leibniz.sup,
        "leibniz_l2": leibniz.l2,
        "leibniz_extracted_fraction": float(np.mean(leibniz.regime)),
        "leibniz_tolerance": leibniz_tol,
        "barrow_residual": barrow.residual,
        "barrow_level_defects": barrow.level_defects,
        "barrow_trend_ok": barrow.trend_ok,
        "barrow_tolerance": barrow_tol,
    }
    outcome = Outcome(passed, summary, schedule, {"leibniz": list(leibniz.interval), "barrow": list(barrow.interval)})
    outcome.inline["leibniz"] = ReportUtils.grid_csv_text(leibniz.t, leibniz.residual)
    outcome.files["leibniz.csv"] = outcome.inline["leibniz"]
    return outcome


def _run_holder(config: RunConfig, settings: _Settings) -> Outcome:
    spec = parse_function_spec(config.function)
    t1, t2 = float(_option(config, "t1", 0.0)), float(_option(config, "t2", 1.0))
    h = settings.grid_step()
    # Hölder 估计用真实函数值，不做 Nyquist 截断
    f = sample_on_grid(spec, t1, t2, h, nyquist=False)
    estimate = holder_estimate(f, int(settings.get("holder.scales", 7)), int(settings.get("holder.min_scales", 4)))
    expected = config.options.get("expected")
    tol = settings.tolerance("holder")
    passed = not estimate.degenerate
    if expected is not None and not estimate.degenerate:
        passed = abs(estimate.alpha - float(expected)) <= tol
    summary = {
        "function": spec.to_text(),
        "alpha": estimate.alpha,
        "slope": estimate.slope,
        "r_squared": estimate.r_squared,
        "scales": estimate.scales,
        "increments": estimate.increments,
        "degenerate": estimate.degenerate,
        "expected": expected,
        "tolerance": tol,
    }
    return Outcome(passed, summary, None, {"sample": [f.a, f.b]})


def _trajectory(config: RunConfig, spec: ProblemFile, h: float, margin: float) -> SampledFunction:
    # 轨迹来源：--trajectory CSV 优先，其次规格文件的 trajectory 键
    problem = spec.problem
    path = config.options.get("trajectory")
    if path:
        q = ReportUtils.load_sampled_csv(path)
        needed = q.a - (problem.t1 - problem.tau - margin)
        if needed > 0.5 * q.h:
            q = extend_with_history(problem, q, round(needed / q.h) * q.h)
        return q
    if spec.trajectory is None:
        raise ProblemSpecError("没有候选轨迹：请给出 --trajectory 或在规格文件中写 trajectory", "trajectory")
    return sample_trajectory(problem, spec.trajectory, h, margin, margin)


def _delay_spec(config: RunConfig) -> ProblemFile:
    if not config.inputs:
        raise ProblemSpecError("缺少问题规格文件", "problem")
    spec = load_problem(config.inputs[0])
    if spec.kind != "delay":
        raise ProblemSpecError("需要时滞变分问题（不能含 phi）", "phi")
    return spec


def _run_residual(config: RunConfig, settings: _Settings) -> Outcome:
    spec = _delay_spec(config)
    mode = _option(config, "mode", "classical")
    h = settings.grid_step(spec.h)
    if config.options.get("trajectory"):
        h = ReportUtils.load_sampled_csv(config.options["trajectory"]).h
    spec.problem.check_grid(h)
    tol = settings.tolerance("residual")
    if mode == "classical":
        q = _trajectory(config, spec, h, 0.0)
        report: ResidualReport = classical_el_residual(spec.problem, q)
        schedule = None
    else:
        schedule = settings.schedule(h, spec)
        q = _trajectory(config, spec, h, schedule.eps0)
        scale_mode = "embedding" if mode == "embedding" else "least_action"
        report = scale_el_residual(spec.problem, q, schedule, scale_mode, settings.rtol, settings.atol)
    summary = {"problem": spec.name, "mode": mode, "sup": report.sup, "l2": report.l2, "tolerance": tol}
    outcome = Outcome(report.sup <= tol, summary, schedule, inputs=list(config.inputs))
    _interval_entries("residual", report.intervals, outcome)
    return outcome


def _run_solve(config: RunConfig, settings: _Settings) -> Outcome:
    spec = _delay_spec(config)
    h = settings.grid_step(spec.h)
    spec.problem.check_grid(h)
    result = solve_extremal_direct(
        spec.problem,
        h,
        max_iterations=int(settings.get("solver.max_iterations", 50)),
        gradient_tol=float(settings.get("solver.gradient_tol", 1e-10)),
        min_damping=float(settings.get("solver.min_damping", 1.0 / 1024)),
    )
    residual = classical_el_residual(spec.problem, result.trajectory)
    tol = settings.tolerance("solve")
    summary = {
        "problem": spec.name,
        "h": h,
        "iterations": result.iterations,
        "gradient_norm": result.gradient_norm,
        "gradient_history": result.history,
        "residual_sup": residual.sup,
        "tolerance": tol,
    }
    outcome = Outcome(result.converged and residual.sup <= tol, summary, None, inputs=list(config.inputs))
    outcome.effective_intervals["trajectory"] = [result.trajectory.a, result.trajectory.b]
    outcome.files["trajectory.csv"] = ReportUtils.sampled_csv_text(result.trajectory)
    _interval_entries("residual", residual.intervals, outcome)
    return outcome


def _run_coherence(config: RunConfig, settings: _Settings) -> Outcome:
    spec = _delay_spec(config)
    h = settings.grid_step(spec.h)
    if config.options.get("trajectory"):
        h = ReportUtils.load_sampled_csv(config.options["trajectory"]).h
    spec.problem.check_grid(h)
    schedule = settings.schedule(h, spec)
    q = _trajectory(config, spec, h, schedule.eps0)
    tol = settings.tolerance("coherence")
    report = coherence_check(spec.problem, q, schedule, tol, settings.rtol, settings.atol)
    summary = {
        "problem": spec.name,
        "max_discrepancy": report.discrepancy,
        "tolerance": tol,
        "embedding_sup": report.embedding.sup,
        "least_action_sup": report.least_action.sup,
    }
    outcome = Outcome(report.passed, summary, schedule, inputs=list(config.inputs))
    _interval_entries("embedding", report.embedding.intervals, outcome)
    _interval_entries("least_action", report.least_action.intervals, outcome)
    print(f"max discrepancy {report.discrepancy:.3e} {'≤' if report.passed else '>'} {tol:.0e}")
    return outcome


def _run_control(config: RunConfig, settings: _Settings) -> Outcome:
    if not config.inputs:
        raise ProblemSpecError("缺少问题规格文件", "problem")
    spec = load_problem(config.inputs[0])
    if spec.kind != "control":
        raise ProblemSpecError("需要控制问题（缺少 phi）", "phi")
    problem: ControlProblem = spec.problem
    mode = _option(config, "mode", "scale")
    h = settings.grid_step(spec.h)
    problem.check_grid(h)
    schedule = settings.schedule(h, spec) if mode == "scale" else None
    margin = schedule.eps0 if schedule is not None else 0.0

    if config.options.get("reduction"):
        if spec.trajectory is None:
            raise ProblemSpecError("约化检验需要 trajectory", "trajectory")
        tol = settings.tolerance("reduction")
        q = sample_trajectory(problem, spec.trajectory, h, margin, margin)
        report = el_reduction_check(problem, q, schedule, mode, tol, settings.rtol, settings.atol)
        summary = {
            "problem": spec.name,
            "mode": mode,
            "reduction": True,
            "discrepancy": report.discrepancy,
            "costate_sup": report.pontryagin.family_sup("costate"),
            "state_sup": report.pontryagin.family_sup("state"),
            "stationary_sup": report.pontryagin.family_sup("stationary"),
            "el_sup": report.el.sup,
            "tolerance": tol,
        }
        outcome = Outcome(report.passed, summary, schedule, inputs=list(config.inputs))
        _interval_entries("costate", report.costate, outcome)
        _interval_entries("el", report.el.intervals, outcome)
        return outcome

    missing = [key for key in ("trajectory", "control", "costate") if getattr(spec, key) is None]
    if missing:
        raise ProblemSpecError("候选三元组不完整", missing[0])
    triple = sample_control_triple(problem, spec.trajectory, spec.control, spec.costate, h, margin, margin)
    if schedule is None:
        report = pontryagin_residual_classical(problem, triple)
    else:
        report = pontryagin_residual_scale(problem, triple, schedule, settings.rtol, settings.atol)
    tol = settings.tolerance("control")
    summary = {"problem": spec.name, "mode": mode, "reduction": False, "sup": report.sup, "tolerance": tol}
    for name in report.families:
        summary[f"{name}_sup"] = report.family_sup(name)
    outcome = Outcome(report.sup <= tol, summary, schedule, inputs=list(config.inputs))
    for name, intervals in report.families.items():
        _interval_entries(name, intervals, outcome)
    return outcome


_RUNNERS = {
    "derive": _run_derive,
    "rules": _run_rules,
    "holder": _run_holder,
    "residual": _run_residual,
    "solve": _run_solve,
    "coherence": _run_coherence,
    "control": _run_control,
}


# ---------------------------------------------------------------------------
# 运行与输出
# ---------------------------------------------------------------------------

def _write(config: RunConfig, outcome: Outcome, status: str, out_dir: str, fmt: str) -> str:
    report_dir = ReportUtils.create_report_dir(out_dir, config.subcommand)
    texts = {"function": config.function} if config.function else None
    for key in ("f", "g"):
        if config.options.get(key):
            texts = dict(texts or {})
            texts[key] = config.options[key]
    inputs = list(outcome.inputs)
    if config.options.get("trajectory"):
        inputs.append(config.options["trajectory"])
    report = {
        "subcommand": config.subcommand,
        "status": status,
        "summary": _plain(outcome.summary),
        "schedule": outcome.schedule.to_dict() if outcome.schedule is not None else None,
        "effective_intervals": _plain(outcome.effective_intervals),
        "residuals": outcome.inline,
        "provenance": _plain(ReportUtils.provenance(inputs, config.echo(), texts)),
    }
    if fmt == "csv":
        for name in sorted(outcome.files):
            ReportUtils.save_text(report_dir, name, outcome.files[name])
    return ReportUtils.save_json_report(report_dir, report)


def run(config: RunConfig) -> int:
    """
    执行一个子命令

    Args:
        config: 运行配置

    Returns:
        退出码：0 通过，1 残差超出容差或求解失败，2 输入错误
    """
    if config.subcommand not in SUBCOMMANDS:
        logger.error(f"未知子命令: {config.subcommand}")
        return EXIT_INPUT
    LogUtils.log_run(logger, config.subcommand, [config.function] if config.function else config.inputs, config.profile)
    try:
        merged = ConfigUtils.load_config(config.config_file, profile=config.profile)
        settings = _Settings(config, merged)
        out_dir, fmt = settings.output_dir, settings.output_format
        outcome = _RUNNERS[config.subcommand](config, settings)
    except SolverError as exc:
        LogUtils.log_solver_failure(logger, exc)
        outcome = Outcome(False, {"error": str(exc)}, inputs=list(config.inputs))
    except (ScaleCalculusError, OSError, ValueError) as exc:
        logger.error(f"输入错误: {exc}")
        # ProblemSpecError 的消息自带 [key] 前缀
        print(f"输入错误: {exc}", file=sys.stderr)
        return EXIT_INPUT

    status = "PASS" if outcome.passed else "FAIL"
    path = _write(config, outcome, status, out_dir, fmt)
    logger.info(f"{config.subcommand}: {status}，报告 {path}")
    print(f"{config.subcommand}: {status} ({path})")
    return EXIT_PASS if outcome.passed else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    """命令行参数解析器"""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--h", type=float, help="网格步长")
    common.add_argument("--eps0", type=float, help="最大尺度 ε₀（缺省 16h）")
    common.add_argument("--ratio", type=float, help="ε 序列公比")
    common.add_argument("--levels", type=int, help="ε 序列层数")
    common.add_argument("--tol", type=float, help="覆盖缺省容差")
    common.add_argument("--out", help="输出目录（缺省取配置 reporting.output_dir）")
    common.add_argument("--format", dest="fmt", choices=("csv", "report"), help="输出格式（缺省取配置 reporting.format）")
    common.add_argument("--profile", choices=("quick", "standard", "fine"), help="运行档位")
    common.add_argument("--config", dest="config_file", help="全局配置文件")

    parser = argparse.ArgumentParser(prog="libs.cli", description="尺度微积分与时滞变分问题检验工具")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    for name, text in (("derive", "函数的尺度导数"), ("holder", "Hölder 指数估计")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("function", help="函数规格，例如 'poly(0, 0, 1)'")
        p.add_argument("--t1", type=float, default=0.0)
        p.add_argument("--t2", type=float, default=1.0)
        if name == "holder":
            p.add_argument("--expected", type=float, help="期望指数")

    p = sub.add_parser("rules", parents=[common], help="Leibniz 与 Barrow 规则检验")
    p.add_argument("--f", required=True, help="函数规格 f")
    p.add_argument("--g", default="poly(1)", help="函数规格 g")
    p.add_argument("--alpha", type=float, help="f 的 Hölder 指数（缺省为估计值）")
    p.add_argument("--beta", type=float, help="g 的 Hölder 指数（缺省为估计值）")
    p.add_argument("--t1", type=float, default=0.0)
    p.add_argument("--t2", type=float, default=1.0)

    p = sub.add_parser("residual", parents=[common], help="时滞 EL 残差")
    p.add_argument("problem", help="问题规格 YAML")
    p.add_argument("--trajectory", help="轨迹 CSV")
    p.add_argument("--mode", choices=("classical", "scale", "least_action", "embedding"), default="classical")

    p = sub.add_parser("solve", parents=[common], help="直接转录求极值轨迹")
    p.add_argument("problem", help="问题规格 YAML")

    p = sub.add_parser("coherence", parents=[common], help="嵌入与最小作用两种尺度 EL 残差的一致性")
    p.add_argument("problem", help="问题规格 YAML")
    p.add_argument("--trajectory", help="轨迹 CSV")

    p = sub.add_parser("control", parents=[common], help="Pontryagin 残差或 φ = u 约化检验")
    p.add_argument("problem", help="控制问题规格 YAML")
    p.add_argument("--mode", choices=("classical", "scale"), default="scale")
    p.add_argument("--reduction", action="store_true", help="执行 φ = u 约化检验")
    return parser


_GLOBAL_KEYS = ("h", "eps0", "ratio", "levels", "tol", "out", "fmt", "profile", "config_file")


def config_from_args(args: argparse.Namespace) -> RunConfig:
    values = vars(args).copy()
    subcommand = values.pop("subcommand")
    problem = values.pop("problem", None)
    function = values.pop("function", None)
    common = {key: values.pop(key) for key in _GLOBAL_KEYS}
    return RunConfig(
        subcommand=subcommand,
        inputs=[problem] if problem else [],
        function=function,
        options={key: value for key, value in values.items() if value is not None},
        **common,
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    config = config_from_args(args)
    LogUtils.setup_logging(config_file=config.config_file or None, log_level="WARNING")
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
