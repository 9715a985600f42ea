#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
日志工具类
按 config.yaml 的 logging 段配置日志，并提供检验运行与测试用例的日志格式
"""

import os
import logging
import logging.handlers
from typing import Any, Dict, Optional, Sequence

import yaml

from libs.errors import NewtonConvergenceError
from utils.config_utils import ConfigUtils

DEFAULT_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


class LogUtils:
    """
    日志工具类
    """
    @staticmethod
    def _logging_section(config_file: Optional[str]) -> Dict[str, Any]:
        if not config_file or not os.path.exists(config_file):
            return {}
        try:
            return ConfigUtils.read_yaml(config_file).get('logging', {}) or {}
        except (OSError, yaml.YAMLError) as e:
            logging.getLogger(__name__).warning(f"读取日志配置失败，使用缺省配置: {e}")
            return {}

    @staticmethod
    def setup_logging(
        config_file: Optional[str] = None,
        log_level: Optional[str] = None,
        log_file: Optional[str] = None
    ) -> None:
        """
        配置根日志记录器

        logging 段可以带 modules 映射，为单个模块单独设级别，
        例如把 libs.scale_calculus 的逐点未收敛提示压到 WARNING。

        Args:
            config_file: 配置文件路径，读取其中的 logging 段
            log_level: 覆盖配置中的级别
            log_file: 覆盖配置中的日志文件；空字符串表示不写文件
        """
        section = LogUtils._logging_section(config_file)
        level_name = str(log_level or section.get('level', "INFO")).upper()
        log_format = section.get('format') or DEFAULT_FORMAT
        path = section.get('file') if log_file is None else log_file

        root_logger = logging.getLogger()
        for handler in root_logger.handlers[:]:
            root_logger.removeHandler(handler)

        level = getattr(logging, level_name, logging.INFO)
        root_logger.setLevel(level)

        console_handler = logging.StreamHandler()
        console_handler.setLevel(level)
        console_handler.setFormatter(logging.Formatter(log_format))
        root_logger.addHandler(console_handler)

        if path:
            log_dir = os.path.dirname(path)
            if log_dir:
                os.makedirs(log_dir, exist_ok=True)
            file_handler = logging.handlers.RotatingFileHandler(
                path,
                maxBytes=10 * 1024 * 1024,
                backupCount=5,
                encoding='utf-8'
            )
            file_handler.setLevel(level)
            file_handler.setFormatter(logging.Formatter(log_format))
            root_logger.addHandler(file_handler)

        for name, module_level in (section.get('modules') or {}).items():
            logging.getLogger(name).setLevel(getattr(logging, str(module_level).upper(), level))

        logging.getLogger(__name__).debug(f"日志已配置: 级别 {level_name}, 文件 {path or '无'}")

    @staticmethod
    def log_test_start(logger: logging.Logger, test_name: str) -> None:
        """记录测试开始"""
        logger.info("=" * 50)
        logger.info(f"开始测试: {test_name}")

    @staticmethod
    def log_test_end(logger: logging.Logger, test_name: str, success: bool = True) -> None:
        """记录测试结束"""
        if success:
            logger.info(f"测试成功: {test_name}")
        else:
            logger.warning(f"测试失败: {test_name}")
        logger.info("=" * 50)

    @staticmethod
    def log_run(logger: logging.Logger, subcommand: str, inputs: Sequence[str], profile: Optional[str]) -> None:
        """
        记录一次子命令运行

        Args:
            logger: 日志记录器
            subcommand: 子命令
            inputs: 输入文件或函数规格
            profile: 运行档位
        """
        logger.info("-" * 30)
        logger.info(f"运行 {subcommand} (档位 {profile or '缺省'}): {' '.join(inputs) or '无输入文件'}")

    @staticmethod
    def log_solver_failure(logger: logging.Logger, exc: Exception) -> None:
        """
        记录求解失败；Newton 未收敛时提示可调的 solver 配置项

        Args:
            logger: 日志记录器
            exc: 求解器异常
        """
        logger.error(f"求解失败: {exc}", exc_info=True)
        if isinstance(exc, NewtonConvergenceError):
            logger.warning(
                f"迭代 {exc.iterations} 次后梯度范数仍为 {exc.gradient_norm:.3e}，"
                f"可放宽 solver.gradient_tol 或增大 solver.max_iterations"
            )
