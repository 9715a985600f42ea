#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
Pytest配置文件
"""

import os
import sys
import pytest
import logging
import yaml

# 添加项目根目录到Python路径
project_root = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, project_root)

from utils.config_utils import ConfigUtils
from utils.log_utils import LogUtils

DATA_DIR = os.path.join(project_root, "data")


def pytest_configure(config):
    """
    Pytest配置函数
    在测试开始前配置日志

    Args:
        config: Pytest配置对象
    """
    config_path = os.path.join(project_root, "config", "config.yaml")
    LogUtils.setup_logging(config_file=config_path)

    logging.info("=" * 60)
    logging.info("开始尺度微积分检验")
    logging.info(f"项目路径: {project_root}")
    logging.info(f"Python版本: {sys.version}")
    logging.info("=" * 60)


def pytest_addoption(parser):
    """
    添加命令行选项

    Args:
        parser: 命令行参数解析器
    """
    parser.addoption("--profile", action="store", default="standard", help="运行档位: quick, standard, fine")


@pytest.fixture(scope="session")
def profile(request):
    """
    档位fixture

    Returns:
        str: 档位名称
    """
    return request.config.getoption("--profile")


@pytest.fixture(scope="session")
def config(profile):
    """
    配置fixture，合并全局配置与档位配置

    Returns:
        dict: 配置字典
    """
    return ConfigUtils.load_config(profile=profile)


@pytest.fixture(scope="session")
def data_dir():
    """测试数据目录"""
    return DATA_DIR


@pytest.fixture(scope="session")
def load_data():
    """
    读取 data/ 下的 YAML 测试数据

    Returns:
        Callable[[str], dict]
    """
    def _load(name: str):
        with open(os.path.join(DATA_DIR, name), 'r', encoding='utf-8') as f:
            return yaml.safe_load(f)
    return _load


def pytest_runtest_setup(item):
    """
    测试用例开始前执行

    Args:
        item: 测试项
    """
    LogUtils.log_test_start(logging.getLogger("tests"), item.name)


@pytest.hookimpl(tryfirst=True, hookwrapper=True)
def pytest_runtest_makereport(item, call):
    """
    记录测试结果

    Args:
        item: 测试项
        call: 测试调用
    """
    outcome = yield
    report = outcome.get_result()

    if report.when == "call":
        if report.passed:
            LogUtils.log_test_end(logging.getLogger("tests"), item.name, True)
        elif report.failed:
            LogUtils.log_test_end(logging.getLogger("tests"), item.name, False)
            logging.error(f"错误信息: {call.excinfo}")
        elif report.skipped:
            logging.warning(f"测试跳过: {item.name}")
