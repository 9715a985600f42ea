#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
配置工具类
读取全局配置与运行档位配置并合并
"""

import os
import logging
from typing import Any, Dict, Optional

import yaml

logger = logging.getLogger(__name__)

PROJECT_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
DEFAULT_CONFIG_FILE = os.path.join(PROJECT_ROOT, "config", "config.yaml")
DEFAULT_ENV_FILE = os.path.join(PROJECT_ROOT, "config", "env_config.yaml")
DEFAULT_PROFILE = "standard"


class ConfigUtils:
    """
    配置工具类
    """
    @staticmethod
    def read_yaml(path: str) -> Dict[str, Any]:
        """
        读取 YAML 文件

        Args:
            path: 文件路径

        Returns:
            字典（空文件返回空字典）
        """
        with open(path, 'r', encoding='utf-8') as f:
            data = yaml.safe_load(f)
        return data or {}

    @staticmethod
    def load_config(
        config_file: Optional[str] = None,
        env_file: Optional[str] = None,
        profile: Optional[str] = None
    ) -> Dict[str, Any]:
        """
        加载全局配置并合并指定档位

        Args:
            config_file: 全局配置文件，默认 config/config.yaml
            env_file: 档位配置文件，默认 config/env_config.yaml
            profile: 档位名称 quick / standard / fine

        Returns:
            dict: 合并后的配置，档位写在 profile 与 profile_config 键下
        """
        config = ConfigUtils.read_yaml(config_file or DEFAULT_CONFIG_FILE)
        env_config = ConfigUtils.read_yaml(env_file or DEFAULT_ENV_FILE)

        name = profile or DEFAULT_PROFILE
        if name not in env_config:
            logger.warning(f"未知档位 {name}，使用 {DEFAULT_PROFILE}")
            name = DEFAULT_PROFILE
        config['profile'] = name
        config['profile_config'] = env_config.get(name, {})
        return config

    @staticmethod
    def get(config: Dict[str, Any], path: str, default: Any = None) -> Any:
        """
        按点分路径读取配置项，例如 "tolerances.residual"

        Args:
            config: 配置字典
            path: 点分路径
            default: 缺省值

        Returns:
            配置值
        """
        node: Any = config
        for key in path.split('.'):
            if not isinstance(node, dict) or key not in node:
                return default
            node = node[key]
        return node
