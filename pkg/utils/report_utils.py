#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
报告工具类
用于输出采样函数 CSV、收敛标志 CSV 与结构化 JSON 报告
"""

import os
import io
import json
import hashlib
import logging
from typing import Any, Dict, Optional, Sequence

import numpy as np

from libs.errors import GridError
from libs.scale_calculus import ALIGNMENT_TOL, SampledFunction

logger = logging.getLogger(__name__)

CSV_FORMAT = "%.17g"


class ReportUtils:
    """
    报告工具类
    输出内容只取决于输入，不含时间戳与绝对路径
    """
    @staticmethod
    def create_report_dir(base_dir: str, name: str) -> str:
        """
        创建报告目录

        Args:
            base_dir: 基础目录
            name: 子目录名（子命令）

        Returns:
            报告目录路径
        """
        report_dir = os.path.join(base_dir, name)
        os.makedirs(report_dir, exist_ok=True)
        logger.info(f"报告目录: {report_dir}")
        return report_dir

    @staticmethod
    def save_json_report(
        report_dir: str,
        report: Dict[str, Any],
        report_name: str = "report.json"
    ) -> str:
        """
        保存结构化报告

        Args:
            report_dir: 报告目录
            report: 报告内容
            report_name: 报告文件名

        Returns:
            报告文件路径
        """
        report_path = os.path.join(report_dir, report_name)
        with open(report_path, 'w', encoding='utf-8', newline='\n') as f:
            json.dump(report, f, indent=2, sort_keys=True, ensure_ascii=False)
            f.write('\n')
        logger.info(f"保存报告到: {report_path}")
        return report_path

    @staticmethod
    def sampled_csv_text(f: SampledFunction) -> str:
        """
        采样函数的 CSV 文本，表头 t,re_0,im_0,...

        Args:
            f: 采样函数

        Returns:
            CSV 文本
        """
        return ReportUtils.grid_csv_text(f.times, f.values)

    @staticmethod
    def grid_csv_text(t: np.ndarray, values: np.ndarray) -> str:
        """
        任意节点上的复值场 CSV 文本

        Args:
            t: 节点
            values: 形状 (n, d) 的复数组

        Returns:
            CSV 文本
        """
        values = np.asarray(values, dtype=complex)
        if values.ndim == 1:
            values = values.reshape(-1, 1)
        header = ["t"]
        for j in range(values.shape[1]):
            header += [f"re_{j}", f"im_{j}"]
        table = np.empty((values.shape[0], 1 + 2 * values.shape[1]))
        table[:, 0] = t
        table[:, 1::2] = values.real
        table[:, 2::2] = values.imag
        buffer = io.StringIO()
        np.savetxt(buffer, table, fmt=CSV_FORMAT, delimiter=",", header=",".join(header), comments="")
        return buffer.getvalue()

    @staticmethod
    def flags_csv_text(t: np.ndarray, flags: np.ndarray) -> str:
        """
        逐点收敛标志 CSV 文本，表头 t,converged_0,...

        Args:
            t: 节点
            flags: 形状 (n,) 或 (n, d) 的布尔数组

        Returns:
            CSV 文本
        """
        flags = np.asarray(flags, dtype=bool)
        if flags.ndim == 1:
            flags = flags.reshape(-1, 1)
        header = ["t"] + [f"converged_{j}" for j in range(flags.shape[1])]
        lines = [",".join(header)]
        for time, row in zip(t, flags):
            lines.append(",".join([CSV_FORMAT % time] + [str(int(flag)) for flag in row]))
        return "\n".join(lines) + "\n"

    @staticmethod
    def save_text(report_dir: str, name: str, text: str) -> str:
        path = os.path.join(report_dir, name)
        with open(path, 'w', encoding='utf-8', newline='\n') as f:
            f.write(text)
        logger.debug(f"写入 {path}")
        return path

    @staticmethod
    def save_sampled_csv(path: str, f: SampledFunction) -> str:
        """
        保存采样函数 CSV

        Args:
            path: 文件路径
            f: 采样函数

        Returns:
            文件路径
        """
        with open(path, 'w', encoding='utf-8', newline='\n') as handle:
            handle.write(ReportUtils.sampled_csv_text(f))
        logger.info(f"保存采样函数到: {path}")
        return path

    @staticmethod
    def load_sampled_csv(path: str) -> SampledFunction:
        """
        读取采样函数 CSV

        Args:
            path: 文件路径

        Returns:
            SampledFunction

        Raises:
            GridError: 表头不合法或网格不均匀
        """
        with open(path, 'r', encoding='utf-8') as handle:
            header = handle.readline().strip().split(",")
        if len(header) < 3 or header[0] != "t" or (len(header) - 1) % 2:
            raise GridError(f"CSV 表头不合法: {','.join(header)}")
        table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        t = table[:, 0]
        if t.size < 2:
            raise GridError(f"CSV 至少需要两行数据: {path}")
        h = (t[-1] - t[0]) / (t.size - 1)
        if np.max(np.abs(np.diff(t) - h)) > ALIGNMENT_TOL * h:
            raise GridError(f"CSV 网格不均匀: {path}")
        values = table[:, 1::2] + 1j * table[:, 2::2]
        return SampledFunction(t[0], h, values)

    @staticmethod
    def file_sha256(path: str) -> str:
        """
        文件的 sha256 摘要

        Args:
            path: 文件路径

        Returns:
            十六进制摘要
        """
        digest = hashlib.sha256()
        with open(path, 'rb') as f:
            for chunk in iter(lambda: f.read(65536), b''):
                digest.update(chunk)
        return digest.hexdigest()

    @staticmethod
    def provenance(inputs: Sequence[str], config_echo: Dict[str, Any], texts: Optional[Dict[str, str]] = None) -> Dict[str, Any]:
        """
        来源信息：输入文件摘要（以文件名为键）与配置回显

        Args:
            inputs: 输入文件路径
            config_echo: 运行配置
            texts: 直接给出的文本输入（如函数规格）

        Returns:
            dict
        """
        hashes = {os.path.basename(path): ReportUtils.file_sha256(path) for path in inputs}
        for name, text in (texts or {}).items():
            hashes[name] = hashlib.sha256(text.encode('utf-8')).hexdigest()
        return {"inputs": hashes, "config": config_echo}
