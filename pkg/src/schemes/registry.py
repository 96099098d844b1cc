"""
スキームレジストリ

schemes/ ディレクトリから標本化スキームを自動検出し、
名前でインスタンス化するプラグインシステムを提供します。
"""

import inspect
import importlib
import logging
from pathlib import Path
from typing import Dict, Type, List, Optional

import pandas as pd

from .base import SamplingScheme

logger = logging.getLogger(__name__)


class SchemeRegistry:
    """
    標本化スキームのプラグインシステム

    Example:
        registry = SchemeRegistry()
        registry.auto_discover()
        scheme = registry.create("node")
    """

    def __init__(self, schemes_dir: Optional[Path] = None):
        """
        Args:
            schemes_dir: スキームディレクトリのパス
                         デフォルト: このファイルと同じディレクトリ
        """
        if schemes_dir is None:
            schemes_dir = Path(__file__).parent

        self.schemes_dir = Path(schemes_dir)
        self._registry: Dict[str, Type[SamplingScheme]] = {}

    def auto_discover(self) -> int:
        """
        schemes/ 内のすべてのスキームクラスを自動検出

        Returns:
            検出されたスキームの数
        """
        discovered_count = 0

        for py_file in sorted(self.schemes_dir.glob("*.py")):
            if py_file.name.startswith("_") or py_file.stem in ["base", "registry"]:
                continue

            try:
                module = importlib.import_module(f"schemes.{py_file.stem}")
                for _, obj in inspect.getmembers(module, inspect.isclass):
                    if (issubclass(obj, SamplingScheme) and obj is not SamplingScheme
                            and not inspect.isabstract(obj)):
                        self.register(obj)
                        discovered_count += 1
            except Exception as e:
                logger.warning(f"Failed to import {py_file.name}: {e}")

        logger.debug(f"Auto-discovered {discovered_count} schemes")
        return discovered_count

    def register(self, scheme_class: Type[SamplingScheme]) -> None:
        name = scheme_class.SCHEME_NAME or scheme_class.__name__
        if name in self._registry and self._registry[name] is not scheme_class:
            logger.warning(f"Scheme '{name}' is already registered, overwriting")
        self._registry[name] = scheme_class

    def create(self, name: str) -> SamplingScheme:
        """
        スキームインスタンスを生成

        Raises:
            ValueError: 未登録のスキーム名が指定された場合
        """
        if name not in self._registry:
            available = ", ".join(self._registry.keys())
            raise ValueError(f"Unknown scheme: '{name}'. Available schemes: {available}")
        return self._registry[name]()

    def list_schemes(self) -> List[str]:
        return list(self._registry.keys())

    def rate_table(self, sample_prob: float, resample_prob: float) -> pd.DataFrame:
        """
        登録済みスキームの実効レート一覧

        Args:
            sample_prob: sample に渡す確率（link: ε、node: ξ）
            resample_prob: resample に渡す確率（link: κ、node: ν）

        Returns:
            scheme, class, epsilon, kappa 列の DataFrame（登録順）
        """
        rows = []
        for scheme_class in self._registry.values():
            scheme = scheme_class()
            info = scheme.get_info()
            rows.append({
                "scheme": info["name"],
                "class": info["class"],
                "epsilon": scheme.truth_epsilon(sample_prob),
                "kappa": scheme.effective_kappa(resample_prob),
            })
        return pd.DataFrame(rows, columns=["scheme", "class", "epsilon", "kappa"])


# グローバルレジストリインスタンス
_global_registry: Optional[SchemeRegistry] = None


def get_global_registry() -> SchemeRegistry:
    global _global_registry

    if _global_registry is None:
        _global_registry = SchemeRegistry()
        _global_registry.auto_discover()

    return _global_registry


if __name__ == "__main__":
    logging.basicConfig(level=logging.INFO)

    registry = SchemeRegistry()
    count = registry.auto_discover()

    print(f"\n検出されたスキーム数: {count}")
    print(f"登録済みスキーム: {registry.list_schemes()}")
