"""
schemes パッケージ

重みの標本化・再標本化スキームのプラグインシステム
"""

from .base import SamplingScheme
from .registry import SchemeRegistry, get_global_registry

__all__ = [
    'SamplingScheme',
    'SchemeRegistry',
    'get_global_registry',
]
