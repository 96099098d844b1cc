"""
再現可能な乱数ストリーム

Philox4x64（カウンタ型ビット生成器）を SeedSequence([seed, stream]) で鍵付けし、
(seed, レプリケート番号) ごとに独立なストリームを作ります。
並列実行しても逐次実行と同じ乱数列になります。
"""

from typing import Union

import numpy as np

SeedLike = Union[int, np.random.Generator]


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """
    (seed, stream) に対応する乱数生成器を作る

    Args:
        seed: マスターシード（64bit 非負整数）
        stream: ストリーム番号（レプリケート番号など）

    Returns:
        Philox ベースの Generator
    """
    if seed < 0 or stream < 0:
        raise ValueError(f"seed and stream must be non-negative, got {seed}, {stream}")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, stream])))


def as_generator(seed: SeedLike) -> np.random.Generator:
    """整数シードならストリーム 0 の生成器に変換、Generator はそのまま返す"""
    if isinstance(seed, np.random.Generator):
        return seed
    return make_rng(int(seed))
