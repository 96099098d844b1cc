"""
標本化スキームの基底クラス

観測用の標本化（W̄ → W）と交差検証用の再標本化（W → W*, W - W*）を
1 つのスキームとしてまとめます。
"""

from abc import ABC, abstractmethod
from typing import Any, Dict, Optional
import sys
from pathlib import Path

# 親ディレクトリをパスに追加
sys.path.append(str(Path(__file__).parent.parent))

from rng import SeedLike
from weights import SymWeights, WeightSplit


class SamplingScheme(ABC):
    """
    標本化スキームの基底クラス

    新しいスキームを追加する場合：
    1. このクラスを継承
    2. sample / resample / truth_epsilon / effective_kappa を実装
    3. SCHEME_NAME クラス変数を定義

    Example:
        class HalfScheme(SamplingScheme):
            SCHEME_NAME = "half"
            ...
    """

    SCHEME_NAME: Optional[str] = None  # スキーム識別子（未定義時はクラス名を使用）

    @abstractmethod
    def sample(self, wbar: SymWeights, prob: float, seed: SeedLike) -> SymWeights:
        """
        真の重み W̄ から観測 W を抽出

        Args:
            wbar: 真の重み
            prob: 保持確率（link: ε、node: ξ）
            seed: 乱数シードまたは Generator
        """

    @abstractmethod
    def resample(self, w: SymWeights, prob: float, seed: SeedLike) -> WeightSplit:
        """
        観測 W を W* と W - W* に分割

        Args:
            w: 観測重み
            prob: 再標本化確率（link: κ、node: ν）
            seed: 乱数シードまたは Generator
        """

    @abstractmethod
    def truth_epsilon(self, prob: float) -> float:
        """sample の確率に対応する要素ごとの実効 ε"""

    @abstractmethod
    def effective_kappa(self, prob: float) -> float:
        """resample の確率に対応する要素ごとの実効 κ"""

    def get_name(self) -> str:
        """スキーム名を取得"""
        return self.SCHEME_NAME or self.__class__.__name__

    def get_info(self) -> Dict[str, Any]:
        return {"name": self.get_name(), "class": self.__class__.__name__}

    def __repr__(self) -> str:
        return f"{self.__class__.__name__}(name='{self.get_name()}')"
