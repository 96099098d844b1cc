"""
ノード単位の標本化

ノードを独立に抽出し、両端の状態で要素の所属を決めます。
W̄ の要素の実効保持率は ξ²、再標本化の実効 κ は 1 - (1 - ν)² です。
"""

import sys
from pathlib import Path

sys.path.append(str(Path(__file__).parent.parent))

from rng import SeedLike
from weights import SymWeights, WeightSplit, effective_kappa, node_resample, node_sample

from .base import SamplingScheme


class NodeScheme(SamplingScheme):
    SCHEME_NAME = "node"

    def sample(self, wbar: SymWeights, prob: float, seed: SeedLike) -> SymWeights:
        return node_sample(wbar, prob, seed)

    def resample(self, w: SymWeights, prob: float, seed: SeedLike) -> WeightSplit:
        return node_resample(w, prob, seed)

    def truth_epsilon(self, prob: float) -> float:
        # 非対角要素の値。対角要素（自己リンク）は ξ で残る
        return prob ** 2

    def effective_kappa(self, prob: float) -> float:
        return effective_kappa(prob)
