"""リンク単位の標本化：各要素を独立に残す"""

import sys
from pathlib import Path

sys.path.append(str(Path(__file__).parent.parent))

from rng import SeedLike
from weights import SymWeights, WeightSplit, link_resample, link_sample

from .base import SamplingScheme


class LinkScheme(SamplingScheme):
    SCHEME_NAME = "link"

    def sample(self, wbar: SymWeights, prob: float, seed: SeedLike) -> SymWeights:
        return link_sample(wbar, prob, seed)

    def resample(self, w: SymWeights, prob: float, seed: SeedLike) -> WeightSplit:
        return link_resample(w, prob, seed)

    def truth_epsilon(self, prob: float) -> float:
        return prob

    def effective_kappa(self, prob: float) -> float:
        return prob
