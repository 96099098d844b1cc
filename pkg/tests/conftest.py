"""pytest 共通設定: src/ をパスに追加し、時間のかかる Monte Carlo テストを --runslow で有効化"""

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from domains import MultiDomainData  # noqa: E402
from rng import make_rng  # noqa: E402
from simgen import SimConfig, generate  # noqa: E402
from weights import SymWeights  # noqa: E402


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="Monte Carlo の受け入れテストも実行する")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: 数分かかる Monte Carlo テスト（--runslow で実行）")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="--runslow を指定すると実行")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def random_problem(
    seed: int, max_domains: int = 3, max_p: int = 4, min_domains: int = 1, min_p: int = 1
):
    """
    小さな乱数インスタンス（全ノードが少なくとも 1 本のリンクを持つ）

    Returns:
        (MultiDomainData, SymWeights)
    """
    rng = make_rng(seed)
    D = int(rng.integers(min_domains, max_domains + 1))
    dims = rng.integers(min_p, max_p + 1, size=D)
    counts = 2 * dims + rng.integers(1, 10, size=D)
    blocks = [rng.standard_normal((int(n), int(p))) for n, p in zip(counts, dims)]
    data = MultiDomainData.from_blocks(blocks)

    n = data.layout.N
    rows, cols = np.tril_indices(n, -1)
    keep = rng.random(rows.size) < 0.3
    # 鎖 i -> i-1 で孤立ノードをなくす
    keep |= rows == cols + 1
    values = rng.uniform(0.2, 2.0, int(keep.sum()))
    return data, SymWeights(n, rows[keep], cols[keep], values)


@pytest.fixture
def problem():
    return random_problem(seed=11, min_domains=2, min_p=2)


@pytest.fixture(scope="session")
def small_sim():
    """2 ドメインの小さな格子データ（n_d は 25 の倍数）"""
    return generate(SimConfig(p=(3, 5), n=(50, 75), seed=3))
