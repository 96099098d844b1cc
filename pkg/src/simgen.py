"""
格子構造の合成データ生成

5×5 の格子点 x^(0)_i を各ドメインへランダム射影し、ノイズを加えて標準化します。
同じ格子点から生成された異なるドメインのベクトル同士を重み 1 で結んだものが
真の重み W̄ です。格子点ごとのベクトル数は一様（regular）か、
n^{-3} に比例するべき乗則（powerlaw）で決めます。
"""

from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Optional, Tuple
import logging

import numpy as np
import pandas as pd
import yaml
from scipy.spatial.distance import pdist

from domains import MultiDomainData, save_domain_csv
from mca_core import eigen_signature
from rng import make_rng
from weights import SymWeights, save_weights

logger = logging.getLogger(__name__)

WEIGHT_KINDS = ("regular", "powerlaw")


@dataclass(frozen=True)
class SimConfig:
    """
    合成データの設定

    Attributes:
        p: 各ドメインの次元
        n: 各ドメインのベクトル数
        grid: 格子の一辺の点数
        noise_sd: ノイズの標準偏差
        weight_kind: 'regular' または 'powerlaw'
        powerlaw_exponent: べき乗則の指数
        seed: 乱数シード
    """
    p: Tuple[int, ...] = (10, 30, 100)
    n: Tuple[int, ...] = (125, 250, 500)
    grid: int = 5
    noise_sd: float = 0.5
    weight_kind: str = "regular"
    powerlaw_exponent: float = 3.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "p", tuple(int(v) for v in self.p))
        object.__setattr__(self, "n", tuple(int(v) for v in self.n))
        if len(self.p) != len(self.n) or len(self.p) < 2:
            raise ValueError("p and n must describe at least two domains")
        if min(self.p) < 1 or min(self.n) < 1:
            raise ValueError("every p_d and n_d must be >= 1")
        if self.grid < 1:
            raise ValueError(f"grid must be >= 1, got {self.grid}")
        if self.noise_sd < 0:
            raise ValueError(f"noise_sd must be non-negative, got {self.noise_sd}")
        if self.weight_kind not in WEIGHT_KINDS:
            raise ValueError(f"weight_kind must be one of {WEIGHT_KINDS}, got {self.weight_kind!r}")
        if self.weight_kind == "regular":
            bad = [n for n in self.n if n % self.grid_points]
            if bad:
                raise ValueError(
                    f"regular weights need n_d divisible by {self.grid_points} grid points, got {bad}"
                )

    @property
    def grid_points(self) -> int:
        return self.grid * self.grid

    def to_dict(self) -> Dict:
        d = asdict(self)
        d["p"] = list(self.p)
        d["n"] = list(self.n)
        return d

    @classmethod
    def from_dict(cls, d: Dict) -> "SimConfig":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        for key in ("p", "n"):
            if key in known:
                known[key] = tuple(known[key])
        return cls(**known)


@dataclass(frozen=True)
class SimDataset:
    """
    生成結果

    Attributes:
        config: 設定
        data: 標準化済みのマルチドメインデータ
        wbar: 真の重み W̄
        assignments: 各ドメインの各ベクトルが由来する格子点（0 始まり）
        grid_counts: D × 格子点数 の n_{d,i}
    """
    config: SimConfig
    data: MultiDomainData
    wbar: SymWeights
    assignments: Tuple[np.ndarray, ...]
    grid_counts: np.ndarray

    @property
    def labels(self) -> np.ndarray:
        """全ノードの格子点ラベル（ドメイン順）"""
        return np.concatenate(self.assignments)

    def link_counts(self) -> Dict[Tuple[int, int], int]:
        """ドメイン組 (d, e)（1 始まり、d < e）ごとの W̄ の非ゼロ数"""
        domains = self.data.layout.row_domains()
        rd, cd = domains[self.wbar.rows], domains[self.wbar.cols]
        counts = {}
        for d in range(self.data.layout.D):
            for e in range(d + 1, self.data.layout.D):
                counts[(d + 1, e + 1)] = int(np.sum((cd == d) & (rd == e)))
        return counts


def grid_points(grid: int = 5) -> np.ndarray:
    """(1,1), (1,2), ..., (grid,grid) を行優先で並べる"""
    axis = np.arange(1, grid + 1, dtype=float)
    return np.array([(a, b) for a in axis for b in axis])


def largest_remainder(shares: np.ndarray, total: int) -> np.ndarray:
    """非負の実数配分を合計 total の整数に丸める（最大剰余法）"""
    shares = np.asarray(shares, dtype=float)
    scaled = shares * total / shares.sum()
    counts = np.floor(scaled).astype(int)
    short = total - int(counts.sum())
    if short > 0:
        order = np.argsort(-(scaled - counts), kind="stable")
        counts[order[:short]] += 1
    return counts


def powerlaw_counts(
    n_total: int, points: int, exponent: float, rng: np.random.Generator
) -> np.ndarray:
    """
    P(n) ∝ n^{-exponent}（n = 1..n_total）から格子点ごとの個数を引き、合計 n_total に揃える
    """
    support = np.arange(1, n_total + 1)
    probs = support ** (-float(exponent))
    probs /= probs.sum()
    raw = rng.choice(support, size=points, p=probs)
    return largest_remainder(raw, n_total)


def _standardize(x: np.ndarray) -> np.ndarray:
    sd = x.std(axis=0)
    if np.any(sd == 0):
        raise ValueError("cannot standardize a constant column")
    return (x - x.mean(axis=0)) / sd


def _cross_links(
    assignments: Tuple[np.ndarray, ...], offsets: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    rows, cols = [], []
    for d in range(len(assignments)):
        for e in range(d):
            later, earlier = np.nonzero(assignments[d][:, None] == assignments[e][None, :])
            rows.append(later + offsets[d])
            cols.append(earlier + offsets[e])
    return np.concatenate(rows), np.concatenate(cols)


def generate(cfg: SimConfig) -> SimDataset:
    """
    設定から合成データと W̄ を作る（シードに対して決定的）

    Returns:
        SimDataset
    """
    rng = make_rng(cfg.seed)
    points = grid_points(cfg.grid)
    n_points = cfg.grid_points

    loadings = [rng.standard_normal((p, 2)) for p in cfg.p]
    if cfg.weight_kind == "regular":
        grid_counts = np.array([np.full(n_points, n // n_points) for n in cfg.n])
    else:
        grid_counts = np.array([
            powerlaw_counts(n, n_points, cfg.powerlaw_exponent, rng) for n in cfg.n
        ])

    blocks, assignments = [], []
    for d, (b, n) in enumerate(zip(loadings, cfg.n)):
        assign = np.repeat(np.arange(n_points), grid_counts[d])
        noise = cfg.noise_sd * rng.standard_normal((n, b.shape[0]))
        blocks.append(_standardize(points[assign] @ b.T + noise))
        assignments.append(assign)

    data = MultiDomainData.from_blocks(blocks)
    rows, cols = _cross_links(tuple(assignments), data.layout.row_offsets)
    wbar = SymWeights(data.layout.N, rows, cols, np.ones(rows.size))

    dataset = SimDataset(cfg, data, wbar, tuple(assignments), grid_counts)
    logger.info(
        f"合成データ生成: {cfg.weight_kind}, p={cfg.p}, n={cfg.n}, "
        f"W̄ 非ゼロ={len(wbar)} {dataset.link_counts()}"
    )
    return dataset


def save_dataset(
    dataset: SimDataset, out_dir: Path, sampled: Optional[SymWeights] = None,
    sampling: Optional[Dict] = None,
) -> Dict:
    """
    CLI が読める形式で書き出す

    出力: domain{d}.csv、wbar.txt、（あれば）weights.txt、assignments.csv、manifest.yaml

    Returns:
        manifest の内容
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    layout = dataset.data.layout

    domains = []
    for d, block in enumerate(dataset.data.blocks):
        name = layout.names[d]
        save_domain_csv(block, out_dir / f"{name}.csv")
        domains.append({"name": name, "file": f"{name}.csv", "p": layout.dims[d]})
    save_weights(dataset.wbar, out_dir / "wbar.txt")

    pd.DataFrame({
        "domain": layout.row_domains() + 1,
        "row": np.concatenate([np.arange(n) for n in layout.counts]),
        "grid_point": dataset.labels + 1,
    }).to_csv(out_dir / "assignments.csv", index=False)

    manifest = {
        "simulation": dataset.config.to_dict(),
        "domains": domains,
        "wbar": "wbar.txt",
        "wbar_links": len(dataset.wbar),
        "block_links": {f"{d}-{e}": c for (d, e), c in dataset.link_counts().items()},
        "grid_counts": dataset.grid_counts.tolist(),
    }
    if sampled is not None:
        save_weights(sampled, out_dir / "weights.txt")
        manifest["weights"] = "weights.txt"
        manifest["sampling"] = dict(sampling or {})

    with open(out_dir / "manifest.yaml", "w", encoding="utf-8") as f:
        yaml.safe_dump(manifest, f, sort_keys=False, allow_unicode=True)
    logger.info(f"データセットを保存: {out_dir}")
    return manifest


@dataclass(frozen=True)
class StructureDiagnostics:
    """
    埋め込みが格子構造を保っているかの目安

    Attributes:
        within: 同じ格子点のノード間の平均距離
        between: 異なる格子点のノード間の平均距離
        ratio: within / between（between = 0 なら NaN）
        signature: 固有値の符号数 (正, ゼロ, 負)
    """
    within: float
    between: float
    ratio: float
    signature: Tuple[int, int, int] = field(default=(0, 0, 0))

    @property
    def defined(self) -> bool:
        return bool(np.isfinite(self.ratio))


def expected_structure_check(
    y: np.ndarray,
    labels: np.ndarray,
    lambdas: np.ndarray,
    components: int = 2,
    tol: float = 1e-8,
) -> StructureDiagnostics:
    """
    先頭 components 成分での格子点内/格子点間の平均距離比と固有値の符号数

    Args:
        y: 埋め込み（N × K）
        labels: 各ノードの格子点
        lambdas: 固有値
        components: 使う成分数
        tol: ゼロとみなす固有値の閾値
    """
    y = np.asarray(y, dtype=float)[:, :components]
    labels = np.asarray(labels)
    distances = pdist(y)
    i, j = np.triu_indices(labels.size, 1)
    same = labels[i] == labels[j]
    within = float(distances[same].mean()) if same.any() else float("nan")
    between = float(distances[~same].mean()) if (~same).any() else float("nan")
    ratio = within / between if between > 0 else float("nan")
    if not np.isfinite(ratio):
        logger.warning("埋め込みが定数のため距離比は定義できません")
    return StructureDiagnostics(within, between, ratio, eigen_signature(lambdas, tol))


if __name__ == "__main__":
    logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')

    dataset = generate(SimConfig(seed=0))
    print(f"W̄ 非ゼロ数: {len(dataset.wbar)}")
    print(f"ブロック別: {dataset.link_counts()}")
    print(f"格子点ごとの個数: {dataset.grid_counts[:, 0]}")
