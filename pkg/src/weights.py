"""
マッチング重み行列

対称な非負の疎行列 W を下三角（i >= j）の三つ組で保持し、
次数ベクトルと 4 種類のベルヌーイ抽出（リンク/ノードの標本化と再標本化）を提供します。
対角要素 w_ii は 1 回の試行として扱います。
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence, Tuple
import logging

import numpy as np
import pandas as pd
import scipy.sparse as sp

from rng import SeedLike, as_generator, make_rng

logger = logging.getLogger(__name__)

DegreeVector = np.ndarray


@dataclass(frozen=True)
class SymWeights:
    """
    対称マッチング重み（下三角保存）

    Attributes:
        n: ノード数 N
        rows: 行インデックス i（i >= j）
        cols: 列インデックス j
        values: 正の重み w_ij
    """
    n: int
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.int64).ravel()
        cols = np.asarray(self.cols, dtype=np.int64).ravel()
        values = np.asarray(self.values, dtype=float).ravel()
        if not (rows.shape == cols.shape == values.shape):
            raise ValueError("rows, cols and values must have the same length")
        if self.n < 0:
            raise ValueError(f"n must be non-negative, got {self.n}")
        if rows.size:
            if rows.min() < 0 or rows.max() >= self.n or cols.min() < 0:
                raise ValueError(f"node index out of range [0, {self.n})")
            if np.any(rows < cols):
                bad = int(np.argmax(rows < cols))
                raise ValueError(
                    f"entry ({rows[bad]}, {cols[bad]}) violates i >= j storage"
                )
            if not np.all(np.isfinite(values)) or np.any(values <= 0):
                raise ValueError("stored weights must be finite and positive")
            keys = rows * self.n + cols
            if np.unique(keys).size != keys.size:
                raise ValueError("duplicate (i, j) entries")
        for name, arr in (("rows", rows), ("cols", cols), ("values", values)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def empty(cls, n: int) -> "SymWeights":
        return cls(n, np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0))

    @classmethod
    def from_triplets(
        cls, n: int, entries: Iterable[Tuple[int, int, float]]
    ) -> "SymWeights":
        """(i, j, w) の列から生成（i >= j 必須、w == 0 は省略）"""
        entries = [(int(i), int(j), float(w)) for i, j, w in entries if w != 0]
        if not entries:
            return cls.empty(n)
        rows, cols, values = zip(*entries)
        return cls(n, np.array(rows), np.array(cols), np.array(values))

    @classmethod
    def from_dense(cls, matrix: np.ndarray) -> "SymWeights":
        """対称な密行列の下三角から生成"""
        matrix = np.asarray(matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError("matrix must be square")
        if not np.allclose(matrix, matrix.T):
            raise ValueError("matrix must be symmetric")
        rows, cols = np.nonzero(np.tril(matrix))
        return cls(matrix.shape[0], rows, cols, matrix[rows, cols])

    def __len__(self) -> int:
        return int(self.values.size)

    @property
    def is_empty(self) -> bool:
        return self.values.size == 0

    @property
    def is_hollow(self) -> bool:
        return not np.any(self.rows == self.cols)

    def total(self) -> float:
        """Σ_i m_i（非対角は 2 回、対角は 1 回）"""
        off = self.rows != self.cols
        return float(2.0 * self.values[off].sum() + self.values[~off].sum())

    def scaled(self, factor: float) -> "SymWeights":
        if not factor > 0:
            raise ValueError(f"scale factor must be positive, got {factor}")
        return SymWeights(self.n, self.rows, self.cols, self.values * factor)

    def subset(self, mask: np.ndarray) -> "SymWeights":
        mask = np.asarray(mask, dtype=bool)
        return SymWeights(self.n, self.rows[mask], self.cols[mask], self.values[mask])

    def to_sparse(self) -> sp.csr_matrix:
        """N×N の対称 CSR 行列"""
        return sym_matrix(self.n, self.rows, self.cols, self.values)

    def to_dense(self) -> np.ndarray:
        return self.to_sparse().toarray()


def sym_matrix(
    n: int, rows: np.ndarray, cols: np.ndarray, values: np.ndarray
) -> sp.csr_matrix:
    """
    下三角の三つ組から対称疎行列を作る（符号付きの値も可）

    Args:
        n: 次元
        rows, cols: i >= j のインデックス
        values: 値
    """
    off = rows != cols
    r = np.concatenate([rows, cols[off]])
    c = np.concatenate([cols, rows[off]])
    v = np.concatenate([values, values[off]])
    return sp.csr_matrix((v, (r, c)), shape=(n, n))


def degree(w: SymWeights) -> DegreeVector:
    """
    次数ベクトル m_i = Σ_j w_ij

    対角要素 w_ii は 1 回だけ数えます。
    """
    off = w.rows != w.cols
    m = np.bincount(w.rows, weights=w.values, minlength=w.n).astype(float)
    m += np.bincount(w.cols[off], weights=w.values[off], minlength=w.n)
    return m


@dataclass(frozen=True)
class SampleConfig:
    """
    抽出設定

    Attributes:
        scheme: 'link' または 'node'
        prob: ε / ξ（標本化）または κ / ν（再標本化）
        seed: 乱数シード
    """
    scheme: str
    prob: float
    seed: int

    def __post_init__(self):
        if self.scheme not in ("link", "node"):
            raise ValueError(f"scheme must be 'link' or 'node', got {self.scheme!r}")
        if not 0.0 < self.prob <= 1.0:
            raise ValueError(f"prob must be in (0, 1], got {self.prob}")

    def sample(self, wbar: "SymWeights", stream: int = 0) -> "SymWeights":
        """W̄ から W を抽出（乱数はストリーム (seed, stream)）"""
        draw = link_sample if self.scheme == "link" else node_sample
        return draw(wbar, self.prob, make_rng(self.seed, stream))

    def resample(self, w: "SymWeights", stream: int = 0) -> "WeightSplit":
        draw = link_resample if self.scheme == "link" else node_resample
        return draw(w, self.prob, make_rng(self.seed, stream))


@dataclass(frozen=True)
class WeightSplit:
    """
    再標本化による分割

    Attributes:
        star: テスト用 W*
        rest: 学習用 W - W*
        kappa: 実効再標本化確率 κ
    """
    star: SymWeights
    rest: SymWeights
    kappa: float


def _check_prob(name: str, prob: float, allow_one: bool) -> None:
    upper_ok = prob <= 1.0 if allow_one else prob < 1.0
    if not (prob > 0.0 and upper_ok):
        bound = "(0, 1]" if allow_one else "(0, 1)"
        raise ValueError(f"{name} must be in {bound}, got {prob}")


def link_sample(wbar: SymWeights, epsilon: float, seed: SeedLike) -> SymWeights:
    """各要素を確率 ε で独立に残す（w_ij = z_ij w̄_ij）"""
    _check_prob("epsilon", epsilon, allow_one=True)
    rng = as_generator(seed)
    keep = rng.random(len(wbar)) < epsilon
    return wbar.subset(keep)


def link_resample(w: SymWeights, kappa: float, seed: SeedLike) -> WeightSplit:
    """各要素を確率 κ で独立に W* へ振り分ける"""
    _check_prob("kappa", kappa, allow_one=False)
    rng = as_generator(seed)
    star = rng.random(len(w)) < kappa
    return WeightSplit(w.subset(star), w.subset(~star), kappa)


def node_sample(wbar: SymWeights, xi: float, seed: SeedLike) -> SymWeights:
    """ノードを確率 ξ で残し、両端が残った要素だけを保持する（実効 ε = ξ²）"""
    _check_prob("xi", xi, allow_one=True)
    rng = as_generator(seed)
    z = rng.random(wbar.n) < xi
    return wbar.subset(z[wbar.rows] & z[wbar.cols])


def effective_kappa(nu: float) -> float:
    """ノード再標本化の実効 κ = 1 - (1 - ν)²"""
    return 1.0 - (1.0 - nu) ** 2


def node_resample(w: SymWeights, nu: float, seed: SeedLike) -> WeightSplit:
    """
    ノード再標本化

    z_i* ~ Bernoulli(1 - ν) を引き、z_i* z_j* = 0 の要素を W* とします。
    """
    _check_prob("nu", nu, allow_one=False)
    rng = as_generator(seed)
    z = rng.random(w.n) < 1.0 - nu
    star = ~(z[w.rows] & z[w.cols])
    return WeightSplit(w.subset(star), w.subset(~star), effective_kappa(nu))


def pairing_weights(n: int) -> SymWeights:
    """2 ドメインの恒等対応 W = [[0, I], [I, 0]]（CCA の場合）"""
    idx = np.arange(n)
    return SymWeights(2 * n, idx + n, idx, np.ones(n))


def mcca_weights(n: int, coefficients: Sequence[Sequence[float]]) -> SymWeights:
    """
    W^(de) = c_de I_n のブロック重み（MCCA の場合）

    Args:
        n: 各ドメインのベクトル数
        coefficients: D×D の対称係数行列 c_de >= 0
    """
    c = np.asarray(coefficients, dtype=float)
    if c.ndim != 2 or c.shape[0] != c.shape[1] or not np.allclose(c, c.T):
        raise ValueError("coefficients must be a symmetric D x D matrix")
    if np.any(c < 0):
        raise ValueError("coefficients must be non-negative")
    idx = np.arange(n)
    rows, cols, values = [], [], []
    for d in range(c.shape[0]):
        for e in range(d + 1):
            if c[d, e] == 0:
                continue
            rows.append(idx + d * n)
            cols.append(idx + e * n)
            values.append(np.full(n, c[d, e]))
    if not rows:
        return SymWeights.empty(c.shape[0] * n)
    return SymWeights(
        c.shape[0] * n, np.concatenate(rows), np.concatenate(cols), np.concatenate(values)
    )


def load_weights(path: Path, n: Optional[int] = None) -> SymWeights:
    """
    三つ組ファイル（`i j w`、0 始まり、# コメント）を読む

    先頭の `# n=<N>` 行があればノード数として使います。
    重複は合算せずエラーにします。

    Args:
        path: ファイルパス
        n: ノード数（None ならヘッダーまたは最大インデックス + 1）

    Raises:
        FileNotFoundError: ファイルが無い場合
        ValueError: 書式、順序、重複、範囲の誤り
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"weights file not found: {path}")

    header_n = None
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            stripped = line.strip()
            if stripped.startswith("#") and stripped[1:].strip().startswith("n="):
                header_n = int(stripped[1:].strip()[2:])
                break
            if stripped and not stripped.startswith("#"):
                break

    frame = pd.read_csv(
        path, sep=r"\s+", comment="#", header=None, names=["i", "j", "w"],
        dtype={"i": np.int64, "j": np.int64, "w": float}, engine="python",
    )
    if frame.isna().any().any():
        raise ValueError(f"{path}: every line must hold 'i j w'")
    if np.any(frame["i"].to_numpy() < frame["j"].to_numpy()):
        bad = frame[frame["i"] < frame["j"]].iloc[0]
        raise ValueError(f"{path}: entry ({bad['i']}, {bad['j']}) violates i >= j")
    if np.any(frame["w"].to_numpy() < 0):
        raise ValueError(f"{path}: negative weight")
    if frame.duplicated(subset=["i", "j"]).any():
        bad = frame[frame.duplicated(subset=["i", "j"])].iloc[0]
        raise ValueError(f"{path}: duplicate entry ({bad['i']}, {bad['j']})")

    zeros = frame["w"] == 0
    if zeros.any():
        logger.debug(f"{path}: {int(zeros.sum())} 個のゼロ重みを省略")
        frame = frame[~zeros]

    if n is None:
        n = header_n if header_n is not None else int(frame["i"].max()) + 1 if len(frame) else 0
    elif header_n is not None and header_n != n:
        raise ValueError(f"{path}: header n={header_n} does not match expected {n}")

    return SymWeights(
        n, frame["i"].to_numpy(), frame["j"].to_numpy(), frame["w"].to_numpy()
    )


def save_weights(w: SymWeights, path: Path) -> Path:
    """三つ組ファイルに書き出す（`# n=<N>` ヘッダー付き）"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"# n={w.n}\n")
        for i, j, v in zip(w.rows, w.cols, w.values):
            f.write(f"{int(i)} {int(j)} {float(v)!r}\n")
    return path


if __name__ == "__main__":
    wbar = SymWeights.from_triplets(3, [(1, 0, 2.0), (2, 1, 1.0)])
    print(f"次数: {degree(wbar)}")

    hits = sum(len(link_sample(wbar, 0.2, s)) for s in range(2000))
    print(f"リンク標本化の保持率: {hits / (2 * 2000):.3f} (期待値 0.2)")

    split = node_resample(wbar, 0.05, 7)
    print(f"ノード再標本化: |W*|={len(split.star)}, |W-W*|={len(split.rest)}, κ={split.kappa:.4f}")
