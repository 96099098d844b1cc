"""
マルチドメインデータモデル

各ドメインのデータ行列 X^(d)（n_d × p_d）をブロックのまま保持し、
拡張ベクトル符号化・中心化・ドメイン別正則化を提供します。
ゼロ埋めした N × P 行列は作らず、必要な時は疎なブロック対角行列として組み立てます。
"""

from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple
import logging

import numpy as np
import pandas as pd
import scipy.sparse as sp

logger = logging.getLogger(__name__)

CENTER_MODES = ("weighted", "unweighted")


@dataclass(frozen=True)
class DomainLayout:
    """
    ドメイン構成

    Attributes:
        dims: 各ドメインの次元 p_d
        counts: 各ドメインのベクトル数 n_d
        names: ドメイン名（省略時は domain1, domain2, ...）
    """
    dims: Tuple[int, ...]
    counts: Tuple[int, ...]
    names: Tuple[str, ...] = ()

    def __post_init__(self):
        dims = tuple(int(p) for p in self.dims)
        counts = tuple(int(n) for n in self.counts)
        if not dims or len(dims) != len(counts):
            raise ValueError("dims and counts must be non-empty and of equal length")
        if min(dims) < 1 or min(counts) < 1:
            raise ValueError("every p_d and n_d must be >= 1")
        names = tuple(self.names) or tuple(f"domain{d + 1}" for d in range(len(dims)))
        if len(names) != len(dims) or len(set(names)) != len(names):
            raise ValueError("domain names must be unique, one per domain")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "names", names)

    @property
    def D(self) -> int:
        return len(self.dims)

    @property
    def P(self) -> int:
        return sum(self.dims)

    @property
    def N(self) -> int:
        return sum(self.counts)

    @property
    def col_offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.dims)])

    @property
    def row_offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.counts)])

    def col_slice(self, d: int) -> slice:
        off = self.col_offsets
        return slice(int(off[d]), int(off[d + 1]))

    def row_slice(self, d: int) -> slice:
        off = self.row_offsets
        return slice(int(off[d]), int(off[d + 1]))

    def domain_index(self, domain) -> int:
        """ドメイン名または 0 始まりの番号を番号に変換"""
        if isinstance(domain, str):
            if domain not in self.names:
                raise ValueError(f"unknown domain {domain!r}; known: {', '.join(self.names)}")
            return self.names.index(domain)
        d = int(domain)
        if not 0 <= d < self.D:
            raise ValueError(f"domain index {d} out of range [0, {self.D})")
        return d

    def row_domains(self) -> np.ndarray:
        """各行（グローバルノード）の所属ドメイン番号"""
        return np.repeat(np.arange(self.D), self.counts)


@dataclass(frozen=True)
class MultiDomainData:
    """
    ドメインごとのデータブロック

    Attributes:
        layout: ドメイン構成
        blocks: X^(d)（n_d × p_d）のタプル
    """
    layout: DomainLayout
    blocks: Tuple[np.ndarray, ...]

    def __post_init__(self):
        blocks = tuple(np.asarray(b, dtype=float) for b in self.blocks)
        if len(blocks) != self.layout.D:
            raise ValueError(f"expected {self.layout.D} blocks, got {len(blocks)}")
        for d, b in enumerate(blocks):
            expected = (self.layout.counts[d], self.layout.dims[d])
            if b.shape != expected:
                raise ValueError(f"block {d} has shape {b.shape}, expected {expected}")
            if not np.all(np.isfinite(b)):
                raise ValueError(f"block {d} contains non-finite values")
            b.setflags(write=False)
        object.__setattr__(self, "blocks", blocks)

    @classmethod
    def from_blocks(
        cls, blocks: Sequence[np.ndarray], names: Sequence[str] = ()
    ) -> "MultiDomainData":
        blocks = [np.atleast_2d(np.asarray(b, dtype=float)) for b in blocks]
        layout = DomainLayout(
            dims=tuple(b.shape[1] for b in blocks),
            counts=tuple(b.shape[0] for b in blocks),
            names=tuple(names),
        )
        return cls(layout, tuple(blocks))


@dataclass(frozen=True)
class Centering:
    """
    中心化オフセット

    学習時のオフセットを保持し、新しいベクトルにも同じものを適用します。

    Attributes:
        mode: 'weighted' / 'unweighted' / 'none'
        offsets: 各ドメインのオフセットベクトル（長さ p_d）
    """
    mode: str
    offsets: Tuple[np.ndarray, ...]

    @classmethod
    def identity(cls, layout: DomainLayout) -> "Centering":
        return cls("none", tuple(np.zeros(p) for p in layout.dims))

    def apply(self, x: np.ndarray, d: int) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return x - self.offsets[d]


@dataclass(frozen=True)
class Regularizer:
    """
    正則化項 ΔG = γ_M L_M、ΔH = γ_W L_W

    Attributes:
        gamma_m: γ_M
        gamma_w: γ_W
        l_m: P × P 対称行列（ドメインのブロック対角）
        l_w: P × P 対称行列
        per_degree: L_M が次数から決まる（domain_regularizer 製）かどうか
    """
    gamma_m: float
    gamma_w: float
    l_m: np.ndarray
    l_w: np.ndarray
    per_degree: bool = False

    def __post_init__(self):
        l_m = np.asarray(self.l_m, dtype=float)
        l_w = np.asarray(self.l_w, dtype=float)
        if l_m.shape != l_w.shape or l_m.ndim != 2 or l_m.shape[0] != l_m.shape[1]:
            raise ValueError("L_M and L_W must be square matrices of equal size")
        if not (np.allclose(l_m, l_m.T) and np.allclose(l_w, l_w.T)):
            raise ValueError("L_M and L_W must be symmetric")
        object.__setattr__(self, "l_m", l_m)
        object.__setattr__(self, "l_w", l_w)

    @classmethod
    def zero(cls, P: int) -> "Regularizer":
        return cls(0.0, 0.0, np.zeros((P, P)), np.zeros((P, P)))

    @classmethod
    def identity(cls, P: int, gamma_m: float, gamma_w: float = 0.0) -> "Regularizer":
        return cls(gamma_m, gamma_w, np.eye(P), np.eye(P))

    @property
    def delta_g(self) -> np.ndarray:
        return self.gamma_m * self.l_m

    @property
    def delta_h(self) -> np.ndarray:
        return self.gamma_w * self.l_w

    def with_gammas(self, gamma_m: float, gamma_w: Optional[float] = None) -> "Regularizer":
        return Regularizer(
            gamma_m, self.gamma_w if gamma_w is None else gamma_w, self.l_m, self.l_w,
            self.per_degree,
        )

    def for_degrees(self, data: MultiDomainData, m: np.ndarray) -> "Regularizer":
        """
        別の重みで学習し直す時の正則化

        L_M が次数から決まる場合は m で作り直し、それ以外はそのまま返します。
        """
        if not self.per_degree:
            return self
        return domain_regularizer(data, m, self.gamma_m, self.gamma_w)


def augment(x: np.ndarray, d: int, layout: DomainLayout) -> np.ndarray:
    """
    ドメイン d のベクトルを長さ P の拡張ベクトルに符号化

    Args:
        x: 長さ p_d のベクトル
        d: ドメイン番号（0 始まり）
        layout: ドメイン構成

    Returns:
        d のスロットに x、それ以外はゼロの長さ P のベクトル
    """
    d = layout.domain_index(d)
    x = np.asarray(x, dtype=float).ravel()
    if x.size != layout.dims[d]:
        raise ValueError(
            f"vector of length {x.size} does not match p_{d + 1} = {layout.dims[d]}"
        )
    out = np.zeros(layout.P)
    out[layout.col_slice(d)] = x
    return out


def assemble(data: MultiDomainData) -> sp.csr_matrix:
    """
    ブロック対角の N × P 行列 X = Diag(X^(1), ..., X^(D)) を疎行列として組み立てる

    行の順序はドメイン順です。
    """
    return sp.block_diag(data.blocks, format="csr")


def _domain_split(m: np.ndarray, layout: DomainLayout) -> List[np.ndarray]:
    return [m[layout.row_slice(d)] for d in range(layout.D)]


def center(
    data: MultiDomainData, m: np.ndarray, mode: str = "weighted"
) -> Tuple[MultiDomainData, Centering]:
    """
    ドメインブロックごとに中心化

    weighted: Σ_i m_i x_i = 0（m_i = 0 の行は寄与しない）
    unweighted: Σ_i x_i = 0

    Args:
        data: マルチドメインデータ
        m: 次数ベクトル（長さ N）
        mode: 'weighted' または 'unweighted'

    Returns:
        (中心化済みデータ, オフセット)

    Raises:
        ValueError: weighted で Σ m_i = 0 の場合
    """
    if mode not in CENTER_MODES:
        raise ValueError(f"center mode must be one of {CENTER_MODES}, got {mode!r}")
    m = np.asarray(m, dtype=float)
    if m.shape != (data.layout.N,):
        raise ValueError(f"degree vector must have length {data.layout.N}")
    if mode == "weighted" and not m.sum() > 0:
        raise ValueError("weighted centering requires positive total weight")

    offsets = []
    for d, (block, m_d) in enumerate(zip(data.blocks, _domain_split(m, data.layout))):
        if mode == "unweighted":
            offsets.append(block.mean(axis=0))
        elif m_d.sum() > 0:
            offsets.append(m_d @ block / m_d.sum())
        else:
            logger.warning(f"ドメイン {data.layout.names[d]} の重みが全てゼロ: 中心化をスキップ")
            offsets.append(np.zeros(block.shape[1]))

    centered = MultiDomainData(
        data.layout, tuple(b - o for b, o in zip(data.blocks, offsets))
    )
    return centered, Centering(mode, tuple(offsets))


def domain_regularizer(
    data: MultiDomainData,
    m: np.ndarray,
    gamma_m: float = 0.0,
    gamma_w: float = 0.0,
) -> Regularizer:
    """
    ドメイン別正則化 L_M = Diag(α_1 I_{p_1}, ..., α_D I_{p_D})

    α_d = tr((X^(d))^T M^(d) X^(d)) / p_d。L_W = 0 とします。

    Args:
        data: マルチドメインデータ
        m: 次数ベクトル
        gamma_m: γ_M
        gamma_w: γ_W（L_W = 0 なので効果なし）
    """
    layout = data.layout
    alphas = np.array([
        float(m_d @ np.sum(block ** 2, axis=1)) / layout.dims[d]
        for d, (block, m_d) in enumerate(zip(data.blocks, _domain_split(np.asarray(m, float), layout)))
    ])
    if np.all(alphas == 0):
        logger.warning("全ての α_d がゼロです（重みが空）: L_M は縮退しています")
    l_m = np.diag(np.repeat(alphas, layout.dims))
    return Regularizer(gamma_m, gamma_w, l_m, np.zeros((layout.P, layout.P)), per_degree=True)


def load_domain_csv(path: Path, p: int) -> np.ndarray:
    """
    ドメインのデータ CSV を読む（ヘッダー無し、1 行 1 ベクトル、p 列）

    Raises:
        FileNotFoundError: ファイルが無い場合
        ValueError: 列数が p と一致しない場合
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"data file not found: {path}")
    frame = pd.read_csv(path, header=None, comment="#", float_precision="round_trip")
    if frame.shape[1] != p:
        raise ValueError(f"{path}: expected {p} columns, found {frame.shape[1]}")
    values = frame.to_numpy(dtype=float)
    if not np.all(np.isfinite(values)):
        raise ValueError(f"{path}: non-finite values")
    return values


def save_domain_csv(block: np.ndarray, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(block).to_csv(path, header=False, index=False, float_format="%.17g")
    return path


if __name__ == "__main__":
    layout = DomainLayout(dims=(2, 3), counts=(1, 1))
    print(augment([1, 2], 0, layout))
    print(augment([3, 4, 5], 1, layout))

    data = MultiDomainData.from_blocks([[[0.0], [4.0]]])
    centered, offsets = center(data, np.array([1.0, 3.0]), "weighted")
    print(f"重み付き中心化: {centered.blocks[0].ravel()} (オフセット {offsets.offsets[0]})")
