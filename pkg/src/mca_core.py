"""
マッチング相関分析（MCA / CDMCA）の本体

G = X^T M X + γ_M L_M、H = X^T W X + γ_W L_W を作り、
(G^{-1/2})^T H G^{-1/2} の固有分解から変換行列 A と固有値 λ を求めます。
G^{1/2} は固有分解による対称平方根、固有ベクトルの符号は
「最初の非ゼロ成分が正」に固定します。
"""

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence, Tuple
import json
import logging

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from domains import (
    CENTER_MODES, Centering, DomainLayout, MultiDomainData, Regularizer,
    assemble, center, domain_regularizer,
)
from exceptions import SingularGramError
from weights import SymWeights, degree

logger = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = 1
GAMMA_M_FLOOR = 1e-6
PREPARE_MODES = CENTER_MODES + ("none",)
RESCALE_MODES = ("weighted", "unweighted")


@dataclass(frozen=True)
class GramPair:
    """正則化込みの G と H（P × P 対称）"""
    g: np.ndarray
    h: np.ndarray


@dataclass(frozen=True)
class Embedding:
    """
    埋め込み Y（N × K）

    Attributes:
        y: 行がノード、列が成分
        degenerate: 正規化因子がゼロで除外される成分
    """
    y: np.ndarray
    degenerate: np.ndarray

    @property
    def k(self) -> int:
        return self.y.shape[1]


def build_gram(data: MultiDomainData, w: SymWeights, reg: Optional[Regularizer] = None) -> GramPair:
    """
    G と H を組み立てる

    X^T W X は W の保存要素だけを使う疎行列積で計算し、
    最後に (H + H^T) / 2 で厳密に対称化します。

    Args:
        data: マルチドメインデータ（中心化済みを想定）
        w: マッチング重み（n = N）
        reg: 正則化（None ならゼロ）
    """
    layout = data.layout
    if w.n != layout.N:
        raise ValueError(f"weights cover {w.n} nodes but data has N = {layout.N}")
    x = assemble(data)
    m = degree(w)
    g = np.asarray((x.T @ sp.diags(m) @ x).todense())
    h = np.asarray((x.T @ w.to_sparse() @ x).todense())
    g = (g + g.T) / 2.0
    h = (h + h.T) / 2.0
    if reg is not None:
        if reg.l_m.shape != (layout.P, layout.P):
            raise ValueError(f"regularizer is {reg.l_m.shape}, expected P = {layout.P}")
        g = g + reg.delta_g
        h = h + reg.delta_h
    return GramPair(g, h)


def inverse_sqrt(g: np.ndarray) -> np.ndarray:
    """対称正定値行列の対称逆平方根 G^{-1/2}"""
    s, v = la.eigh(g)
    scale = max(float(np.abs(s).max()), 1.0) if s.size else 1.0
    if s.size and s.min() <= g.shape[0] * np.finfo(float).eps * scale:
        raise SingularGramError(float(s.min()))
    return (v / np.sqrt(s)) @ v.T


def _fix_signs(u: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """各列の最初の非ゼロ成分を正にする"""
    u = u.copy()
    for k in range(u.shape[1]):
        nonzero = np.flatnonzero(np.abs(u[:, k]) > tol)
        if nonzero.size and u[nonzero[0], k] < 0:
            u[:, k] = -u[:, k]
    return u


def solve(gp: GramPair) -> Tuple[np.ndarray, np.ndarray]:
    """
    固有値問題を解く

    Args:
        gp: G, H

    Returns:
        (A: P × P, lambdas: 降順の P 個の固有値)

    Raises:
        SingularGramError: G が正定値でない場合
    """
    g_inv_sqrt = inverse_sqrt(gp.g)
    t = g_inv_sqrt @ gp.h @ g_inv_sqrt
    t = (t + t.T) / 2.0
    lambdas, u = la.eigh(t)
    order = np.argsort(lambdas)[::-1]
    lambdas = lambdas[order]
    u = _fix_signs(u[:, order])
    return g_inv_sqrt @ u, lambdas


def rescale(
    a: np.ndarray,
    data: MultiDomainData,
    m: np.ndarray,
    mode: str = "weighted",
    k: Optional[int] = None,
    scaled: bool = True,
) -> Tuple[np.ndarray, Embedding]:
    """
    成分ごとの再スケール y^k = b_k X a^k

    weighted: Σ m_i y_ik² = Σ m_i（scaled=False なら 1）
    unweighted: Σ y_ik² = N（scaled=False なら 1）

    Args:
        a: 変換行列（P × K 以上）
        data: 中心化済みデータ
        m: 次数ベクトル
        mode: 'weighted' / 'unweighted'
        k: 使う成分数（None なら全列）
        scaled: Σ m_i（または N）倍するかどうか

    Returns:
        (b, 埋め込み)。正規化因子がゼロの成分は b_k = 0 で degenerate に立てる
    """
    if mode not in RESCALE_MODES:
        raise ValueError(f"rescale mode must be one of {RESCALE_MODES}, got {mode!r}")
    k = a.shape[1] if k is None else int(k)
    if not 0 <= k <= a.shape[1]:
        raise ValueError(f"K = {k} exceeds available components {a.shape[1]}")
    m = np.asarray(m, dtype=float)
    raw = np.asarray(assemble(data) @ a[:, :k])

    if mode == "weighted":
        norms = m @ raw ** 2
        target = float(m.sum()) if scaled else 1.0
    else:
        norms = np.sum(raw ** 2, axis=0)
        target = float(data.layout.N) if scaled else 1.0

    scale = max(float(norms.max()), 1.0) if norms.size else 1.0
    degenerate = norms <= 1e-14 * scale
    b = np.zeros(k)
    b[~degenerate] = np.sqrt(target / norms[~degenerate])
    if degenerate.any():
        logger.warning(f"正規化因子がゼロの成分: {np.flatnonzero(degenerate) + 1}")
    return b, Embedding(raw * b, degenerate)


def matching_error(
    y: np.ndarray,
    w_tilde: SymWeights,
    normalize: bool = False,
    normalizer: Optional[float] = None,
) -> np.ndarray:
    """
    成分ごとのマッチング誤差 φ_k = ½ΣΣ w̃_ij (y_ik - y_jk)² = y^T (M̃ - W̃) y

    Args:
        y: 埋め込み（N × K）
        w_tilde: 評価用の重み
        normalize: Σ m̃_i で割るかどうか
        normalizer: 割る値を明示する場合

    Raises:
        ValueError: normalize で Σ m̃_i = 0 の場合
    """
    y = np.atleast_2d(np.asarray(y, dtype=float).T).T
    if y.shape[0] != w_tilde.n:
        raise ValueError(f"embedding has {y.shape[0]} rows but weights cover {w_tilde.n}")
    diff = y[w_tilde.rows] - y[w_tilde.cols]
    phi = w_tilde.values @ diff ** 2
    if normalize or normalizer is not None:
        total = w_tilde.total() if normalizer is None else float(normalizer)
        if not total > 0:
            raise ValueError("cannot normalize matching error: evaluation weights sum to zero")
        phi = phi / total
    return phi


def matching_correlation(y: np.ndarray, w: SymWeights) -> np.ndarray:
    """マッチング相関行列 (y^k)^T W y^l（K × K）"""
    y = np.asarray(y, dtype=float)
    c = y.T @ (w.to_sparse() @ y)
    return (c + c.T) / 2.0


def matching_error_matrix(y: np.ndarray, w: SymWeights) -> np.ndarray:
    """
    成分間のマッチング誤差 ½ΣΣ w_ij (y_ik - y_jl)²（K × K）

    対角は matching_error と一致します。
    """
    y = np.asarray(y, dtype=float)
    q = degree(w) @ y ** 2
    return 0.5 * (q[:, None] + q[None, :]) - matching_correlation(y, w)


def omega(data: MultiDomainData, w: SymWeights) -> np.ndarray:
    """Ω = ½ΣΣ w_ij (x_i + x_j)(x_i + x_j)^T（= X^T M X + X^T W X）"""
    if w.is_empty:
        return np.zeros((data.layout.P, data.layout.P))
    x = assemble(data)
    s = x[w.rows] + x[w.cols]
    c = np.where(w.rows == w.cols, w.values / 2.0, w.values)
    out = np.asarray((s.T @ sp.diags(c) @ s).todense())
    return (out + out.T) / 2.0


def eigen_signature(lambdas: Sequence[float], tol: float = 1e-8) -> Tuple[int, int, int]:
    """固有値の符号数 (正, ゼロ, 負)。|λ| <= tol をゼロとみなす"""
    lambdas = np.asarray(lambdas, dtype=float)
    pos = int(np.sum(lambdas > tol))
    neg = int(np.sum(lambdas < -tol))
    return pos, lambdas.size - pos - neg, neg


@dataclass(frozen=True)
class McaModel:
    """
    学習済みモデル

    Attributes:
        layout: ドメイン構成
        a: 変換行列（P × K）
        lambdas: 全 P 個の固有値（降順）
        b: 再スケール因子（長さ K）
        reg: 正則化
        centering: 中心化オフセット
        rescale_mode: 'weighted' / 'unweighted'
        scaled: 再スケールの規約
        degenerate: 除外成分のマスク
    """
    layout: DomainLayout
    a: np.ndarray
    lambdas: np.ndarray
    b: np.ndarray
    reg: Regularizer
    centering: Centering
    rescale_mode: str = "weighted"
    scaled: bool = True
    degenerate: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.a.shape[0] != self.layout.P:
            raise ValueError(f"A has {self.a.shape[0]} rows, expected P = {self.layout.P}")
        if self.b.shape != (self.a.shape[1],):
            raise ValueError("b must have one entry per column of A")
        if self.degenerate is None:
            object.__setattr__(self, "degenerate", np.zeros(self.k, dtype=bool))

    @property
    def k(self) -> int:
        return self.a.shape[1]

    @property
    def k_plus(self) -> int:
        """正の固有値の個数（eigen_signature と同じ閾値）"""
        return eigen_signature(self.lambdas)[0]

    def truncate(self, k: int) -> "McaModel":
        """先頭 k 成分に切り詰める（再計算不要）"""
        if not 0 <= k <= self.k:
            raise ValueError(f"cannot truncate {self.k} components to {k}")
        return replace(self, a=self.a[:, :k], b=self.b[:k], degenerate=self.degenerate[:k])

    def embed(self, data: MultiDomainData) -> np.ndarray:
        """生データ（中心化前）を埋め込む: Y = X A B"""
        if data.layout.dims != self.layout.dims:
            raise ValueError(f"data dims {data.layout.dims} do not match model {self.layout.dims}")
        blocks = [self.centering.apply(blk, d) for d, blk in enumerate(data.blocks)]
        x = assemble(MultiDomainData(data.layout, tuple(blocks)))
        return np.asarray(x @ self.a) * self.b

    def transform(self, vectors: np.ndarray, domain) -> np.ndarray:
        """
        ドメインのベクトル群を共通空間へ写す

        Args:
            vectors: (n, p_d) または長さ p_d のベクトル
            domain: ドメイン名または番号

        Returns:
            (n, K) の座標
        """
        d = self.layout.domain_index(domain)
        vectors = np.atleast_2d(np.asarray(vectors, dtype=float))
        if vectors.shape[1] != self.layout.dims[d]:
            raise ValueError(
                f"vectors have {vectors.shape[1]} columns, domain {self.layout.names[d]} "
                f"expects p = {self.layout.dims[d]}"
            )
        # 拡張ベクトルの非ゼロ部分だけが A の行スライスに掛かる
        return (self.centering.apply(vectors, d) @ self.a[self.layout.col_slice(d)]) * self.b

    def save(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        metadata = {
            "format_version": MODEL_FORMAT_VERSION,
            "dims": list(self.layout.dims),
            "counts": list(self.layout.counts),
            "names": list(self.layout.names),
            "gamma_m": self.reg.gamma_m,
            "gamma_w": self.reg.gamma_w,
            "rescale_mode": self.rescale_mode,
            "scaled": self.scaled,
            "centering": self.centering.mode,
            "k_plus": self.k_plus,
        }
        with open(path, "wb") as f:
            np.savez(
                f,
                a=self.a, lambdas=self.lambdas, b=self.b,
                degenerate=self.degenerate,
                l_m=self.reg.l_m, l_w=self.reg.l_w,
                offsets=np.concatenate(self.centering.offsets),
                metadata=np.array(json.dumps(metadata)),
            )
        logger.info(f"モデルを保存: {path}")
        return path

    @classmethod
    def load(cls, path: Path) -> "McaModel":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"model file not found: {path}")
        with np.load(path, allow_pickle=False) as f:
            metadata = json.loads(str(f["metadata"]))
            if metadata.get("format_version") != MODEL_FORMAT_VERSION:
                raise ValueError(
                    f"{path}: unsupported model format {metadata.get('format_version')}"
                )
            layout = DomainLayout(
                tuple(metadata["dims"]), tuple(metadata["counts"]), tuple(metadata["names"])
            )
            offsets = f["offsets"]
            centering = Centering(
                metadata["centering"],
                tuple(offsets[layout.col_slice(d)] for d in range(layout.D)),
            )
            reg = Regularizer(metadata["gamma_m"], metadata["gamma_w"], f["l_m"], f["l_w"])
            return cls(
                layout=layout, a=f["a"], lambdas=f["lambdas"], b=f["b"],
                reg=reg, centering=centering,
                rescale_mode=metadata["rescale_mode"], scaled=bool(metadata["scaled"]),
                degenerate=f["degenerate"].astype(bool),
            )


def prepare(
    data: MultiDomainData, w: SymWeights, center_mode: str = "weighted"
) -> Tuple[MultiDomainData, Centering]:
    """W の次数で中心化する（'none' なら何もしない）"""
    if center_mode not in PREPARE_MODES:
        raise ValueError(f"center mode must be one of {PREPARE_MODES}, got {center_mode!r}")
    if center_mode == "none":
        return data, Centering.identity(data.layout)
    return center(data, degree(w), center_mode)


def fit_fixed(
    centered: MultiDomainData,
    w: SymWeights,
    reg: Regularizer,
    centering: Centering,
    k: Optional[int] = None,
    rescale_mode: str = "weighted",
    scaled: bool = True,
) -> Tuple[McaModel, Embedding]:
    """
    中心化と正則化行列を固定して学習する

    交差検証の再学習はこちらを使います（中心化は全体の W のもの、L_M は呼び出し側が学習側の次数で作り直す）。
    """
    a, lambdas = solve(build_gram(centered, w, reg))
    k = centered.layout.P if k is None else int(k)
    if not 1 <= k <= centered.layout.P:
        raise ValueError(f"K must be in [1, P = {centered.layout.P}], got {k}")
    b, emb = rescale(a, centered, degree(w), rescale_mode, k, scaled)
    model = McaModel(
        layout=centered.layout, a=a[:, :k], lambdas=lambdas, b=b, reg=reg,
        centering=centering, rescale_mode=rescale_mode, scaled=scaled,
        degenerate=emb.degenerate,
    )
    return model, emb


def fit(
    data: MultiDomainData,
    w: SymWeights,
    gamma_m: float = 0.1,
    gamma_w: float = 0.0,
    reg: Optional[Regularizer] = None,
    k: Optional[int] = None,
    rescale_mode: str = "weighted",
    scaled: bool = True,
    center_mode: str = "weighted",
) -> Tuple[McaModel, Embedding]:
    """
    中心化 → ドメイン別正則化 → 固有値問題 → 再スケール

    Args:
        data: 生データ
        w: マッチング重み
        gamma_m: γ_M（0 は 1e-6 に置き換える）
        gamma_w: γ_W
        reg: 正則化を直接指定する場合（gamma_m, gamma_w は無視）
        k: 成分数（None なら P）
        rescale_mode: 'weighted' / 'unweighted'
        scaled: Σ m_i 倍の規約を使うか
        center_mode: 'weighted' / 'unweighted' / 'none'

    Returns:
        (モデル, 学習データの埋め込み)
    """
    centered, centering = prepare(data, w, center_mode)
    if reg is None:
        reg = domain_regularizer(centered, degree(w), gamma_m, gamma_w)
    if reg.gamma_m == 0:
        logger.warning(f"γ_M = 0 は {GAMMA_M_FLOOR:g} に置き換えて実行します")
        reg = reg.with_gammas(GAMMA_M_FLOOR)

    model, emb = fit_fixed(centered, w, reg, centering, k, rescale_mode, scaled)
    logger.info(
        f"学習完了: P={data.layout.P}, N={data.layout.N}, γ_M={reg.gamma_m:g}, "
        f"K={model.k}, K+={model.k_plus}"
    )
    return model, emb


if __name__ == "__main__":
    from rng import make_rng
    from weights import pairing_weights

    logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')

    rng = make_rng(0)
    z = rng.standard_normal((50, 2))
    data = MultiDomainData.from_blocks([
        z @ rng.standard_normal((2, 3)) + 0.3 * rng.standard_normal((50, 3)),
        z @ rng.standard_normal((2, 4)) + 0.3 * rng.standard_normal((50, 4)),
    ])
    model, emb = fit(data, pairing_weights(50), gamma_m=0.01, k=3)
    print(f"固有値: {np.round(model.lambdas, 4)}")
    print(f"符号数 (+, 0, -): {eigen_signature(model.lambdas)}")
    print(f"φ_fit: {np.round(matching_error(emb.y, pairing_weights(50), normalize=True), 4)}")
