"""
マッチング誤差の 3 つの推定量

- fitting error: 学習に使った W 自身で評価（楽観的に偏る）
- true error: εW̄（シミュレーション）または独立なテスト重みで評価
- cv error: W を W* と W - W* に再標本化し、(1-κ)^{-1}(W - W*) で再学習、
  κ^{-1}W* で評価した値のレプリケート平均

正則化パラメータのグリッドを走査して ErrorReport にまとめます。
"""

import multiprocessing as mp
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union
import logging

import numpy as np
import pandas as pd

from domains import Centering, MultiDomainData, Regularizer, domain_regularizer
from exceptions import AllReplicatesSkippedError, NumericalError
from mca_core import GAMMA_M_FLOOR, Embedding, fit_fixed, matching_error, prepare
from rng import make_rng
from schemes import get_global_registry
from weights import SymWeights, degree

logger = logging.getLogger(__name__)

REPORT_COLUMNS = [
    "gamma_M", "gamma_W", "k", "lambda", "phi_fit", "phi_cv",
    "phi_cv_se", "phi_true", "skipped_replicates",
]


@dataclass(frozen=True)
class CvConfig:
    """
    交差検証の設定

    Attributes:
        scheme: 'link' または 'node'
        prob: κ（link）または ν（node）
        replicates: 再標本化の回数
        seed: マスターシード（レプリケート i はストリーム i）
        processes: 並列プロセス数
        extrapolate: 確率 2×prob でも再標本化し、κ/(1-κ) → 0 へ線形外挿する
    """
    scheme: str = "link"
    prob: float = 0.1
    replicates: int = 30
    seed: int = 0
    processes: int = 1
    extrapolate: bool = False

    def __post_init__(self):
        if self.scheme not in get_global_registry().list_schemes():
            raise ValueError(f"unknown cv scheme {self.scheme!r}")
        if not 0.0 < self.prob < 1.0:
            raise ValueError(f"cv prob must be in (0, 1), got {self.prob}")
        if self.extrapolate and not self.prob < 0.5:
            raise ValueError(f"extrapolated cv needs prob < 0.5, got {self.prob}")
        if self.replicates < 1:
            raise ValueError(f"replicates must be >= 1, got {self.replicates}")
        if self.processes < 1:
            raise ValueError(f"processes must be >= 1, got {self.processes}")

    @classmethod
    def node_default(cls, seed: int = 0) -> "CvConfig":
        return cls(scheme="node", prob=0.05, replicates=30, seed=seed)

    def levels(self) -> List[float]:
        """再標本化に使う確率（外挿なしなら 1 つ）"""
        return [self.prob, 2.0 * self.prob] if self.extrapolate else [self.prob]


@dataclass(frozen=True)
class CvResult:
    """cv error のレプリケート平均と標準誤差"""
    phi: np.ndarray
    se: np.ndarray
    used: int
    skipped: int


@dataclass
class ErrorRow:
    gamma_M: float
    gamma_W: float
    k: int
    lam: float
    phi_fit: float
    phi_cv: float
    phi_cv_se: float
    phi_true: Optional[float]
    skipped_replicates: int

    def to_dict(self) -> Dict:
        row = asdict(self)
        row["lambda"] = row.pop("lam")
        return {c: row[c] for c in REPORT_COLUMNS}


@dataclass
class ErrorReport:
    """
    グリッド全体の誤差レポート

    Attributes:
        rows: (γ, 成分) ごとの行
        failures: 失敗したグリッド点とメッセージ
        replicates: cv のレプリケート数
        normalized: Σ m̃ で割った値かどうか
    """
    rows: List[ErrorRow] = field(default_factory=list)
    failures: Dict[Tuple[float, float], str] = field(default_factory=dict)
    replicates: int = 0
    normalized: bool = True

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([r.to_dict() for r in self.rows], columns=REPORT_COLUMNS)

    def to_csv(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False, float_format="%.12g")
        return path

    def totals(self) -> pd.DataFrame:
        """グリッド点ごとの Σ_k φ_k（推定量ごと）"""
        frame = self.to_frame()
        return (
            frame.groupby(["gamma_M", "gamma_W"], sort=False)[["phi_fit", "phi_cv", "phi_true"]]
            .sum(min_count=1)
            .reset_index()
        )


def _mask_degenerate(phi: np.ndarray, emb: Embedding) -> np.ndarray:
    phi = np.asarray(phi, dtype=float).copy()
    phi[emb.degenerate] = np.nan
    return phi


def fit_error(emb: Embedding, w: SymWeights, normalize: bool = True) -> np.ndarray:
    """φ_k^fit = φ_k(W, W)"""
    return _mask_degenerate(matching_error(emb.y, w, normalize), emb)


def true_error(
    emb: Embedding,
    wbar: SymWeights,
    epsilon: Optional[float] = None,
    normalize: bool = True,
) -> np.ndarray:
    """
    φ_k^true

    Args:
        emb: 評価する埋め込み
        wbar: 真の重み W̄（epsilon=None ならテスト重みとしてそのまま使う）
        epsilon: シミュレーションの標本化率 ε
        normalize: 評価重みの Σ m̃ で割るか

    Raises:
        ValueError: ε <= 0
    """
    if epsilon is not None:
        if not epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {epsilon}")
        wbar = wbar.scaled(epsilon)
    return _mask_degenerate(matching_error(emb.y, wbar, normalize), emb)


def _cv_replicate(task: Dict) -> Optional[np.ndarray]:
    """1 回の再標本化（並列実行用）。空の分割なら None"""
    scheme = get_global_registry().create(task["scheme"])
    split = scheme.resample(task["w"], task["prob"], make_rng(task["seed"], task["index"]))
    if split.star.is_empty or split.rest.is_empty:
        return None

    kappa = split.kappa
    train = split.rest.scaled(1.0 / (1.0 - kappa))
    test = split.star.scaled(1.0 / kappa)
    # L_M は学習側の次数で作り直す
    reg = task["reg"].for_degrees(task["centered"], degree(train))
    _, emb = fit_fixed(
        task["centered"], train, reg, task["centering"],
        task["k"], task["rescale_mode"], task["scaled"],
    )
    return _mask_degenerate(matching_error(emb.y, test, task["normalize"]), emb)


def _replicate_mean(phis: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    counts = np.sum(~np.isnan(phis), axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.nanmean(phis, axis=0) if np.any(counts) else np.full(phis.shape[1], np.nan)
        se = (
            np.nanstd(phis, axis=0, ddof=1) / np.sqrt(counts)
            if phis.shape[0] > 1 else np.full(phis.shape[1], np.nan)
        )
    return mean, se


def extrapolation_weight(kappa_low: float, kappa_high: float) -> float:
    """
    2 水準の cv から κ/(1-κ) = 0 への線形外挿の係数 r

    φ = φ_low + r (φ_low - φ_high)。κ=0.1 と 0.2 なら r = 0.8 です。
    """
    if not 0.0 < kappa_low < kappa_high < 1.0:
        raise ValueError(f"need 0 < kappa_low < kappa_high < 1, got {kappa_low}, {kappa_high}")
    a_low = kappa_low / (1.0 - kappa_low)
    a_high = kappa_high / (1.0 - kappa_high)
    return a_low / (a_high - a_low)


def cv_error(
    centered: MultiDomainData,
    w: SymWeights,
    reg: Regularizer,
    centering: Centering,
    cv: CvConfig,
    k: Optional[int] = None,
    rescale_mode: str = "weighted",
    scaled: bool = True,
    normalize: bool = True,
) -> CvResult:
    """
    重み再標本化による交差検証誤差

    中心化は全体の W で決めたものを流用し、L_M は学習側の重みで作り直します。
    レプリケート i の乱数は (cv.seed, i) のストリームなので、
    並列実行でも結果は逐次実行と一致します。

    cv.extrapolate では確率 2×prob の水準をストリーム replicates + i で追加し、
    学習側の重みが減ることによる O(κ) の上振れを κ/(1-κ) → 0 への外挿で取り除きます。

    Raises:
        ValueError: W が空の場合
        AllReplicatesSkippedError: ある水準の全レプリケートで分割が空の場合
    """
    if w.is_empty:
        raise ValueError("cv error needs a non-empty weight matrix")

    levels = cv.levels()
    tasks = [
        {
            "scheme": cv.scheme, "prob": prob, "seed": cv.seed,
            "index": level * cv.replicates + i,
            "w": w, "centered": centered, "reg": reg, "centering": centering,
            "k": k, "rescale_mode": rescale_mode, "scaled": scaled, "normalize": normalize,
        }
        for level, prob in enumerate(levels)
        for i in range(cv.replicates)
    ]

    if cv.processes > 1:
        with mp.Pool(cv.processes) as pool:
            results = pool.map(_cv_replicate, tasks)
    else:
        results = [_cv_replicate(task) for task in tasks]

    means, ses = [], []
    used_total, skipped_total = 0, 0
    for level in range(len(levels)):
        chunk = results[level * cv.replicates:(level + 1) * cv.replicates]
        used = [r for r in chunk if r is not None]
        skipped = len(chunk) - len(used)
        if not used:
            raise AllReplicatesSkippedError(cv.replicates)
        if skipped:
            logger.warning(
                f"cv: {skipped}/{cv.replicates} レプリケートを空の分割でスキップ"
                f"（prob={levels[level]:g}）"
            )
        mean, se = _replicate_mean(np.vstack(used))
        means.append(mean)
        ses.append(se)
        used_total += len(used)
        skipped_total += skipped

    if not cv.extrapolate:
        return CvResult(means[0], ses[0], used_total, skipped_total)

    scheme = get_global_registry().create(cv.scheme)
    r = extrapolation_weight(*(scheme.effective_kappa(p) for p in levels))
    phi = (1.0 + r) * means[0] - r * means[1]
    se = np.sqrt(((1.0 + r) * ses[0]) ** 2 + (r * ses[1]) ** 2)
    return CvResult(phi, se, used_total, skipped_total)


GridPoint = Union[float, Tuple[float, float]]


def _grid_pairs(grid: Sequence[GridPoint], gamma_w: float) -> List[Tuple[float, float]]:
    pairs = []
    for point in grid:
        if isinstance(point, (tuple, list)):
            pairs.append((float(point[0]), float(point[1])))
        else:
            pairs.append((float(point), float(gamma_w)))
    if not pairs:
        raise ValueError("regularization grid must not be empty")
    return pairs


def error_curve(
    data: MultiDomainData,
    w: SymWeights,
    grid: Sequence[GridPoint],
    cv: CvConfig,
    gamma_w: float = 0.0,
    k: Optional[int] = None,
    rescale_mode: str = "weighted",
    scaled: bool = True,
    normalize: bool = True,
    center_mode: str = "weighted",
    wbar: Optional[SymWeights] = None,
    epsilon: Optional[float] = None,
    test: Optional[Tuple[MultiDomainData, SymWeights]] = None,
) -> ErrorReport:
    """
    正則化グリッドを走査して fit / cv /（あれば）true の誤差を並べる

    Args:
        data: 生データ
        w: 観測重み
        grid: γ_M の列、または (γ_M, γ_W) の組の列
        cv: 交差検証の設定
        gamma_w: γ_M だけのグリッド点に使う γ_W
        k: 成分数（None なら P）
        rescale_mode, scaled, normalize, center_mode: mca_core.fit と同じ
        wbar, epsilon: シミュレーションの真の重みと ε
        test: (テストデータ, テスト重み)。独立なテスト集合での true error

    Returns:
        ErrorReport（数値的に失敗したグリッド点は failures に記録）
    """
    pairs = _grid_pairs(grid, gamma_w)
    centered, centering = prepare(data, w, center_mode)
    base_reg = domain_regularizer(centered, degree(w))
    k = data.layout.P if k is None else int(k)

    report = ErrorReport(replicates=cv.replicates, normalized=normalize)
    for gamma_m, gw in pairs:
        effective = gamma_m
        if gamma_m == 0:
            logger.warning(f"γ_M = 0 は {GAMMA_M_FLOOR:g} に置き換えて実行します")
            effective = GAMMA_M_FLOOR
        reg = base_reg.with_gammas(effective, gw)
        try:
            model, emb = fit_fixed(centered, w, reg, centering, k, rescale_mode, scaled)
            phi_fit = fit_error(emb, w, normalize)
            cv_result = cv_error(
                centered, w, reg, centering, cv, k, rescale_mode, scaled, normalize
            )
            phi_true = None
            if wbar is not None:
                phi_true = true_error(emb, wbar, epsilon, normalize)
            elif test is not None:
                test_data, test_w = test
                y_test = model.embed(test_data)
                phi_true = true_error(Embedding(y_test, model.degenerate), test_w, None, normalize)
        except NumericalError as e:
            logger.error(f"γ_M={gamma_m:g}, γ_W={gw:g} で失敗: {e}")
            report.failures[(gamma_m, gw)] = str(e)
            continue

        for j in range(k):
            report.rows.append(ErrorRow(
                gamma_M=gamma_m, gamma_W=gw, k=j + 1,
                lam=float(model.lambdas[j]),
                phi_fit=float(phi_fit[j]),
                phi_cv=float(cv_result.phi[j]),
                phi_cv_se=float(cv_result.se[j]),
                phi_true=None if phi_true is None else float(phi_true[j]),
                skipped_replicates=cv_result.skipped,
            ))
        logger.info(
            f"γ_M={gamma_m:g} 完了: K+={model.k_plus}, "
            f"φ1 fit={phi_fit[0]:.4f} cv={cv_result.phi[0]:.4f}"
        )

    return report


if __name__ == "__main__":
    from simgen import SimConfig, generate

    logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')

    dataset = generate(SimConfig(p=(4, 6), n=(50, 100), seed=1))
    w = get_global_registry().create("link").sample(dataset.wbar, 0.2, make_rng(1))
    report = error_curve(
        dataset.data, w, [0.01, 0.1, 1.0], CvConfig(replicates=10, seed=1), k=3,
        wbar=dataset.wbar, epsilon=0.2,
    )
    print(report.to_frame())
