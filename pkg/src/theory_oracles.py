"""
漸近理論の数値検証

- bias_oracle: fitting error の偏り bias_k の閉形式
- bias_bracket_expectation: 同じ量を 2^L 通りの標本化パターンの全列挙で計算
- bias_monte_carlo: W を繰り返し抽出して mean(φ_fit - φ_true) を推定
- perturbation_check: 正則化による固有値・固有ベクトル変化の 1 次近似
- fit_expansion_check: φ_fit の 2 次展開

成分は全て単位規約（y^T M y = 1）で再スケールして評価します。
データは与えられたまま使い、中心化はしません。
"""

import itertools
import multiprocessing as mp
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple
import logging

import numpy as np
import pandas as pd
import scipy.linalg as la

from domains import MultiDomainData, Regularizer
from exceptions import DegenerateSpectrumError
from mca_core import GramPair, build_gram, matching_error, rescale, solve
from rng import make_rng
from schemes import get_global_registry
from weights import SymWeights, degree

logger = logging.getLogger(__name__)

GAP_TOLERANCE = 1e-9
MAX_ENUMERATION_LINKS = 16
DEFAULT_LADDER = tuple(np.geomspace(0.05, 0.005, 6))


def default_j(lambdas: np.ndarray) -> int:
    """J = min(5, K+)（最低 1）"""
    return max(1, min(5, int(np.sum(lambdas > 0))))


def check_gaps(lambdas: np.ndarray, j: int, tol: float = GAP_TOLERANCE) -> None:
    """
    先頭 j 成分と他の全成分の固有値が十分離れているか確認

    Raises:
        DegenerateSpectrumError: 縮退した組 (i, l) がある場合
    """
    scale = max(float(np.abs(lambdas).max()), 1e-300)
    for i in range(j):
        for l in range(lambdas.size):
            if l == i:
                continue
            gap = abs(lambdas[l] - lambdas[i])
            if gap < tol * scale:
                raise DegenerateSpectrumError((i, l), gap)


def _unit_embedding(data: MultiDomainData, w: SymWeights, a: np.ndarray) -> np.ndarray:
    _, emb = rescale(a, data, degree(w), "weighted", scaled=False)
    return emb.y


# ---------------------------------------------------------------------------
# fitting error の偏り
# ---------------------------------------------------------------------------

@dataclass
class BiasOracleReport:
    """
    偏りのオラクルと Monte Carlo の比較

    Attributes:
        epsilon: 標本化率 ε
        bias: 閉形式の bias_k（k = 1..J）
        lambdas: εW̄ での固有値 λ̄
        monte_carlo_bias: mean(φ_fit - φ_true)
        monte_carlo_se: その標準誤差
        draws: Monte Carlo の抽出回数
    """
    epsilon: float
    bias: np.ndarray
    lambdas: np.ndarray
    monte_carlo_bias: Optional[np.ndarray] = None
    monte_carlo_se: Optional[np.ndarray] = None
    draws: int = 0

    def to_frame(self) -> pd.DataFrame:
        j = self.bias.size
        empty = np.full(j, np.nan)
        return pd.DataFrame({
            "k": np.arange(1, j + 1),
            "epsilon": self.epsilon,
            "lambda_bar": self.lambdas[:j],
            "bias": self.bias,
            "monte_carlo_bias": empty if self.monte_carlo_bias is None else self.monte_carlo_bias,
            "monte_carlo_se": empty if self.monte_carlo_se is None else self.monte_carlo_se,
            "draws": self.draws,
        })


@dataclass(frozen=True)
class _ReferenceFit:
    ybar: np.ndarray
    lambdas: np.ndarray
    j: int


def _reference_fit(
    data: MultiDomainData,
    wbar: SymWeights,
    epsilon: float,
    reg: Optional[Regularizer],
    j: Optional[int],
    gamma_at: str,
) -> _ReferenceFit:
    if not 0.0 < epsilon <= 1.0:
        raise ValueError(f"epsilon must be in (0, 1], got {epsilon}")
    if gamma_at not in ("working", "zero"):
        raise ValueError(f"gamma_at must be 'working' or 'zero', got {gamma_at!r}")
    if gamma_at == "zero" or reg is None:
        reg = None
    w_eps = wbar.scaled(epsilon)
    a, lambdas = solve(build_gram(data, w_eps, reg))
    j = default_j(lambdas) if j is None else int(j)
    if not 1 <= j <= lambdas.size:
        raise ValueError(f"J must be in [1, {lambdas.size}], got {j}")
    check_gaps(lambdas, j)
    return _ReferenceFit(_unit_embedding(data, w_eps, a), lambdas, j)


def lemma_coefficients(
    ybar: np.ndarray, wbar: SymWeights, k: int
) -> Tuple[np.ndarray, np.ndarray]:
    """
    保存要素 (l, m) ごとの係数 𝒢[Ȳ]^{jk}_{lm}, ℋ[Ȳ]^{jk}_{lm}

    Args:
        ybar: 参照埋め込み Ȳ（N × P）
        wbar: 真の重み（要素の並びを決める）
        k: 成分（0 始まり）

    Returns:
        (𝒢, ℋ) いずれも (要素数 × P)、列 j が 𝒢^{jk}
    """
    yl = ybar[wbar.rows]
    ym = ybar[wbar.cols]
    ylk = yl[:, k:k + 1]
    ymk = ym[:, k:k + 1]
    diagonal = (wbar.rows == wbar.cols)[:, None]
    g = np.where(diagonal, yl * ylk, yl * ylk + ym * ymk)
    h = np.where(diagonal, yl * ylk, yl * ymk + ym * ylk)
    return g, h


def _bracket(g: np.ndarray, h: np.ndarray, lambdas: np.ndarray, k: int) -> np.ndarray:
    """
    -(g_kk - h_kk) g_kk + Σ_{j≠k} 2 (λ_j - λ_k)^{-1} (g_jk - h_jk)(g_jk λ_k - h_jk)

    g, h の最後の軸が j。先頭の軸はそのまま残す。
    """
    others = np.arange(lambdas.size) != k
    inv_gap = 1.0 / (lambdas[others] - lambdas[k])
    go, ho = g[..., others], h[..., others]
    cross = np.sum(2.0 * inv_gap * (go - ho) * (go * lambdas[k] - ho), axis=-1)
    return -(g[..., k] - h[..., k]) * g[..., k] + cross


def bias_oracle(
    data: MultiDomainData,
    wbar: SymWeights,
    epsilon: float,
    reg: Optional[Regularizer] = None,
    j: Optional[int] = None,
    gamma_at: str = "working",
) -> BiasOracleReport:
    """
    bias_k = ε(1-ε) Σ_{l>=m} w̄_lm² [ -(𝒢^{kk} - ℋ^{kk})𝒢^{kk}
             + Σ_{j≠k} 2 (λ̄_j - λ̄_k)^{-1}(𝒢^{jk} - ℋ^{jk})(𝒢^{jk} λ̄_k - ℋ^{jk}) ]

    Ȳ, λ̄ は εW̄ での解。gamma_at='working' なら reg を含めて解き、
    'zero' なら正則化なしで解きます。

    Raises:
        DegenerateSpectrumError: 先頭 J 成分の固有値が縮退している場合
    """
    ref = _reference_fit(data, wbar, epsilon, reg, j, gamma_at)
    factor = epsilon * (1.0 - epsilon) * wbar.values ** 2
    bias = np.empty(ref.j)
    for k in range(ref.j):
        g, h = lemma_coefficients(ref.ybar, wbar, k)
        bias[k] = factor @ _bracket(g, h, ref.lambdas, k)
    return BiasOracleReport(epsilon, bias, ref.lambdas)


def bias_bracket_expectation(
    data: MultiDomainData,
    wbar: SymWeights,
    epsilon: float,
    reg: Optional[Regularizer] = None,
    j: Optional[int] = None,
    gamma_at: str = "working",
) -> np.ndarray:
    """
    E_z[ -(ĝ_kk - ĥ_kk) ĝ_kk + Σ_{j≠k} 2 (λ̄_j - λ̄_k)^{-1}(ĝ_jk - ĥ_jk)(ĝ_jk λ̄_k - ĥ_jk) ]

    ĝ = Σ_e 𝒢_e Δŵ_e、Δŵ_e = (z_e - ε) w̄_e として、
    全 2^L 通りの z を確率 ε^{|z|}(1-ε)^{L-|z|} で重み付けして正確に平均します。

    Raises:
        ValueError: 要素数が MAX_ENUMERATION_LINKS を超える場合
    """
    if len(wbar) > MAX_ENUMERATION_LINKS:
        raise ValueError(
            f"exact enumeration supports at most {MAX_ENUMERATION_LINKS} links, got {len(wbar)}"
        )
    ref = _reference_fit(data, wbar, epsilon, reg, j, gamma_at)

    patterns = np.array(list(itertools.product((0.0, 1.0), repeat=len(wbar))))
    n_on = patterns.sum(axis=1)
    probs = epsilon ** n_on * (1.0 - epsilon) ** (len(wbar) - n_on)
    delta_w = (patterns - epsilon) * wbar.values

    out = np.empty(ref.j)
    for k in range(ref.j):
        g, h = lemma_coefficients(ref.ybar, wbar, k)
        out[k] = probs @ _bracket(delta_w @ g, delta_w @ h, ref.lambdas, k)
    return out


def _bias_draw(task: Dict) -> np.ndarray:
    """1 回の W 抽出での φ_fit - φ_true（並列実行用）"""
    scheme = get_global_registry().create(task["scheme"])
    w = scheme.sample(task["wbar"], task["prob"], make_rng(task["seed"], task["index"]))
    a, _ = solve(build_gram(task["data"], w, task["reg"]))
    j = task["j"]
    y = _unit_embedding(task["data"], w, a[:, :j])
    truth = task["wbar"].scaled(scheme.truth_epsilon(task["prob"]))
    return matching_error(y, w) - matching_error(y, truth)


def bias_monte_carlo(
    data: MultiDomainData,
    wbar: SymWeights,
    epsilon: float,
    reg: Optional[Regularizer],
    j: int,
    draws: int = 500,
    seed: int = 0,
    processes: int = 1,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    W ~ リンク標本化(εW̄) を draws 回引き、mean(φ_fit - φ_true) と標準誤差を返す

    reg は固定（抽出ごとに作り直さない）。
    """
    if draws < 2:
        raise ValueError(f"draws must be >= 2, got {draws}")
    tasks = [
        {"scheme": "link", "prob": epsilon, "seed": seed, "index": i,
         "wbar": wbar, "data": data, "reg": reg, "j": j}
        for i in range(draws)
    ]
    if processes > 1:
        with mp.Pool(processes) as pool:
            diffs = pool.map(_bias_draw, tasks)
    else:
        diffs = [_bias_draw(task) for task in tasks]
    diffs = np.vstack(diffs)
    return diffs.mean(axis=0), diffs.std(axis=0, ddof=1) / np.sqrt(draws)


# ---------------------------------------------------------------------------
# 正則化による摂動
# ---------------------------------------------------------------------------

@dataclass
class PerturbationReport:
    """
    摂動の 1 次近似と厳密解の比較

    Attributes:
        ladder: γ の列
        lambda_hat: 基準点（γ = 0）の固有値
        delta_lambda_pred / delta_lambda_exact: (γ 数 × J)
        c_pred / c_exact: (γ 数 × P × J)
        lambda_residual / c_residual: γ ごとの最大残差
        lambda_slope / c_slope: log-log 傾き
    """
    ladder: np.ndarray
    lambda_hat: np.ndarray
    delta_lambda_pred: np.ndarray
    delta_lambda_exact: np.ndarray
    c_pred: np.ndarray
    c_exact: np.ndarray
    lambda_residual: np.ndarray
    c_residual: np.ndarray
    lambda_slope: float
    c_slope: float

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "gamma": self.ladder,
            "lambda_residual": self.lambda_residual,
            "c_residual": self.c_residual,
            "lambda_slope": self.lambda_slope,
            "c_slope": self.c_slope,
        })


def log_slope(ladder: Sequence[float], residuals: Sequence[float]) -> float:
    """γ > 0 かつ残差 > 0 の点での log-log 回帰の傾き"""
    x = np.asarray(ladder, dtype=float)
    y = np.asarray(residuals, dtype=float)
    keep = (x > 0) & (y > 0)
    if keep.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(x[keep]), np.log(y[keep]), 1)[0])


def first_order(
    g: np.ndarray, h: np.ndarray, lambda_hat: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """
    1 次の予測

    Δλ_i = -(g_ii λ̂_i - h_ii)、c_ii = -g_ii / 2、
    c_ij = (λ̂_i - λ̂_j)^{-1}(g_ij λ̂_j - h_ij)

    Returns:
        (Δλ: 長さ P, C: P × P)
    """
    delta_lambda = -(np.diag(g) * lambda_hat - np.diag(h))
    gaps = lambda_hat[:, None] - lambda_hat[None, :]
    np.fill_diagonal(gaps, 1.0)
    c = (g * lambda_hat[None, :] - h) / gaps
    np.fill_diagonal(c, -0.5 * np.diag(g))
    return delta_lambda, c


def _base_solution(
    data: MultiDomainData, w: SymWeights, base: Optional[Regularizer]
) -> Tuple[GramPair, np.ndarray, np.ndarray]:
    gp0 = build_gram(data, w, base)
    a_hat, lambda_hat = solve(gp0)
    check_gaps(lambda_hat, lambda_hat.size)
    return gp0, a_hat, lambda_hat


def perturbation_check(
    data: MultiDomainData,
    w: SymWeights,
    direction_g: np.ndarray,
    direction_h: np.ndarray,
    ladder: Sequence[float] = DEFAULT_LADDER,
    j: Optional[int] = None,
    base: Optional[Regularizer] = None,
) -> PerturbationReport:
    """
    ΔG = γ ΔG₀、ΔH = γ ΔH₀ の各 γ で 1 次予測と厳密な再計算を比べる

    C = Â^{-1} A - I は A の列符号を diag(Â^{-1}A) > 0 に揃えてから求めます。

    Raises:
        DegenerateSpectrumError: γ = 0 で固有値が縮退している場合
    """
    gp0, a_hat, lambda_hat = _base_solution(data, w, base)
    j = default_j(lambda_hat) if j is None else int(j)
    ladder = np.asarray(ladder, dtype=float)
    direction_g = np.asarray(direction_g, dtype=float)
    direction_h = np.asarray(direction_h, dtype=float)

    dl_pred, dl_exact, c_pred, c_exact = [], [], [], []
    for gamma in ladder:
        g = a_hat.T @ (gamma * direction_g) @ a_hat
        h = a_hat.T @ (gamma * direction_h) @ a_hat
        pred_l, pred_c = first_order(g, h, lambda_hat)

        a, lambdas = solve(GramPair(gp0.g + gamma * direction_g, gp0.h + gamma * direction_h))
        d = la.solve(a_hat, a)
        signs = np.where(np.diag(d) < 0, -1.0, 1.0)
        exact_c = d * signs - np.eye(lambda_hat.size)

        dl_pred.append(pred_l[:j])
        dl_exact.append(lambdas[:j] - lambda_hat[:j])
        c_pred.append(pred_c[:, :j])
        c_exact.append(exact_c[:, :j])

    dl_pred, dl_exact = np.array(dl_pred), np.array(dl_exact)
    c_pred, c_exact = np.array(c_pred), np.array(c_exact)
    lambda_residual = np.abs(dl_exact - dl_pred).max(axis=1)
    c_residual = np.abs(c_exact - c_pred).reshape(len(ladder), -1).max(axis=1)

    report = PerturbationReport(
        ladder=ladder, lambda_hat=lambda_hat,
        delta_lambda_pred=dl_pred, delta_lambda_exact=dl_exact,
        c_pred=c_pred, c_exact=c_exact,
        lambda_residual=lambda_residual, c_residual=c_residual,
        lambda_slope=log_slope(ladder, lambda_residual),
        c_slope=log_slope(ladder, c_residual),
    )
    logger.info(f"摂動チェック: Δλ 傾き={report.lambda_slope:.2f}, c 傾き={report.c_slope:.2f}")
    return report


@dataclass
class FitExpansionReport:
    """φ_fit の 2 次展開と厳密値の比較"""
    k: int
    ladder: np.ndarray
    exact: np.ndarray
    predicted: np.ndarray
    residual: np.ndarray
    slope: float

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "k": self.k, "gamma": self.ladder, "phi_fit": self.exact,
            "phi_fit_predicted": self.predicted, "residual": self.residual,
            "slope": self.slope,
        })


def fit_expansion_check(
    data: MultiDomainData,
    w: SymWeights,
    direction_g: np.ndarray,
    direction_h: np.ndarray,
    ladder: Sequence[float] = DEFAULT_LADDER,
    k: int = 1,
    base: Optional[Regularizer] = None,
) -> FitExpansionReport:
    """
    φ_k^fit ≈ 1 - λ̂_k - Σ_{i≠k} (λ̂_i - λ̂_k)^{-1}(g_ik λ̂_k - h_ik)²

    残差は γ³ で消えるはず（log-log 傾き約 3）。

    Args:
        k: 成分（1 始まり）
    """
    gp0, a_hat, lambda_hat = _base_solution(data, w, base)
    if not 1 <= k <= lambda_hat.size:
        raise ValueError(f"k must be in [1, {lambda_hat.size}], got {k}")
    idx = k - 1
    others = np.arange(lambda_hat.size) != idx
    ladder = np.asarray(ladder, dtype=float)
    direction_g = np.asarray(direction_g, dtype=float)
    direction_h = np.asarray(direction_h, dtype=float)

    exact, predicted = [], []
    for gamma in ladder:
        g = a_hat.T @ (gamma * direction_g) @ a_hat
        h = a_hat.T @ (gamma * direction_h) @ a_hat
        quad = (g[others, idx] * lambda_hat[idx] - h[others, idx]) ** 2
        predicted.append(
            1.0 - lambda_hat[idx] - np.sum(quad / (lambda_hat[others] - lambda_hat[idx]))
        )
        a, _ = solve(GramPair(gp0.g + gamma * direction_g, gp0.h + gamma * direction_h))
        y = _unit_embedding(data, w, a[:, idx:idx + 1])
        exact.append(float(matching_error(y, w)[0]))

    exact, predicted = np.array(exact), np.array(predicted)
    residual = np.abs(exact - predicted)
    return FitExpansionReport(k, ladder, exact, predicted, residual, log_slope(ladder, residual))


def random_instance(
    seed: int, n: int = 40, p: int = 5, density: float = 0.3
) -> Tuple[MultiDomainData, SymWeights]:
    """
    摂動チェック用の小さな乱数インスタンス（1 ドメイン、X ~ N(0, 1/N)）

    W は正の重みを持つ疎な無向グラフ（自己ループなし）。
    """
    rng = make_rng(seed)
    x = rng.standard_normal((n, p)) / np.sqrt(n)
    rows, cols = np.tril_indices(n, -1)
    keep = rng.random(rows.size) < density
    w = SymWeights(n, rows[keep], cols[keep], rng.uniform(0.5, 1.5, int(keep.sum())))
    return MultiDomainData.from_blocks([x]), w


if __name__ == "__main__":
    logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')

    data, w = random_instance(seed=3)
    p = data.layout.P
    report = perturbation_check(data, w, np.eye(p), 0.5 * np.eye(p))
    print(report.to_frame())
    print(fit_expansion_check(data, w, np.eye(p), 0.5 * np.eye(p)).to_frame())
