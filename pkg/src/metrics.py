"""
評価指標の計算

Monte Carlo の抽出結果から推定量の平均・標準誤差・相対バイアスを集計し、
誤差曲線の形（内部に最小値があるか）を判定します。
"""

import numpy as np
import pandas as pd
from typing import Optional, Sequence
from dataclasses import dataclass

TRUE_ESTIMATOR = "true"


@dataclass
class CurveMinimum:
    """
    誤差曲線の最小点

    Attributes:
        index: 最小点のグリッド番号
        gamma: 最小点の γ
        value: 最小値
        interior: 最小点がグリッドの端でないか
    """
    index: int
    gamma: float
    value: float
    interior: bool

    def to_dict(self) -> dict:
        return {
            'index': self.index,
            'gamma': self.gamma,
            'value': self.value,
            'interior': self.interior,
        }


class MetricsCalculator:
    """評価指標の計算器"""

    @staticmethod
    def relative_bias(mean_estimate, mean_true):
        """
        相対バイアス (E[推定量] - E[真値]) / E[真値]

        Args:
            mean_estimate: 推定量の平均
            mean_true: 真の誤差の平均

        Returns:
            相対バイアス（真値がゼロなら NaN）
        """
        est = np.asarray(mean_estimate, dtype=float)
        true = np.asarray(mean_true, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(true != 0, (est - true) / np.where(true != 0, true, 1.0), np.nan)
        return float(out) if out.ndim == 0 else out

    @staticmethod
    def standard_error(values: Sequence[float]) -> float:
        """平均の標準誤差（NaN は除外、2 点未満なら NaN）"""
        values = np.asarray(values, dtype=float)
        values = values[~np.isnan(values)]
        if values.size < 2:
            return float("nan")
        return float(values.std(ddof=1) / np.sqrt(values.size))

    @staticmethod
    def interior_minimum(gammas: Sequence[float], values: Sequence[float]) -> CurveMinimum:
        """
        誤差曲線の最小点を求める（U 字形の確認用）

        Args:
            gammas: 昇順の γ グリッド
            values: 各 γ での誤差

        Returns:
            CurveMinimum
        """
        gammas = np.asarray(gammas, dtype=float)
        values = np.asarray(values, dtype=float)
        if gammas.size == 0 or gammas.size != values.size:
            raise ValueError("gammas and values must be non-empty and of equal length")
        if np.all(np.isnan(values)):
            raise ValueError("curve has no finite values")
        order = np.argsort(gammas)
        gammas, values = gammas[order], values[order]
        idx = int(np.nanargmin(values))
        return CurveMinimum(
            index=idx,
            gamma=float(gammas[idx]),
            value=float(values[idx]),
            interior=0 < idx < gammas.size - 1,
        )

    @staticmethod
    def summarize_draws(draws: pd.DataFrame, true_estimator: str = TRUE_ESTIMATOR) -> pd.DataFrame:
        """
        抽出ごとの行を (gamma_M, k, estimator) で集計

        Args:
            draws: 列 draw, gamma_M, k, estimator, phi を持つ表
            true_estimator: 真の誤差を表す estimator 名

        Returns:
            列 gamma_M, k, estimator, mean, se, draws, relative_bias の表
        """
        grouped = draws.groupby(["gamma_M", "k", "estimator"], sort=True)["phi"]
        summary = grouped.agg(
            mean="mean",
            se=MetricsCalculator.standard_error,
            draws="count",
        ).reset_index()

        truth = (
            summary[summary["estimator"] == true_estimator]
            .set_index(["gamma_M", "k"])["mean"]
            .rename("true_mean")
        )
        summary = summary.join(truth, on=["gamma_M", "k"])
        summary["relative_bias"] = MetricsCalculator.relative_bias(
            summary["mean"].to_numpy(), summary["true_mean"].to_numpy()
        )
        return summary.drop(columns="true_mean")

    @staticmethod
    def median_abs_relative_bias(summary: pd.DataFrame, estimator: str,
                                 k_max: Optional[int] = None) -> float:
        """推定量ごとの |相対バイアス| の中央値"""
        rows = summary[summary["estimator"] == estimator]
        if k_max is not None:
            rows = rows[rows["k"] <= k_max]
        return float(np.nanmedian(np.abs(rows["relative_bias"].to_numpy())))


if __name__ == "__main__":
    draws = pd.DataFrame({
        'draw': [0, 0, 1, 1],
        'gamma_M': [0.1] * 4,
        'k': [1] * 4,
        'estimator': ['true', 'fit', 'true', 'fit'],
        'phi': [0.50, 0.40, 0.54, 0.42],
    })
    print(MetricsCalculator.summarize_draws(draws))
    print(MetricsCalculator.interior_minimum([0.001, 0.01, 0.1, 1.0], [0.9, 0.7, 0.6, 0.8]))
