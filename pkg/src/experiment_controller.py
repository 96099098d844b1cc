"""
実験制御システム

真の重み W̄ から観測 W を繰り返し抽出し、各抽出で fitting / true / cv 誤差を計算して
推定量の偏りを調べる Monte Carlo 実験を制御します。抽出は並列実行できます。
"""

import multiprocessing as mp
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple
import logging
from datetime import datetime
import sys

import numpy as np
import pandas as pd

sys.path.append(str(Path(__file__).parent))

from data_logger import DataLogger
from domains import domain_regularizer
from errors_cv import CvConfig, cv_error, fit_error, true_error
from exceptions import NumericalError
from mca_core import GAMMA_M_FLOOR, fit_fixed, prepare
from metrics import MetricsCalculator
from rng import make_rng
from schemes import get_global_registry
from simgen import SimConfig, SimDataset, generate
from weights import degree

logger = logging.getLogger(__name__)

DRAW_COLUMNS = ["draw", "gamma_M", "k", "lambda", "estimator", "phi"]
DEFAULT_EPSILONS = (0.02, 0.04, 0.08)


@dataclass(frozen=True)
class CvSpec:
    """study 内の 1 つの cv 推定量（scheme, 確率, 回数, 外挿の有無）"""
    scheme: str = "link"
    prob: float = 0.1
    replicates: int = 30
    extrapolate: bool = False

    @property
    def name(self) -> str:
        return f"cv_{self.scheme}_x" if self.extrapolate else f"cv_{self.scheme}"


@dataclass(frozen=True)
class StudyConfig:
    """
    偏りの Monte Carlo 実験の設定

    Attributes:
        sampling_scheme: W̄ から W を作るスキーム
        sampling_prob: ε（link）または ξ（node）
        draws: W の抽出回数
        gammas: γ_M のグリッド
        cv: 比較する cv 推定量
        k_max: 評価する成分数
        rescale_mode: 'weighted' / 'unweighted'
        scaled: Σ m_i 倍のスケール規約を使うか（既定は単位規約 y^T M y = 1）
        normalize: 誤差を Σ m̃ で割るか
        center_mode: 中心化（合成データは標準化済みなので既定は 'none'）
        seed: マスターシード（抽出 i はストリーム i）
    """
    sampling_scheme: str = "link"
    sampling_prob: float = 0.04
    draws: int = 160
    gammas: Tuple[float, ...] = (0.001, 0.01, 0.1, 1.0)
    cv: Tuple[CvSpec, ...] = (CvSpec(), CvSpec(extrapolate=True))
    k_max: int = 10
    rescale_mode: str = "weighted"
    scaled: bool = False
    normalize: bool = False
    center_mode: str = "none"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "gammas", tuple(float(g) for g in self.gammas))
        object.__setattr__(self, "cv", tuple(
            c if isinstance(c, CvSpec) else CvSpec(**c) for c in self.cv
        ))
        if self.sampling_scheme not in get_global_registry().list_schemes():
            raise ValueError(f"unknown sampling scheme {self.sampling_scheme!r}")
        if not 0.0 < self.sampling_prob <= 1.0:
            raise ValueError(f"sampling_prob must be in (0, 1], got {self.sampling_prob}")
        if self.draws < 1:
            raise ValueError(f"draws must be >= 1, got {self.draws}")
        if not self.gammas:
            raise ValueError("gammas must not be empty")
        if self.k_max < 1:
            raise ValueError(f"k_max must be >= 1, got {self.k_max}")
        if len({c.name for c in self.cv}) != len(self.cv):
            raise ValueError("cv estimators must have distinct names")
        for c in self.cv:
            CvConfig(c.scheme, c.prob, c.replicates, extrapolate=c.extrapolate)

    def to_dict(self) -> Dict:
        d = asdict(self)
        d["gammas"] = list(self.gammas)
        d["cv"] = [asdict(c) for c in self.cv]
        return d

    @classmethod
    def from_dict(cls, d: Dict) -> "StudyConfig":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        if "gammas" in known:
            known["gammas"] = tuple(known["gammas"])
        if "cv" in known:
            known["cv"] = tuple(CvSpec(**c) for c in known["cv"])
        return cls(**known)


@dataclass
class StudyResult:
    """
    実験結果

    Attributes:
        draws: 抽出ごとの行（DRAW_COLUMNS）
        summary: (gamma_M, k, estimator) ごとの平均・標準誤差・相対バイアス
        failed_draws: 数値的に失敗した抽出の番号
    """
    draws: pd.DataFrame
    summary: pd.DataFrame
    failed_draws: List[int] = field(default_factory=list)


def _cv_seed(seed: int, draw: int, index: int) -> int:
    """抽出ごと・cv 推定量ごとのマスターシード"""
    return int(np.random.SeedSequence([seed, draw, index + 1]).generate_state(1)[0])


class BiasStudyController:
    """
    実験制御器

    W の抽出ごとに学習と 3 種類の誤差計算を行い、結果を集計します。
    """

    def __init__(self, output_dir: Optional[Path] = None, num_processes: int = 1):
        """
        Args:
            output_dir: 出力ディレクトリ（None なら保存しない）
            num_processes: 並列プロセス数
        """
        self.output_dir = None if output_dir is None else Path(output_dir)
        self.num_processes = num_processes

    def run(self, dataset: SimDataset, config: StudyConfig) -> StudyResult:
        """
        実験を実行

        Args:
            dataset: 合成データと W̄
            config: 実験設定

        Returns:
            StudyResult
        """
        study_id = f"bias_study_{datetime.now().strftime('%Y%m%d_%H%M%S')}"
        logger.info(f"実験開始: {study_id}")
        logger.info(
            f"標本化: {config.sampling_scheme} p={config.sampling_prob}, "
            f"抽出数: {config.draws}, γ_M: {list(config.gammas)}, "
            f"cv: {[c.name for c in config.cv]}"
        )

        tasks = [
            {"draw": i, "dataset": dataset, "config": config}
            for i in range(config.draws)
        ]

        if self.num_processes > 1:
            logger.info(f"並列実行開始: {self.num_processes}プロセス")
            with mp.Pool(self.num_processes) as pool:
                results = pool.map(self._run_single_draw, tasks)
        else:
            logger.info("シーケンシャル実行開始")
            results = [self._run_single_draw(task) for task in tasks]

        failed = [task["draw"] for task, rows in zip(tasks, results) if rows is None]
        rows = [row for r in results if r is not None for row in r]
        if not rows:
            raise NumericalError(f"all {config.draws} draws failed")

        draws = pd.DataFrame(rows, columns=DRAW_COLUMNS)
        summary = MetricsCalculator.summarize_draws(draws.drop(columns="lambda"))
        result = StudyResult(draws, summary, failed)

        if self.output_dir is not None:
            data_logger = DataLogger(self.output_dir)
            data_logger.write_frame(draws, "study_draws.csv")
            data_logger.write_frame(summary, "study_summary.csv")
            data_logger.log_run(
                "study",
                {"study_id": study_id, "study": config.to_dict(),
                 "simulation": dataset.config.to_dict()},
                {"failed_draws": failed, "rows": len(draws)},
            )

        logger.info(f"実験完了: {study_id}（失敗 {len(failed)} 件）")
        return result

    def _run_single_draw(self, task: Dict) -> Optional[List[Tuple]]:
        """
        単一の抽出を実行（並列実行用）

        Args:
            task: タスク情報

        Returns:
            DRAW_COLUMNS の行。数値的に失敗した場合は None
        """
        draw = task["draw"]
        config: StudyConfig = task["config"]
        dataset: SimDataset = task["dataset"]

        try:
            scheme = get_global_registry().create(config.sampling_scheme)
            w = scheme.sample(dataset.wbar, config.sampling_prob, make_rng(config.seed, draw))
            truth = dataset.wbar.scaled(scheme.truth_epsilon(config.sampling_prob))
            k = min(config.k_max, dataset.data.layout.P)

            centered, centering = prepare(dataset.data, w, config.center_mode)
            base_reg = domain_regularizer(centered, degree(w))

            rows = []
            for gamma in config.gammas:
                reg = base_reg.with_gammas(gamma if gamma > 0 else GAMMA_M_FLOOR)
                model, emb = fit_fixed(
                    centered, w, reg, centering, k, config.rescale_mode, config.scaled
                )
                estimates = {
                    "fit": fit_error(emb, w, config.normalize),
                    "true": true_error(emb, truth, None, config.normalize),
                }
                for index, spec in enumerate(config.cv):
                    cv = CvConfig(spec.scheme, spec.prob, spec.replicates,
                                  seed=_cv_seed(config.seed, draw, index),
                                  extrapolate=spec.extrapolate)
                    estimates[spec.name] = cv_error(
                        centered, w, reg, centering, cv, k,
                        config.rescale_mode, config.scaled, config.normalize,
                    ).phi

                for name, phi in estimates.items():
                    for j in range(k):
                        rows.append((draw, gamma, j + 1, float(model.lambdas[j]), name, float(phi[j])))
            return rows

        except NumericalError as e:
            logger.error(f"エラー: 抽出 {draw}: {e}")
            return None


def protocol_grid(epsilons: Sequence[float] = DEFAULT_EPSILONS) -> List[Dict]:
    """
    12 通りの実験条件（W̄ の種類 × 標本化スキーム × 実効 ε）

    node 標本化では ξ = √ε を使い、cv は同じスキームと link の両方で比べます。
    """
    grid = []
    for weight_kind in ("regular", "powerlaw"):
        for scheme in ("link", "node"):
            for eps in epsilons:
                grid.append({
                    "weight_kind": weight_kind,
                    "sampling_scheme": scheme,
                    "sampling_prob": float(eps if scheme == "link" else np.sqrt(eps)),
                })
    return grid


def run_simple_study(
    draws: int = 10,
    output_dir: str = "test_results",
    seed: int = 42,
) -> StudyResult:
    """
    小規模な実験を実行（動作確認用）

    Args:
        draws: 抽出数
        output_dir: 出力ディレクトリ
        seed: 乱数シード
    """
    dataset = generate(SimConfig(p=(5, 10), n=(100, 200), seed=seed))
    config = StudyConfig(
        sampling_prob=0.2, draws=draws, gammas=(0.01, 0.1, 1.0),
        cv=(CvSpec("link", 0.1, 10), CvSpec("node", 0.05, 10)), k_max=3, seed=seed,
    )
    controller = BiasStudyController(output_dir=Path(output_dir), num_processes=1)
    return controller.run(dataset, config)


if __name__ == "__main__":
    logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')
    print("実験制御システムのテスト\n")

    result = run_simple_study(draws=5)
    print(result.summary)
    print("\n実験完了。test_results を確認してください。")
