"""
実験実行スクリプト

合成データの 12 条件（W̄ の種類 × 標本化スキーム × ε）で
fitting / cv 誤差の偏りを調べる Monte Carlo 実験を実行します。
"""

import argparse
from pathlib import Path
import logging
import sys

sys.path.append(str(Path(__file__).parent.parent / "src"))

from experiment_controller import BiasStudyController, CvSpec, StudyConfig, protocol_grid
from metrics import MetricsCalculator
from simgen import SimConfig, generate


def main():
    """メイン関数"""
    parser = argparse.ArgumentParser(
        description='MCA: 誤差推定量の偏りの実験'
    )

    parser.add_argument(
        '--draws',
        type=int,
        default=160,
        help='W の抽出数（デフォルト: 160）'
    )

    parser.add_argument(
        '--replicates',
        type=int,
        default=30,
        help='cv のレプリケート数（デフォルト: 30）'
    )

    parser.add_argument(
        '--gammas',
        type=float,
        nargs='+',
        default=[0.001, 0.01, 0.1, 1.0],
        help='γ_M のグリッド（デフォルト: 0.001 0.01 0.1 1）'
    )

    parser.add_argument(
        '--k-max',
        type=int,
        default=10,
        help='評価する成分数（デフォルト: 10）'
    )

    parser.add_argument(
        '--conditions',
        type=int,
        nargs='+',
        default=None,
        help='実行する条件の番号（1 始まり、デフォルト: すべて）'
    )

    parser.add_argument(
        '--parallel',
        type=int,
        default=1,
        help='並列プロセス数（デフォルト: 1）'
    )

    parser.add_argument(
        '--output',
        type=str,
        default='results',
        help='出力ディレクトリ（デフォルト: results）'
    )

    parser.add_argument(
        '--seed',
        type=int,
        default=42,
        help='乱数シード（デフォルト: 42）'
    )

    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')

    grid = protocol_grid()
    selected = args.conditions or list(range(1, len(grid) + 1))

    print("=" * 60)
    print("MCA: 誤差推定量の偏りの実験")
    print("=" * 60)
    print(f"条件: {selected}")
    print(f"抽出数: {args.draws}")
    print(f"cv レプリケート数: {args.replicates}")
    print(f"γ_M: {args.gammas}")
    print(f"並列プロセス数: {args.parallel}")
    print(f"出力ディレクトリ: {args.output}")
    print(f"乱数シード: {args.seed}")
    print("=" * 60)
    print()

    cv = (
        CvSpec("link", 0.1, args.replicates),
        CvSpec("link", 0.1, args.replicates, extrapolate=True),
        CvSpec("node", 0.05, args.replicates),
    )
    datasets = {}

    for number in selected:
        condition = grid[number - 1]
        kind = condition["weight_kind"]
        if kind not in datasets:
            datasets[kind] = generate(SimConfig(weight_kind=kind, seed=args.seed))

        name = (f"{number:02d}_{kind}_{condition['sampling_scheme']}"
                f"_{condition['sampling_prob']:.3g}")
        print(f"[{number}/{len(grid)}] {name}")

        config = StudyConfig(
            sampling_scheme=condition["sampling_scheme"],
            sampling_prob=condition["sampling_prob"],
            draws=args.draws,
            gammas=tuple(args.gammas),
            cv=cv,
            k_max=args.k_max,
            seed=args.seed + number,
        )
        controller = BiasStudyController(
            output_dir=Path(args.output) / name,
            num_processes=args.parallel,
        )
        result = controller.run(datasets[kind], config)

        for estimator in ["fit"] + [spec.name for spec in cv]:
            med = MetricsCalculator.median_abs_relative_bias(result.summary, estimator)
            print(f"  {estimator}: |相対バイアス| の中央値 = {med:.4f}")

    print()
    print("=" * 60)
    print("実験完了")
    print(f"結果: {args.output}")
    print("=" * 60)


if __name__ == "__main__":
    main()
