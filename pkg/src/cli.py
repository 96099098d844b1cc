"""
コマンドライン

サブコマンド:
    fit        1 つの (γ_M, γ_W) で学習し、モデルと固有値を保存
    errors     γ グリッドで fit / cv / true の誤差を計算
    simulate   格子構造の合成データを生成
    oracle     漸近理論のオラクルと摂動チェック
    transform  新しいベクトルを共通空間へ写し、他ドメインの近傍を探す
    study      fitting / cv 誤差の偏りの Monte Carlo 実験

終了コード: 0 成功 / 1 入力の誤り / 2 数値計算の失敗
"""

import argparse
from pathlib import Path
from typing import List, Optional
import logging
import sys

import numpy as np
import pandas as pd
import yaml

sys.path.append(str(Path(__file__).parent))

from config import RunConfig, parse_gamma_list
from data_logger import DataLogger
from domains import domain_regularizer, load_domain_csv
from errors_cv import error_curve
from exceptions import NumericalError
from experiment_controller import BiasStudyController, StudyConfig
from mca_core import McaModel, eigen_signature, fit
from metrics import MetricsCalculator
from retrieval import nearest_cross_domain
from schemes import get_global_registry
from simgen import SimConfig, expected_structure_check, generate, save_dataset
from theory_oracles import (
    DEFAULT_LADDER, bias_monte_carlo, bias_oracle, fit_expansion_check, perturbation_check,
)
from weights import SampleConfig, degree, load_weights

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NUMERICAL = 2


def _banner(title: str, config: RunConfig) -> None:
    print("=" * 60)
    print(f"MCA: {title}")
    print("=" * 60)
    print(f"出力ディレクトリ: {config.output_dir}")
    if config.seed is not None:
        print(f"乱数シード: {config.seed}")
    print("=" * 60)


def cmd_fit(config: RunConfig) -> int:
    """1 点で学習し model.npz と lambdas.csv を書く"""
    data = config.load_data()
    w = config.load_weights(data.layout.N)
    gamma_m = config.gamma_m[0]
    model, _ = fit(
        data, w, gamma_m=gamma_m, gamma_w=config.gamma_w, k=config.k,
        rescale_mode=config.rescale_mode, scaled=config.scaled, center_mode=config.center,
    )

    data_logger = DataLogger(config.output_dir)
    model.save(config.output_dir / "model.npz")
    data_logger.write_frame(
        pd.DataFrame({"k": np.arange(1, model.lambdas.size + 1), "lambda": model.lambdas}),
        "lambdas.csv",
    )
    pos, zero, neg = eigen_signature(model.lambdas)
    data_logger.log_run("fit", config.to_dict(), {
        "gamma_M": gamma_m, "K": model.k, "K_plus": model.k_plus,
        "signature": [pos, zero, neg],
    })
    print(f"K+ = {model.k_plus}（正 {pos} / ゼロ {zero} / 負 {neg}）")
    return EXIT_OK


def cmd_errors(config: RunConfig) -> int:
    """γ グリッドの誤差レポート errors.csv を書く"""
    data = config.load_data()
    w = config.load_weights(data.layout.N)

    wbar, epsilon, test = None, None, None
    if "wbar" in config.truth:
        wbar = load_weights(config.truth["wbar"], data.layout.N)
        epsilon = float(config.truth["epsilon"]) if "epsilon" in config.truth else None
    elif "test_weights" in config.truth:
        test_data = config.load_data(config.truth.get("test_domains") or config.domains)
        test = (test_data, load_weights(config.truth["test_weights"], test_data.layout.N))

    report = error_curve(
        data, w, config.gamma_m, config.cv_config(), gamma_w=config.gamma_w, k=config.k,
        rescale_mode=config.rescale_mode, scaled=config.scaled, normalize=config.normalize,
        center_mode=config.center, wbar=wbar, epsilon=epsilon, test=test,
    )

    data_logger = DataLogger(config.output_dir)
    report.to_csv(config.output_dir / "errors.csv")
    data_logger.write_frame(report.totals(), "errors_totals.csv")
    if report.failures:
        data_logger.write_rows(
            [{"gamma_M": gm, "gamma_W": gw, "message": msg}
             for (gm, gw), msg in report.failures.items()],
            "failures.csv", ["gamma_M", "gamma_W", "message"],
        )

    summary = {"rows": len(report.rows), "failures": len(report.failures)}
    frame = report.to_frame()
    first = frame[frame["k"] == 1]
    if first["phi_cv"].notna().any():
        best = MetricsCalculator.interior_minimum(first["gamma_M"], first["phi_cv"])
        summary["cv_minimum_k1"] = best.to_dict()
        print(f"φ_1 の cv 最小: γ_M = {best.gamma:g}（内部: {best.interior}）")
    data_logger.log_run("errors", config.to_dict(), summary)
    return EXIT_OK


def cmd_simulate(config: RunConfig) -> int:
    """合成データを書き出し、errors にそのまま渡せる run.yaml も作る"""
    sim = dict(config.simulation)
    sampling_scheme = sim.pop("sampling_scheme", None)
    sampling_prob = sim.pop("sampling_prob", None)
    sim["seed"] = config.require_seed()
    dataset = generate(SimConfig.from_dict(sim))

    out = config.output_dir
    sampled, sampling = None, None
    if sampling_scheme is not None:
        if sampling_prob is None:
            raise ValueError("simulation.sampling_scheme needs simulation.sampling_prob")
        scheme = get_global_registry().create(sampling_scheme)
        # ストリーム 0 はデータ生成に使う
        sampled = SampleConfig(sampling_scheme, float(sampling_prob), dataset.config.seed).sample(
            dataset.wbar, stream=1
        )
        sampling = {
            "scheme": sampling_scheme, "prob": float(sampling_prob),
            "epsilon": scheme.truth_epsilon(float(sampling_prob)),
        }
    manifest = save_dataset(dataset, out, sampled, sampling)

    # 作業用の W で 1 点学習し、格子構造が埋め込みに出ているかを記録する
    working = sampled if sampled is not None else dataset.wbar
    model, emb = fit(
        dataset.data, working, gamma_m=config.gamma_m[0], gamma_w=config.gamma_w,
        rescale_mode=config.rescale_mode, scaled=config.scaled, center_mode=config.center,
    )
    diag = expected_structure_check(emb.y, dataset.labels, model.lambdas)
    DataLogger(out).log_run("simulate", config.to_dict(), {
        "wbar_links": manifest["wbar_links"], "sampled": sampled is not None,
        "structure": {
            "gamma_M": config.gamma_m[0], "within": diag.within, "between": diag.between,
            "ratio": diag.ratio, "signature": list(diag.signature),
        },
    })

    if sampled is not None:
        run = RunConfig.from_dict({
            "domains": manifest["domains"],
            "weights": manifest["weights"],
            "gamma_m": list(config.gamma_m),
            "gamma_w": config.gamma_w,
            "k": config.k,
            "cv": config.cv,
            "truth": {"wbar": manifest["wbar"], "epsilon": sampling["epsilon"]},
            "seed": config.seed,
            "output_dir": "results",
        }, base_dir=out)
        run.save_yaml(out / "run.yaml")

    print(f"W̄ 非ゼロ数: {manifest['wbar_links']} {manifest['block_links']}")
    print(f"格子構造: 距離比 {diag.ratio:.3f}、符号数 {diag.signature}")
    return EXIT_OK


def _direction(name: str, reg_matrix: np.ndarray) -> np.ndarray:
    p = reg_matrix.shape[0]
    if name == "regularizer":
        return reg_matrix
    if name == "identity":
        return np.eye(p)
    if name == "zero":
        return np.zeros((p, p))
    raise ValueError(f"unknown perturbation direction {name!r}")


def cmd_oracle(config: RunConfig) -> int:
    """bias_k のオラクル（と Monte Carlo）、摂動チェックを CSV に書く"""
    data = config.load_data()
    w = config.load_weights(data.layout.N)
    options = config.oracle
    j = options.get("j")
    data_logger = DataLogger(config.output_dir)
    summary = {}

    if "wbar" in config.truth and "epsilon" in config.truth:
        wbar = load_weights(config.truth["wbar"], data.layout.N)
        epsilon = float(config.truth["epsilon"])
        reg = domain_regularizer(data, degree(wbar.scaled(epsilon)), config.gamma_m[0])
        report = bias_oracle(data, wbar, epsilon, reg, j, options.get("gamma_at", "working"))
        draws = int(options.get("mc_draws", 0))
        if draws > 0:
            report.monte_carlo_bias, report.monte_carlo_se = bias_monte_carlo(
                data, wbar, epsilon, reg, report.bias.size, draws,
                seed=config.require_seed(), processes=config.threads,
            )
            report.draws = draws
        data_logger.write_frame(report.to_frame(), "oracle_bias.csv")
        summary["bias"] = report.bias.tolist()

    base_reg = domain_regularizer(data, degree(w), 1.0)
    direction_g = _direction(options.get("direction_g", "regularizer"), base_reg.l_m)
    direction_h = _direction(options.get("direction_h", "zero"), base_reg.l_m)
    base_gamma = float(options.get("base_gamma_m", 0.0))
    base = base_reg.with_gammas(base_gamma) if base_gamma > 0 else None
    ladder = options.get("ladder") or DEFAULT_LADDER

    pert = perturbation_check(data, w, direction_g, direction_h, ladder, j, base)
    data_logger.write_frame(pert.to_frame(), "oracle_perturbation.csv")
    expansion = fit_expansion_check(
        data, w, direction_g, direction_h, ladder, int(options.get("k", 1)), base
    )
    data_logger.write_frame(expansion.to_frame(), "oracle_fit_expansion.csv")

    summary.update({
        "lambda_slope": pert.lambda_slope, "c_slope": pert.c_slope,
        "fit_expansion_slope": expansion.slope,
    })
    data_logger.log_run("oracle", config.to_dict(), summary)
    print(
        f"傾き: Δλ {pert.lambda_slope:.2f}, c {pert.c_slope:.2f}, "
        f"φ_fit 展開 {expansion.slope:.2f}"
    )
    return EXIT_OK


def cmd_transform(
    config: RunConfig, model_path: Path, query_path: Path, domain: str, neighbors: int
) -> int:
    """問い合わせベクトルを埋め込み、他ドメインの近傍を探す"""
    model = McaModel.load(model_path)
    d = model.layout.domain_index(domain if not domain.isdigit() else int(domain) - 1)
    queries = load_domain_csv(query_path, model.layout.dims[d])
    coords = model.transform(queries, d)

    data_logger = DataLogger(config.output_dir)
    columns = [f"y{c + 1}" for c in range(model.k)]
    frame = pd.DataFrame(coords, columns=columns)
    frame.insert(0, "query", np.arange(len(frame)))
    data_logger.write_frame(frame, "embedding.csv")

    if neighbors > 0:
        training = model.embed(config.load_data())
        table = nearest_cross_domain(
            coords, training, model.layout.row_domains(), neighbors,
            exclude_domain=d, domain_names=model.layout.names,
        )
        data_logger.write_frame(table, "neighbors.csv")
    print(f"{len(frame)} 個のベクトルを埋め込みました（K = {model.k}）")
    return EXIT_OK


def cmd_study(config: RunConfig) -> int:
    """study_draws.csv と study_summary.csv を書く"""
    sim = {k: v for k, v in config.simulation.items()
           if k not in ("sampling_scheme", "sampling_prob")}
    sim.setdefault("seed", config.require_seed())
    dataset = generate(SimConfig.from_dict(sim))

    study = dict(config.study)
    study["seed"] = config.require_seed()
    study_config = StudyConfig.from_dict(study)

    controller = BiasStudyController(config.output_dir, num_processes=config.threads)
    result = controller.run(dataset, study_config)

    for spec in study_config.cv:
        med = MetricsCalculator.median_abs_relative_bias(result.summary, spec.name)
        print(f"{spec.name}: |相対バイアス| の中央値 = {med:.4f}")
    print(f"fit: |相対バイアス| の中央値 = "
          f"{MetricsCalculator.median_abs_relative_bias(result.summary, 'fit'):.4f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description='マッチング相関分析（MCA）と誤差の交差検証')
    sub = parser.add_subparsers(dest='command', required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument('--config', type=str, required=True, help='実行設定 YAML')
        p.add_argument('--seed', type=int, default=None, help='乱数シード（設定を上書き）')
        p.add_argument('--out', type=str, default=None, help='出力ディレクトリ（設定を上書き）')
        p.add_argument('--threads', type=int, default=None, help='並列プロセス数')
        p.add_argument('--gamma-m', type=str, default=None,
                       help='γ_M（カンマ区切りでグリッド、設定を上書き）')

    for name, help_text in [
        ('fit', '1 点で学習'),
        ('errors', 'γ グリッドの誤差レポート'),
        ('simulate', '合成データの生成'),
        ('oracle', '理論オラクルと摂動チェック'),
        ('study', '偏りの Monte Carlo 実験'),
    ]:
        common(sub.add_parser(name, help=help_text))

    transform = sub.add_parser('transform', help='新しいベクトルの埋め込みと近傍検索')
    common(transform)
    transform.add_argument('--model', type=str, required=True, help='model.npz')
    transform.add_argument('--query', type=str, required=True, help='問い合わせ CSV')
    transform.add_argument('--domain', type=str, required=True, help='ドメイン名または番号（1 始まり）')
    transform.add_argument('--neighbors', type=int, default=0, help='近傍数（0 なら座標のみ）')
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """
    エントリポイント

    Returns:
        終了コード
    """
    logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')
    args = build_parser().parse_args(argv)

    try:
        config = RunConfig.from_yaml(Path(args.config)).with_overrides(
            seed=args.seed,
            output_dir=None if args.out is None else Path(args.out),
            threads=args.threads,
            gamma_m=None if args.gamma_m is None else parse_gamma_list(args.gamma_m),
        )
        _banner(args.command, config)
        if args.command == 'fit':
            return cmd_fit(config)
        if args.command == 'errors':
            return cmd_errors(config)
        if args.command == 'simulate':
            return cmd_simulate(config)
        if args.command == 'oracle':
            return cmd_oracle(config)
        if args.command == 'study':
            return cmd_study(config)
        return cmd_transform(
            config, Path(args.model), Path(args.query), args.domain, args.neighbors
        )
    except NumericalError as e:
        logger.error(f"数値計算の失敗: {e}")
        return EXIT_NUMERICAL
    except (ValueError, FileNotFoundError, KeyError, yaml.YAMLError) as e:
        logger.error(f"入力エラー: {e}")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
