"""
実行設定（YAML）

1 つの YAML ファイルに実験条件をまとめ、相対パスは設定ファイルの場所から解決します。
コマンドラインのフラグ（--seed, --out, --threads, --gamma-m）で上書きできます。
"""

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple
import logging

import numpy as np
import yaml

from domains import MultiDomainData, load_domain_csv
from errors_cv import CvConfig
from weights import SymWeights, load_weights

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DomainSpec:
    """ドメイン 1 つ分のデータファイル"""
    name: str
    file: Path
    p: int


def _domain_specs(entries: Sequence[Dict], base: Path) -> Tuple[DomainSpec, ...]:
    specs = []
    for entry in entries:
        missing = {"name", "file", "p"} - set(entry)
        if missing:
            raise ValueError(f"domain entry {entry} lacks {sorted(missing)}")
        specs.append(DomainSpec(str(entry["name"]), _resolve(entry["file"], base), int(entry["p"])))
    return tuple(specs)


def _resolve(path: Any, base: Path) -> Path:
    path = Path(path)
    return path if path.is_absolute() else base / path


def _as_grid(value: Any) -> Tuple[float, ...]:
    if value is None:
        return ()
    if isinstance(value, (list, tuple)):
        return tuple(float(v) for v in value)
    return (float(value),)


@dataclass(frozen=True)
class RunConfig:
    """
    実行設定

    Attributes:
        domains: ドメインの並び（名前・ファイル・次元）
        weights: 観測重みのファイル
        gamma_m: γ_M のグリッド（fit は先頭の値を使う）
        gamma_w: γ_W
        k: 成分数（None なら P）
        rescale_mode: 'weighted' / 'unweighted'
        scaled: Σ m_i 倍のスケール規約
        normalize: 誤差を Σ m̃ で割るか
        center: 中心化 'weighted' / 'unweighted' / 'none'
        cv: 交差検証（scheme, prob, replicates, extrapolate）
        truth: {wbar, epsilon} または {test_domains, test_weights}
        oracle: 理論チェックの設定
        simulation: 合成データの設定（標本化の指定を含められる）
        study: 偏りの Monte Carlo 実験の設定
        seed: 乱数シード（乱数を使うコマンドでは必須）
        output_dir: 出力ディレクトリ
        threads: 並列プロセス数
        base_dir: 相対パスの基準
    """
    domains: Tuple[DomainSpec, ...] = ()
    weights: Optional[Path] = None
    gamma_m: Tuple[float, ...] = (0.1,)
    gamma_w: float = 0.0
    k: Optional[int] = None
    rescale_mode: str = "weighted"
    scaled: bool = True
    normalize: bool = True
    center: str = "weighted"
    cv: Dict[str, Any] = field(default_factory=dict)
    truth: Dict[str, Any] = field(default_factory=dict)
    oracle: Dict[str, Any] = field(default_factory=dict)
    simulation: Dict[str, Any] = field(default_factory=dict)
    study: Dict[str, Any] = field(default_factory=dict)
    seed: Optional[int] = None
    output_dir: Path = Path("results")
    threads: int = 1
    base_dir: Path = Path(".")

    def __post_init__(self):
        if not self.gamma_m:
            raise ValueError("gamma_m grid must not be empty")
        if any(g < 0 for g in self.gamma_m):
            raise ValueError(f"gamma_m values must be non-negative, got {list(self.gamma_m)}")
        if self.k is not None and self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.threads < 1:
            raise ValueError(f"threads must be >= 1, got {self.threads}")
        if self.seed is not None and self.seed < 0:
            raise ValueError(f"seed must be non-negative, got {self.seed}")

    @classmethod
    def from_dict(cls, raw: Dict[str, Any], base_dir: Path = Path(".")) -> "RunConfig":
        raw = dict(raw or {})
        unknown = set(raw) - set(cls.__dataclass_fields__) - {"base_dir"}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        base_dir = Path(base_dir)

        truth = dict(raw.get("truth") or {})
        for key in ("wbar", "test_weights"):
            if key in truth:
                truth[key] = _resolve(truth[key], base_dir)
        if "test_domains" in truth:
            truth["test_domains"] = _domain_specs(truth["test_domains"], base_dir)

        return cls(
            domains=_domain_specs(raw.get("domains") or [], base_dir),
            weights=_resolve(raw["weights"], base_dir) if raw.get("weights") else None,
            gamma_m=_as_grid(raw.get("gamma_m", 0.1)),
            gamma_w=float(raw.get("gamma_w", 0.0)),
            k=None if raw.get("k") is None else int(raw["k"]),
            rescale_mode=str(raw.get("rescale_mode", "weighted")),
            scaled=bool(raw.get("scaled", True)),
            normalize=bool(raw.get("normalize", True)),
            center=str(raw.get("center", "weighted")),
            cv=dict(raw.get("cv") or {}),
            truth=truth,
            oracle=dict(raw.get("oracle") or {}),
            simulation=dict(raw.get("simulation") or {}),
            study=dict(raw.get("study") or {}),
            seed=None if raw.get("seed") is None else int(raw["seed"]),
            output_dir=_resolve(raw.get("output_dir", "results"), base_dir),
            threads=int(raw.get("threads", 1)),
            base_dir=base_dir,
        )

    @classmethod
    def from_yaml(cls, path: Path) -> "RunConfig":
        """
        YAML ファイルから読み込む

        Raises:
            FileNotFoundError: ファイルが無い場合
            ValueError: 内容が不正な場合
        """
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"config file not found: {path}")
        with open(path, 'r', encoding='utf-8') as f:
            raw = yaml.safe_load(f) or {}
        if not isinstance(raw, dict):
            raise ValueError(f"{path}: top level must be a mapping")
        return cls.from_dict(raw, path.parent)

    def with_overrides(
        self,
        seed: Optional[int] = None,
        output_dir: Optional[Path] = None,
        threads: Optional[int] = None,
        gamma_m: Optional[Sequence[float]] = None,
    ) -> "RunConfig":
        """コマンドラインの値で上書き（None は変更なし）"""
        changes: Dict[str, Any] = {}
        if seed is not None:
            changes["seed"] = int(seed)
        if output_dir is not None:
            changes["output_dir"] = Path(output_dir)
        if threads is not None:
            changes["threads"] = int(threads)
        if gamma_m is not None:
            changes["gamma_m"] = _as_grid(list(gamma_m))
        return replace(self, **changes) if changes else self

    def require_seed(self) -> int:
        if self.seed is None:
            raise ValueError("this command is randomized: set 'seed' in the config or pass --seed")
        return self.seed

    def cv_config(self) -> CvConfig:
        return CvConfig(
            scheme=str(self.cv.get("scheme", "link")),
            prob=float(self.cv.get("prob", 0.1)),
            replicates=int(self.cv.get("replicates", 30)),
            extrapolate=bool(self.cv.get("extrapolate", False)),
            seed=self.require_seed(),
            processes=self.threads,
        )

    def load_data(self, specs: Optional[Sequence[DomainSpec]] = None) -> MultiDomainData:
        specs = self.domains if specs is None else specs
        if not specs:
            raise ValueError("config lists no domains")
        blocks = [load_domain_csv(s.file, s.p) for s in specs]
        return MultiDomainData.from_blocks(blocks, names=[s.name for s in specs])

    def load_weights(self, n: int) -> SymWeights:
        if self.weights is None:
            raise ValueError("config has no 'weights' file")
        return load_weights(self.weights, n)

    def to_dict(self) -> Dict[str, Any]:
        """YAML に書ける形（パスは base_dir からの相対で表す）"""
        def rel(path: Path) -> str:
            try:
                return str(Path(path).relative_to(self.base_dir))
            except ValueError:
                return str(path)

        truth = dict(self.truth)
        for key in ("wbar", "test_weights"):
            if key in truth:
                truth[key] = rel(truth[key])
        if "test_domains" in truth:
            truth["test_domains"] = [
                {"name": s.name, "file": rel(s.file), "p": s.p} for s in truth["test_domains"]
            ]

        out: Dict[str, Any] = {
            "domains": [{"name": s.name, "file": rel(s.file), "p": s.p} for s in self.domains],
            "weights": rel(self.weights) if self.weights else None,
            "gamma_m": list(self.gamma_m),
            "gamma_w": self.gamma_w,
            "k": self.k,
            "rescale_mode": self.rescale_mode,
            "scaled": self.scaled,
            "normalize": self.normalize,
            "center": self.center,
            "cv": dict(self.cv),
            "truth": truth,
            "oracle": dict(self.oracle),
            "simulation": dict(self.simulation),
            "study": dict(self.study),
            "seed": self.seed,
            "output_dir": rel(self.output_dir),
            "threads": self.threads,
        }
        return {k: v for k, v in out.items() if v not in (None, {}, [])}

    def save_yaml(self, path: Path) -> Path:
        path = Path(path)
        with open(path, 'w', encoding='utf-8') as f:
            yaml.safe_dump(self.to_dict(), f, sort_keys=False, allow_unicode=True)
        return path


def parse_gamma_list(text: str) -> List[float]:
    """'0.001,0.01,0.1' を数値リストに"""
    values = [float(v) for v in text.split(",") if v.strip()]
    if not values or np.any(np.array(values) < 0):
        raise ValueError(f"invalid gamma list {text!r}")
    return values
