"""
データロガー

実行結果を CSV / YAML / JSON 形式で保存します。
CSV は決定的（同じシードなら同じ内容）で、JSON の実行ログだけが時刻を含みます。
"""

import csv
import json
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence
from datetime import datetime

import numpy as np
import pandas as pd
import yaml


def _plain(value: Any) -> Any:
    """numpy 型を JSON / YAML に書ける型へ"""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    return value


class DataLogger:
    """
    実験データのロガー

    表は CSV、設定とマニフェストは YAML、実行の記録は JSON で保存します。
    """

    def __init__(self, output_dir: Path):
        """
        Args:
            output_dir: 出力ディレクトリ
        """
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)

    def write_frame(self, frame: pd.DataFrame, filename: str) -> Path:
        """
        表を CSV に保存（上書き）

        Args:
            frame: 保存する表
            filename: ファイル名

        Returns:
            保存したファイルのパス
        """
        path = self.output_dir / filename
        frame.to_csv(path, index=False, float_format="%.12g")
        return path

    def write_rows(self, rows: Iterable[Dict[str, Any]], filename: str,
                   fieldnames: Sequence[str]) -> Path:
        """辞書の列を CSV に保存（上書き）"""
        path = self.output_dir / filename
        with open(path, 'w', newline='', encoding='utf-8') as f:
            writer = csv.DictWriter(f, fieldnames=list(fieldnames))
            writer.writeheader()
            for row in rows:
                writer.writerow({k: _plain(v) for k, v in row.items()})
        return path

    def append_rows(self, rows: Iterable[Dict[str, Any]], filename: str,
                    fieldnames: Sequence[str]) -> Path:
        """CSV に追記（新規作成時はヘッダーを書き込む）"""
        path = self.output_dir / filename
        write_header = not path.exists()
        with open(path, 'a', newline='', encoding='utf-8') as f:
            writer = csv.DictWriter(f, fieldnames=list(fieldnames))
            if write_header:
                writer.writeheader()
            for row in rows:
                writer.writerow({k: _plain(v) for k, v in row.items()})
        return path

    def load_rows(self, filename: str) -> List[Dict[str, Any]]:
        path = self.output_dir / filename
        if not path.exists():
            return []
        with open(path, 'r', encoding='utf-8') as f:
            return list(csv.DictReader(f))

    def write_yaml(self, data: Dict[str, Any], filename: str) -> Path:
        path = self.output_dir / filename
        with open(path, 'w', encoding='utf-8') as f:
            yaml.safe_dump(_plain(data), f, sort_keys=False, allow_unicode=True)
        return path

    def log_run(self, command: str, config: Dict[str, Any],
                summary: Optional[Dict[str, Any]] = None) -> Path:
        """
        実行の記録を JSON で保存

        Args:
            command: サブコマンド名
            config: 実行設定
            summary: 結果の要約

        Returns:
            保存したファイルのパス
        """
        path = self.output_dir / f"run_{command}.json"
        data = {
            "command": command,
            "config": _plain(config),
            "summary": _plain(summary or {}),
            "timestamp": datetime.now().isoformat(),
        }
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(data, f, indent=2, ensure_ascii=False)
        return path

    def load_run(self, command: str) -> Dict[str, Any]:
        with open(self.output_dir / f"run_{command}.json", 'r', encoding='utf-8') as f:
            return json.load(f)


if __name__ == "__main__":
    print("データロガーのテスト\n")

    test_dir = Path("test_results")
    data_logger = DataLogger(test_dir)
    path = data_logger.write_rows(
        [{"k": 1, "lambda": np.float64(0.8)}, {"k": 2, "lambda": 0.3}],
        "lambdas.csv", ["k", "lambda"],
    )
    print(f"CSV保存: {path}")
    print(f"読み込み: {data_logger.load_rows('lambdas.csv')}")
    print(f"JSON保存: {data_logger.log_run('demo', {'seed': 1})}")
