"""
MCA コマンドラインの起動スクリプト

使用例:
    python scripts/mca.py simulate --config config/example_simulate.yaml --seed 1
    python scripts/mca.py errors --config data/sim/run.yaml
"""

import sys
from pathlib import Path

# パスを追加
sys.path.append(str(Path(__file__).parent.parent / "src"))

from cli import main


if __name__ == "__main__":
    sys.exit(main())
