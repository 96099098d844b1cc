"""
標本化スキーム一覧表示スクリプト

登録済みの標本化スキーム（W̄ → W と W → W* + W−）を一覧表示します。
"""

import sys
from pathlib import Path

# パスを追加
sys.path.append(str(Path(__file__).parent.parent / "src"))

from schemes.registry import SchemeRegistry


def main():
    """スキーム一覧を表示"""
    print("=== MCA: 登録済み標本化スキーム ===\n")

    registry = SchemeRegistry()
    count = registry.auto_discover()

    print(f"検出されたスキーム数: {count}\n")

    names = registry.list_schemes()
    if not names:
        print("スキームが見つかりませんでした。")
        return

    print("実効レート（sample 確率 0.04、resample 確率 0.1）:")
    print(registry.rate_table(0.04, 0.1).to_string(index=False, float_format="%.4g"))

    print("\n使用例:")
    print("  registry = SchemeRegistry()")
    print("  registry.auto_discover()")
    print(f"  scheme = registry.create('{names[0]}')")


if __name__ == "__main__":
    main()
