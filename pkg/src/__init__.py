"""
src パッケージ

マッチング相関分析（MCA / CDMCA）と重みリサンプリングによる交差検証
"""

__version__ = "0.2.0"
