"""
数値計算の失敗を表す例外

入力の誤りは ValueError / FileNotFoundError で表し、
ここでは計算そのものが成立しない場合だけを扱います。
CLI はこの階層を終了コード 2 に対応付けます。
並列実行のワーカーから戻せるよう、コンストラクタ引数で pickle します。
"""

from typing import Tuple


class NumericalError(RuntimeError):
    """数値計算の失敗（CLI 終了コード 2）"""


class SingularGramError(NumericalError):
    """G が正定値でない"""

    def __init__(self, smallest_eigenvalue: float):
        self.smallest_eigenvalue = smallest_eigenvalue
        super().__init__(
            f"G is not positive definite (smallest eigenvalue {smallest_eigenvalue:.3e}); "
            f"use gamma_M > 0"
        )

    def __reduce__(self):
        return (self.__class__, (self.smallest_eigenvalue,))


class DegenerateSpectrumError(NumericalError):
    """固有値が縮退していて摂動公式が使えない"""

    def __init__(self, pair: Tuple[int, int], gap: float):
        self.pair = pair
        self.gap = gap
        super().__init__(
            f"eigenvalues {pair[0] + 1} and {pair[1] + 1} are degenerate (gap {gap:.3e})"
        )

    def __reduce__(self):
        return (self.__class__, (self.pair, self.gap))


class AllReplicatesSkippedError(NumericalError):
    """交差検証の全レプリケートが空分割でスキップされた"""

    def __init__(self, replicates: int):
        self.replicates = replicates
        super().__init__(
            f"all {replicates} cv replicates produced an empty train or test split"
        )

    def __reduce__(self):
        return (self.__class__, (self.replicates,))
