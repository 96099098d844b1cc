"""
共通空間での近傍検索

埋め込んだ問い合わせベクトルから、他ドメインの学習ベクトルを
ユークリッド距離の総当たりで探します。
"""

from typing import Optional, Sequence
import logging

import numpy as np
import pandas as pd
from scipy.spatial.distance import cdist

logger = logging.getLogger(__name__)

NEIGHBOR_COLUMNS = ["query", "rank", "domain", "row", "distance"]


def nearest_cross_domain(
    query_y: np.ndarray,
    candidate_y: np.ndarray,
    candidate_domains: np.ndarray,
    k: int,
    exclude_domain: Optional[int] = None,
    domain_names: Optional[Sequence[str]] = None,
) -> pd.DataFrame:
    """
    各問い合わせに最も近い候補を k 個返す

    Args:
        query_y: 問い合わせの埋め込み（q × K）
        candidate_y: 候補の埋め込み（N × K）
        candidate_domains: 候補の所属ドメイン（0 始まり）
        k: 近傍数（0 なら空の表）
        exclude_domain: このドメインの候補は除く（問い合わせ自身のドメイン）
        domain_names: 出力に使うドメイン名

    Returns:
        列 query, rank, domain, row, distance の表（rank は 1 始まり、距離が同じなら番号順）
        row は候補ドメイン内の行番号
    """
    if k < 0:
        raise ValueError(f"k must be non-negative, got {k}")
    query_y = np.atleast_2d(np.asarray(query_y, dtype=float))
    candidate_y = np.asarray(candidate_y, dtype=float)
    candidate_domains = np.asarray(candidate_domains)
    if query_y.shape[1] != candidate_y.shape[1]:
        raise ValueError("query and candidate embeddings have different dimensions")
    if k == 0:
        return pd.DataFrame(columns=NEIGHBOR_COLUMNS)

    pool = np.arange(candidate_y.shape[0])
    if exclude_domain is not None:
        pool = pool[candidate_domains != exclude_domain]
    if pool.size == 0:
        logger.warning("検索対象の候補がありません")
        return pd.DataFrame(columns=NEIGHBOR_COLUMNS)

    # ドメイン内の行番号
    local_row = np.zeros(candidate_domains.size, dtype=int)
    for d in np.unique(candidate_domains):
        mask = candidate_domains == d
        local_row[mask] = np.arange(mask.sum())

    dist = cdist(query_y, candidate_y[pool])
    order = np.argsort(dist, axis=1, kind="stable")[:, :k]

    records = []
    for q in range(query_y.shape[0]):
        for rank, j in enumerate(order[q], start=1):
            idx = pool[j]
            d = int(candidate_domains[idx])
            records.append({
                "query": q,
                "rank": rank,
                "domain": domain_names[d] if domain_names is not None else d,
                "row": int(local_row[idx]),
                "distance": float(dist[q, j]),
            })
    return pd.DataFrame(records, columns=NEIGHBOR_COLUMNS)


def label_error_rate(
    query_y: np.ndarray, label_y: np.ndarray, true_labels: Sequence[int]
) -> float:
    """
    最も近いラベルベクトルが正解でない問い合わせの割合

    Args:
        query_y: 問い合わせの埋め込み（q × K）
        label_y: ラベルドメインの埋め込み（ラベル数 × K、行番号がラベル）
        true_labels: 各問い合わせの正解ラベル
    """
    true_labels = np.asarray(true_labels)
    query_y = np.atleast_2d(np.asarray(query_y, dtype=float))
    if true_labels.shape != (query_y.shape[0],):
        raise ValueError("one true label per query is required")
    predicted = np.argmin(cdist(query_y, np.asarray(label_y, dtype=float)), axis=1)
    return float(np.mean(predicted != true_labels))


if __name__ == "__main__":
    candidates = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 2.0], [3.0, 3.0]])
    domains = np.array([0, 0, 1, 1])
    print(nearest_cross_domain([[0.1, 0.1]], candidates, domains, k=2, exclude_domain=0))
    print(label_error_rate([[0.1, 0.0], [2.9, 3.0]], candidates[2:], [0, 1]))
