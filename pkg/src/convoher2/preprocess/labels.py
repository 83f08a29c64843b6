import numpy as np

from convoher2.enums import Her2Score, NUM_SCORES


def one_hot(score: Her2Score) -> np.ndarray:
    """HER2 评分 → 长度 4 的 one-hot 向量"""
    vector = np.zeros(NUM_SCORES, dtype=np.float32)
    vector[score.index] = 1.0
    return vector


def one_hot_batch(scores: list[Her2Score]) -> np.ndarray:
    return np.stack([one_hot(s) for s in scores]) if scores else np.zeros((0, NUM_SCORES), np.float32)
