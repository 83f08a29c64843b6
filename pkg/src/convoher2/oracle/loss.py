import numpy as np

from convoher2.errors import ShapeMismatch

PROB_CLIP = 1e-7


def cross_entropy(p: np.ndarray, t: np.ndarray) -> float:
    """
    单样本分类交叉熵 −Σ t_k · ln(clip(p_k, 1e-7, 1))

    Raises:
        ShapeMismatch: p 与 t 长度不同
    """
    p = np.asarray(p, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if p.shape != t.shape:
        raise ShapeMismatch(f"概率向量与标签形状不一致: {p.shape} vs {t.shape}")
    return float(-np.sum(t * np.log(np.clip(p, PROB_CLIP, 1.0))))


def mean_cross_entropy(P: np.ndarray, T: np.ndarray) -> float:
    """N×K 概率矩阵上的平均交叉熵"""
    P = np.asarray(P, dtype=np.float64)
    T = np.asarray(T, dtype=np.float64)
    if P.shape != T.shape:
        raise ShapeMismatch(f"概率矩阵与标签形状不一致: {P.shape} vs {T.shape}")
    per_sample = -np.sum(T * np.log(np.clip(P, PROB_CLIP, 1.0)), axis=-1)
    return float(np.mean(per_sample))


def softmax_cross_entropy_grad(p: np.ndarray, t: np.ndarray) -> np.ndarray:
    """CE∘softmax 对 logits 的解析梯度：p − t"""
    return np.asarray(p, dtype=np.float64) - np.asarray(t, dtype=np.float64)
