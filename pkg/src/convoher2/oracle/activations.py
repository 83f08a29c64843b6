import numpy as np


def relu(x: np.ndarray) -> np.ndarray:
    """max(0, x)，逐元素"""
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def softmax(z: np.ndarray) -> np.ndarray:
    """
    数值稳定的 softmax（沿最后一维）

    先减去最大值，exp 的参数 ≤ 0，不会溢出。
    """
    z = np.asarray(z, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise ValueError("softmax 输入包含非有限值")
    shifted = z - z.max(axis=-1, keepdims=True)
    exps = np.exp(shifted)
    return exps / exps.sum(axis=-1, keepdims=True)
