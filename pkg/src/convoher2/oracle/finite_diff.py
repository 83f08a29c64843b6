from typing import Callable

import numpy as np


def finite_diff_grad(f: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """
    中心差分梯度 (f(x + h·e_k) − f(x − h·e_k)) / 2h

    x 可以是任意形状，返回同形状的梯度估计；x 本身不会被修改。
    """
    if h <= 0:
        raise ValueError(f"步长 h 必须 > 0，实际 {h}")

    x = np.array(x, dtype=np.float64, copy=True)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    grad_flat = grad.reshape(-1)

    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + h
        f_plus = f(x)
        flat[k] = orig - h
        f_minus = f(x)
        flat[k] = orig
        grad_flat[k] = (f_plus - f_minus) / (2 * h)

    return grad
