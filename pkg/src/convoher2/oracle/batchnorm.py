"""
批归一化的从零实现（numpy, float64）

训练模式：
    mu_B     = mean(x)
    sigma2_B = mean((x - mu_B)^2)          # 总体方差，除以 m
    x_hat    = (x - mu_B) / sqrt(sigma2_B + eps)
    y        = gamma * x_hat + beta
    running  = momentum * running + (1 - momentum) * batch_stat

推理模式使用 running_mean / running_var，不修改任何状态。
x 可以是一维（单个特征维度上的 m 个值），也可以是 m×d（逐列独立归一化）。
"""
from dataclasses import dataclass, replace

import numpy as np

DEFAULT_EPSILON = 1e-3
DEFAULT_MOMENTUM = 0.99


@dataclass(frozen=True)
class NormBatch:
    x: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        if x.ndim == 0 or x.shape[0] < 1:
            raise ValueError("NormBatch 至少需要一个样本 (m ≥ 1)")
        object.__setattr__(self, "x", x)

    @property
    def m(self) -> int:
        return self.x.shape[0]


@dataclass(frozen=True)
class BatchNormParams:
    gamma: float | np.ndarray = 1.0
    beta: float | np.ndarray = 0.0
    epsilon: float = DEFAULT_EPSILON
    momentum: float = DEFAULT_MOMENTUM
    running_mean: float | np.ndarray = 0.0
    running_var: float | np.ndarray = 1.0

    def __post_init__(self):
        # epsilon = 0 只允许在数值推导/校验时使用
        if self.epsilon < 0:
            raise ValueError(f"epsilon 必须 > 0，实际 {self.epsilon}")
        if not 0.0 < self.momentum < 1.0:
            raise ValueError(f"momentum 必须在 (0, 1)，实际 {self.momentum}")
        if np.any(np.asarray(self.running_var) < 0):
            raise ValueError("running_var 不能为负")


@dataclass(frozen=True)
class BatchNormTrainResult:
    y: np.ndarray
    mu_B: np.ndarray | float
    sigma2_B: np.ndarray | float
    params: BatchNormParams  # 已更新 running 统计量的新参数


def bn_forward_train(batch: NormBatch | np.ndarray, params: BatchNormParams) -> BatchNormTrainResult:
    if not isinstance(batch, NormBatch):
        batch = NormBatch(batch)
    x = batch.x

    mu = x.mean(axis=0)
    var = ((x - mu) ** 2).mean(axis=0)
    x_hat = (x - mu) / np.sqrt(var + params.epsilon)
    y = np.asarray(params.gamma, dtype=np.float64) * x_hat + np.asarray(params.beta, dtype=np.float64)

    m = params.momentum
    updated = replace(
        params,
        running_mean=m * np.asarray(params.running_mean, dtype=np.float64) + (1 - m) * mu,
        running_var=m * np.asarray(params.running_var, dtype=np.float64) + (1 - m) * var,
    )
    return BatchNormTrainResult(y=y, mu_B=mu, sigma2_B=var, params=updated)


def bn_forward_infer(x: np.ndarray, params: BatchNormParams) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    mean = np.asarray(params.running_mean, dtype=np.float64)
    var = np.asarray(params.running_var, dtype=np.float64)
    gamma = np.asarray(params.gamma, dtype=np.float64)
    beta = np.asarray(params.beta, dtype=np.float64)
    return gamma * (x - mean) / np.sqrt(var + params.epsilon) + beta
