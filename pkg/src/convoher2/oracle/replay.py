"""
用 numpy 参考实现重放分类头前向

输入为 export_flat_weights 的扁平导出（``NN:<层名>/<变量名>`` 按层排序），
逐层计算 BN → Dense+ReLU → … → Dense+Softmax，全程 float64。
"""
from itertools import groupby
from typing import Iterable, Literal

import numpy as np

from convoher2.errors import ShapeMismatch
from convoher2.oracle.activations import relu, softmax
from convoher2.oracle.batchnorm import DEFAULT_EPSILON, BatchNormParams, bn_forward_infer, bn_forward_train

_BN_VARS = {"gamma", "beta", "moving_mean", "moving_variance"}
_DENSE_VARS = {"kernel", "bias"}


def _group_layers(flat_weights: Iterable[tuple[str, np.ndarray]]) -> list[tuple[str, dict[str, np.ndarray]]]:
    def layer_key(item):
        return item[0].rsplit("/", 1)[0]

    layers = []
    for key, items in groupby(flat_weights, key=layer_key):
        arrays = {name.rsplit("/", 1)[1]: np.asarray(value, dtype=np.float64) for name, value in items}
        layers.append((key, arrays))
    return layers


def head_forward(
    flat_weights: Iterable[tuple[str, np.ndarray]],
    features: np.ndarray,
    mode: Literal["train", "infer"] = "infer",
    epsilon: float = DEFAULT_EPSILON,
) -> np.ndarray:
    """
    Args:
        flat_weights: 扁平导出（有序）
        features: N×D 特征
        mode: train 用批统计量，infer 用 running 统计量
        epsilon: BN 的 ε（需与框架层一致）

    Returns:
        N×K 概率矩阵
    """
    x = np.asarray(features, dtype=np.float64)
    layers = _group_layers(flat_weights)
    dense_positions = [i for i, (_, arrays) in enumerate(layers) if "kernel" in arrays]
    if not dense_positions:
        raise ValueError("扁平导出中没有 Dense 层")
    last_dense = dense_positions[-1]

    for i, (name, arrays) in enumerate(layers):
        keys = set(arrays)
        if keys == _BN_VARS:
            if x.shape[1] != arrays["gamma"].shape[0]:
                raise ShapeMismatch(f"{name}: 输入宽度 {x.shape[1]} ≠ BN 宽度 {arrays['gamma'].shape[0]}")
            params = BatchNormParams(
                gamma=arrays["gamma"],
                beta=arrays["beta"],
                epsilon=epsilon,
                running_mean=arrays["moving_mean"],
                running_var=arrays["moving_variance"],
            )
            x = bn_forward_train(x, params).y if mode == "train" else bn_forward_infer(x, params)
        elif keys == _DENSE_VARS:
            kernel = arrays["kernel"]
            if x.shape[1] != kernel.shape[0]:
                raise ShapeMismatch(f"{name}: 输入宽度 {x.shape[1]} ≠ kernel 行数 {kernel.shape[0]}")
            z = x @ kernel + arrays["bias"]
            x = softmax(z) if i == last_dense else relu(z)
        else:
            raise ValueError(f"无法识别的层变量: {name} {sorted(keys)}")
    return x
