"""
把 BackboneSpec / HeadSpec 落实为 Keras 模型
"""
import logging
import math
from pathlib import Path

import keras

from convoher2.errors import ConfigError, MissingWeights
from convoher2.model.specs import INCEPTION_V3, STUB_GRID, BackboneSpec, HeadSpec, LayerKind

logger = logging.getLogger(__name__)

BN_MOMENTUM = 0.99
BN_EPSILON = 1e-3
# 输出层权重按 fan-average 均匀分布再缩小，使初始预测接近均匀分布（初始损失 ≈ ln 4）
OUTPUT_INIT_SCALE = 0.1


def realize_head(spec: HeadSpec, seed: int = 0, dtype: str = "float32") -> keras.Sequential:
    """
    按 HeadSpec 构建可训练分类头（输入为 input_dim 维特征，输出 4 类概率）

    Dense 权重：Glorot（fan-average）均匀分布，种子为 seed + 层序号；偏置为 0。
    BN：gamma=1, beta=0, momentum=0.99, epsilon=1e-3。
    """
    layers: list[keras.layers.Layer] = [keras.Input(shape=(spec.input_dim,), dtype=dtype, name="features")]
    if spec.flatten:
        layers.append(keras.layers.Flatten(name="flatten", dtype=dtype))

    last = len(spec.layers) - 1
    for i, layer in enumerate(spec.layers):
        if layer.kind is LayerKind.BATCH_NORM:
            layers.append(keras.layers.BatchNormalization(
                momentum=BN_MOMENTUM,
                epsilon=BN_EPSILON,
                name=layer.name,
                dtype=dtype,
            ))
        elif layer.kind is LayerKind.DENSE:
            if i == last:
                init = keras.initializers.VarianceScaling(
                    scale=OUTPUT_INIT_SCALE, mode="fan_avg", distribution="uniform", seed=seed + i,
                )
            else:
                init = keras.initializers.GlorotUniform(seed=seed + i)
            layers.append(keras.layers.Dense(
                layer.out_width,
                activation=layer.activation,
                kernel_initializer=init,
                bias_initializer="zeros",
                name=layer.name,
                dtype=dtype,
            ))
    return keras.Sequential(layers, name="head")


def _inception_v3(spec: BackboneSpec) -> keras.Model:
    weights = spec.weights
    if weights not in (None, "imagenet") and not Path(weights).is_file():
        raise MissingWeights(f"找不到预训练权重文件: {weights}")
    if weights is None:
        logger.warning("inception_v3 未加载预训练权重（仅结构，适用于参数统计）")

    try:
        model = keras.applications.InceptionV3(
            include_top=False,
            weights=weights,
            input_shape=(spec.input_side, spec.input_side, 3),
            pooling="avg",
        )
    except Exception as e:  # 下载失败 / 权重文件与结构不匹配
        raise MissingWeights(f"无法加载 InceptionV3 权重 ({weights}): {e}") from e
    return model


def _stub_backbone(spec: BackboneSpec) -> keras.Model:
    if spec.input_side % STUB_GRID:
        raise ConfigError(f"桩骨干要求输入边长是 {STUB_GRID} 的倍数，实际 {spec.input_side}")

    pooled = STUB_GRID * STUB_GRID * 3
    return keras.Sequential([
        keras.Input(shape=(spec.input_side, spec.input_side, 3), name="image"),
        keras.layers.AveragePooling2D(pool_size=spec.input_side // STUB_GRID, name="stub_pool"),
        keras.layers.Flatten(name="stub_flatten"),
        keras.layers.Dense(
            spec.feature_dim,
            use_bias=False,
            kernel_initializer=keras.initializers.RandomNormal(stddev=1.0 / math.sqrt(pooled), seed=spec.seed),
            name="stub_projection",
        ),
    ], name="stub_backbone")


def realize_backbone(spec: BackboneSpec) -> keras.Model:
    """构建冻结的骨干网络：H×W×3 图像 → feature_dim 维全局特征"""
    if not spec.frozen:
        raise ConfigError("本项目只支持冻结的骨干网络（frozen=True）")

    model = _inception_v3(spec) if spec.architecture_id == INCEPTION_V3 else _stub_backbone(spec)
    model.trainable = False
    return model
