"""
组合冻结骨干 + 分类头，提供前向推理与特征提取
"""
import hashlib
import logging
from contextlib import contextmanager
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Iterator, Literal, Optional

import keras
import numpy as np

from convoher2.enums import StainModality
from convoher2.errors import ConfigError, DimMismatch, ShapeError
from convoher2.model.layers import realize_backbone, realize_head
from convoher2.model.specs import BackboneSpec, HeadSpec
from convoher2.preprocess.batches import Batch

logger = logging.getLogger(__name__)

Mode = Literal["train", "infer"]
FEATURE_CHUNK = 64


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class ModelMetadata:
    config_hash: str = ""
    created_at: str = field(default_factory=_now)
    modality: Optional[StainModality] = None


@dataclass
class ModelHandle:
    """
    冻结骨干 + 分类头

    - backbone: 图像 → 特征（不可训练）
    - head: 特征 → 4 类概率（可训练）
    - network: 完整模型（层与 head 共享权重，用于参数统计）

    推理模式可并发调用；训练会修改 head 参数，需要独占。
    """
    backbone_spec: BackboneSpec
    head_spec: HeadSpec
    backbone: keras.Model
    head: keras.Sequential
    network: keras.Model
    metadata: ModelMetadata = field(default_factory=ModelMetadata)

    @property
    def input_shape(self) -> tuple[int, int, int]:
        side = self.backbone_spec.input_side
        return (side, side, 3)

    @property
    def feature_dim(self) -> int:
        return self.backbone_spec.feature_dim

    def backbone_checksum(self) -> float:
        """骨干参数校验和（用于确认训练前后骨干未被修改）"""
        return float(sum(np.sum(np.asarray(w, dtype=np.float64)) for w in self.backbone.get_weights()))

    def head_checksum(self) -> str:
        digest = hashlib.sha256()
        for w in self.head.get_weights():
            digest.update(np.ascontiguousarray(w).tobytes())
        return digest.hexdigest()


def compose(
    backbone: BackboneSpec,
    head: HeadSpec,
    seed: int = 0,
    metadata: Optional[ModelMetadata] = None,
    dtype: str = "float32",
) -> ModelHandle:
    """
    去掉 InceptionV3 的分类层，用全局 2048 维特征接上分类头

    Raises:
        ConfigError: 请求解冻骨干
        DimMismatch: 骨干特征维度 ≠ 分类头输入维度
        MissingWeights: 预训练权重不可用
    """
    if not backbone.frozen:
        raise ConfigError("本项目只支持冻结骨干（frozen=False 被拒绝）")
    if backbone.feature_dim != head.input_dim:
        raise DimMismatch(f"骨干特征维度 {backbone.feature_dim} ≠ 分类头输入维度 {head.input_dim}")

    backbone_model = realize_backbone(backbone)
    head_model = realize_head(head, seed=seed, dtype=dtype)

    inputs = keras.Input(shape=(backbone.input_side, backbone.input_side, 3), name="image")
    x = backbone_model(inputs, training=False)
    for layer in head_model.layers:
        x = layer(x)
    network = keras.Model(inputs, x, name="convoher2")

    logger.info(
        "模型已组合: backbone=%s, head=%s (%d 层)",
        backbone.architecture_id, head.variant.value, len(head.layers),
    )
    return ModelHandle(
        backbone_spec=backbone,
        head_spec=head,
        backbone=backbone_model,
        head=head_model,
        network=network,
        metadata=metadata or ModelMetadata(),
    )


@contextmanager
def preserved_running_stats(head: keras.Model) -> Iterator[None]:
    """训练模式前向会更新 BN running 统计量；此上下文结束时恢复原值"""
    snapshot = [np.array(v.numpy()) for v in head.non_trainable_variables]
    try:
        yield
    finally:
        for v, value in zip(head.non_trainable_variables, snapshot):
            v.assign(value)


def _images_of(handle: ModelHandle, batch: Batch | np.ndarray) -> np.ndarray:
    images = batch.images if isinstance(batch, Batch) else np.asarray(batch)
    if images.ndim != 4 or tuple(images.shape[1:]) != handle.input_shape:
        raise ShapeError(f"输入形状应为 N×{'×'.join(map(str, handle.input_shape))}，实际 {images.shape}")
    return images.astype(np.float32, copy=False)


def extract_features(handle: ModelHandle, batch: Batch | np.ndarray) -> np.ndarray:
    """
    骨干特征 N×feature_dim

    骨干冻结，特征对同一图像恒定，可缓存。
    """
    images = _images_of(handle, batch)
    chunks = [
        np.asarray(handle.backbone(images[i:i + FEATURE_CHUNK], training=False))
        for i in range(0, len(images), FEATURE_CHUNK)
    ]
    return np.concatenate(chunks, axis=0)


def forward_features(handle: ModelHandle, features: np.ndarray, mode: Mode = "infer") -> np.ndarray:
    """只经过分类头的前向（特征缓存路径）"""
    features = np.asarray(features)
    if features.ndim != 2 or features.shape[1] != handle.head_spec.input_dim:
        raise ShapeError(f"特征形状应为 N×{handle.head_spec.input_dim}，实际 {features.shape}")

    if mode == "infer":
        return np.asarray(handle.head(features, training=False))
    if mode == "train":
        with preserved_running_stats(handle.head):
            return np.asarray(handle.head(features, training=True))
    raise ValueError(f"未知前向模式: {mode!r}")


def forward(handle: ModelHandle, batch: Batch | np.ndarray, mode: Mode = "infer") -> np.ndarray:
    """
    完整前向：N 张归一化图像 → N×4 概率

    train 模式 BN 使用批统计量（不改变 running 统计量），infer 模式使用 running 统计量。
    """
    return forward_features(handle, extract_features(handle, batch), mode)
