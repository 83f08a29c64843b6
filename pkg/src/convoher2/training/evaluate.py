"""
推理模式下的预测与评分
"""
from pathlib import Path
from typing import NamedTuple

import numpy as np

from convoher2.data.manifest import DatasetManifest
from convoher2.enums import Her2Score, Split
from convoher2.errors import EmptySplit, IndexOutOfRange, LengthMismatch
from convoher2.model.features import FeatureStore
from convoher2.model.network import ModelHandle, forward, forward_features
from convoher2.oracle.loss import mean_cross_entropy
from convoher2.preprocess.batches import make_batches
from convoher2.preprocess.image import load_image


class Predictions(NamedTuple):
    probabilities: np.ndarray     # N×4
    labels: np.ndarray            # N 个真实类别下标
    record_ids: tuple[str, ...]

    @property
    def predicted(self) -> np.ndarray:
        return np.argmax(self.probabilities, axis=1)


class SplitScore(NamedTuple):
    loss: float
    accuracy: float


def score_predictions(probabilities: np.ndarray, labels: np.ndarray) -> SplitScore:
    """
    平均交叉熵 + 准确率（argmax 命中数 / N）

    Raises:
        LengthMismatch: 概率行数与标签数不同
        IndexOutOfRange: 标签不在 [0, 3]
    """
    probabilities = np.asarray(probabilities, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n, k = probabilities.shape
    if n != len(labels):
        raise LengthMismatch(f"预测 {n} 行，标签 {len(labels)} 个")
    if n == 0:
        raise EmptySplit("没有可评分的样本")
    if labels.min() < 0 or labels.max() >= k:
        raise IndexOutOfRange(f"标签下标应在 [0, {k - 1}]")

    loss = mean_cross_entropy(probabilities, np.eye(k)[labels])
    hits = int(np.sum(np.argmax(probabilities, axis=1) == labels))
    return SplitScore(loss=loss, accuracy=hits / n)


def predict_split(
    handle: ModelHandle,
    manifest: DatasetManifest,
    split: Split = Split.TEST,
    batch_size: int = 64,
    workers: int = 4,
) -> Predictions:
    """按清单顺序对某个划分做推理（不打乱、不增强）"""
    probs, labels, ids = [], [], []
    batches = make_batches(
        manifest, split, batch_size=batch_size, workers=workers,
        side_px=handle.backbone_spec.input_side, shuffle=False,
    )
    for batch in batches:
        probs.append(forward(handle, batch, "infer"))
        labels.append(batch.score_indices)
        ids.extend(batch.record_ids)
    return Predictions(np.concatenate(probs), np.concatenate(labels), tuple(ids))


def predict_features(
    handle: ModelHandle,
    store: FeatureStore,
    manifest: DatasetManifest,
    split: Split = Split.TEST,
) -> Predictions:
    """特征缓存路径的 predict_split"""
    records = manifest.select(split)
    if not records:
        raise EmptySplit(f"清单中没有 {split.value} 记录")
    ids = [r.sample_id for r in records]
    probs = forward_features(handle, store.gather(ids), "infer")
    labels = np.array([r.score.index for r in records], dtype=np.int64)
    return Predictions(probs, labels, tuple(ids))


def evaluate_split(handle: ModelHandle, manifest: DatasetManifest, split: Split = Split.TEST, workers: int = 4) -> SplitScore:
    """
    推理模式评估某个划分

    Raises:
        EmptySplit: 划分为空
    """
    pred = predict_split(handle, manifest, split, workers=workers)
    return score_predictions(pred.probabilities, pred.labels)


def evaluate_features(handle: ModelHandle, store: FeatureStore, manifest: DatasetManifest, split: Split = Split.TEST) -> SplitScore:
    pred = predict_features(handle, store, manifest, split)
    return score_predictions(pred.probabilities, pred.labels)


def predict_image(handle: ModelHandle, path: str | Path) -> tuple[Her2Score, np.ndarray]:
    """单张图像 → (预测评分, 4 类概率)"""
    img = load_image(path, handle.backbone_spec.input_side)
    probs = forward(handle, img.data[np.newaxis], "infer")[0]
    return Her2Score.from_index(int(np.argmax(probs))), probs
