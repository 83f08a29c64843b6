"""
批数据流

- 每个 epoch 每条记录恰好出现一次，最后一个不满批也会输出
- train：按 shuffle_seed + epoch 打乱，并做数据增强
- test：保持清单顺序，不增强
- 多线程预取一个批次，结果与单线程完全一致（增强随机数按记录位置派生）
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

from convoher2.data.manifest import DatasetManifest, ImageRecord
from convoher2.enums import Split
from convoher2.errors import EmptySplit
from convoher2.preprocess.augment import AugmentPolicy, augment
from convoher2.preprocess.image import IMAGE_SIDE_PX, decode_resize, normalize
from convoher2.preprocess.labels import one_hot

DEFAULT_BATCH_SIZE = 256


@dataclass(frozen=True)
class Batch:
    images: np.ndarray        # N×H×W×3，已归一化到 [-1, 1]
    labels: np.ndarray        # N×4 one-hot
    record_ids: tuple[str, ...]

    def __post_init__(self):
        n = len(self.record_ids)
        if n < 1:
            raise ValueError("Batch 至少包含一个样本")
        if self.images.shape[0] != n or self.labels.shape[0] != n:
            raise ValueError(
                f"Batch 各数组长度不一致: images={self.images.shape[0]}, "
                f"labels={self.labels.shape[0]}, ids={n}"
            )

    def __len__(self) -> int:
        return len(self.record_ids)

    @property
    def score_indices(self) -> np.ndarray:
        return np.argmax(self.labels, axis=1)


def epoch_order(n: int, shuffle_seed: int, epoch: int) -> np.ndarray:
    """第 epoch 轮的样本顺序（每轮种子 = shuffle_seed + epoch，可单独复现任意一轮）"""
    return np.random.default_rng(shuffle_seed + epoch).permutation(n)


def batch_slices(n: int, batch_size: int) -> list[slice]:
    if batch_size < 1:
        raise ValueError(f"batch_size 必须 ≥ 1，实际 {batch_size}")
    return [slice(start, min(start + batch_size, n)) for start in range(0, n, batch_size)]


def _augment_rng(shuffle_seed: int, epoch: int, position: int) -> np.random.Generator:
    return np.random.default_rng([shuffle_seed & 0xFFFFFFFF, epoch, position])


def _load_record(
    record: ImageRecord,
    position: int,
    side_px: int,
    policy: Optional[AugmentPolicy],
    shuffle_seed: int,
    epoch: int,
) -> np.ndarray:
    img = normalize(decode_resize(record.path, side_px))
    if policy is not None and policy.enabled:
        img = augment(img, policy, _augment_rng(shuffle_seed, epoch, position))
    return img.data


def make_batches(
    manifest: DatasetManifest,
    split: Split,
    batch_size: int = DEFAULT_BATCH_SIZE,
    shuffle_seed: int = 0,
    policy: Optional[AugmentPolicy] = None,
    epoch: int = 0,
    workers: int = 4,
    side_px: int = IMAGE_SIDE_PX,
    shuffle: Optional[bool] = None,
) -> Iterator[Batch]:
    """
    生成某个划分的有序批数据流

    Args:
        manifest: 数据清单
        split: Split.TRAIN 打乱 + 增强；其他划分保持清单顺序、不增强
        batch_size: 批大小
        shuffle_seed: 打乱种子
        policy: 增强策略（仅 train 生效，None 表示不增强）
        epoch: 当前轮次，参与打乱种子与增强种子
        workers: 解码线程数，0 表示在当前线程解码
        shuffle: 是否打乱 + 增强；None 表示仅 train 划分打乱

    Raises:
        EmptySplit: 该划分没有记录

    Example:
        977 条 test 记录、batch 256 → 批大小依次为 256, 256, 256, 209
    """
    records = manifest.select(split)
    if not records:
        raise EmptySplit(f"清单中没有 {split.value} 记录")

    training = split is Split.TRAIN if shuffle is None else shuffle
    if training:
        order = epoch_order(len(records), shuffle_seed, epoch)
        records = [records[i] for i in order]
    active_policy = policy if training else None

    slices = batch_slices(len(records), batch_size)
    return _iter_batches(records, slices, active_policy, shuffle_seed, epoch, workers, side_px)


def _iter_batches(records, slices, policy, shuffle_seed, epoch, workers, side_px) -> Iterator[Batch]:
    def assemble(sl: slice, images: list[np.ndarray]) -> Batch:
        chunk = records[sl]
        return Batch(
            images=np.stack(images),
            labels=np.stack([one_hot(r.score) for r in chunk]),
            record_ids=tuple(r.sample_id for r in chunk),
        )

    if workers <= 0:
        for sl in slices:
            images = [
                _load_record(records[pos], pos, side_px, policy, shuffle_seed, epoch)
                for pos in range(sl.start, sl.stop)
            ]
            yield assemble(sl, images)
        return

    with ThreadPoolExecutor(max_workers=workers) as pool:
        def submit(sl: slice):
            return [
                pool.submit(_load_record, records[pos], pos, side_px, policy, shuffle_seed, epoch)
                for pos in range(sl.start, sl.stop)
            ]

        pending = submit(slices[0])
        for i, sl in enumerate(slices):
            current = pending
            if i + 1 < len(slices):
                pending = submit(slices[i + 1])
            yield assemble(sl, [f.result() for f in current])
