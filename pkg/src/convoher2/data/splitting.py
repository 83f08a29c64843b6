"""
按比例划分 train / test

BCI 自带的 train/test 目录优先（3896/977 是发行版划分，而非 4873 的精确 80%），
比例划分只作为其他数据集的后备方案。
"""
import logging
import math
from dataclasses import replace

import numpy as np

from convoher2.data.manifest import DatasetManifest
from convoher2.enums import NUM_SCORES, Split
from convoher2.errors import AlreadySplit

logger = logging.getLogger(__name__)


def allocate_stratified(category_sizes: list[int], train_fraction: float) -> list[int]:
    """
    分层分配每个类别的训练样本数

    每类取 floor(fraction × size) 或 ceil(fraction × size)；
    剩余名额按小数部分从大到小分配（同分按类别下标），使总数等于 round(fraction × N)。
    """
    exact = [train_fraction * n for n in category_sizes]
    alloc = [math.floor(x) for x in exact]
    target = round(train_fraction * sum(category_sizes))
    remaining = target - sum(alloc)

    order = sorted(range(len(category_sizes)), key=lambda k: (-(exact[k] - alloc[k]), k))
    for k in order:
        if remaining <= 0:
            break
        if alloc[k] < category_sizes[k] and exact[k] > alloc[k]:
            alloc[k] += 1
            remaining -= 1
    return alloc


def split_manifest(
    manifest: DatasetManifest,
    train_fraction: float = 0.8,
    seed: int = 0,
    stratified: bool = True,
    force: bool = False,
) -> DatasetManifest:
    """
    确定性地划分 train / test

    Args:
        manifest: 待划分清单
        train_fraction: 训练集比例，(0, 1) 开区间
        seed: 随机种子，相同种子得到完全相同的划分
        stratified: 是否按类别分层
        force: 覆盖已有的预定义划分

    Raises:
        ValueError: train_fraction 越界或清单为空
        AlreadySplit: 清单已带划分且 force=False
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction 必须在 (0, 1) 之间，实际 {train_fraction}")
    if len(manifest) == 0:
        raise ValueError("清单为空，无法划分")
    if manifest.is_split and not force:
        raise AlreadySplit("清单已有预定义 train/test 划分（如需覆盖请设置 force）")

    records = manifest.records
    rng = np.random.default_rng(seed)
    train_idx: set[int] = set()

    if stratified:
        by_category: list[list[int]] = [[] for _ in range(NUM_SCORES)]
        for i, record in enumerate(records):
            by_category[record.score.index].append(i)

        alloc = allocate_stratified([len(c) for c in by_category], train_fraction)
        for indices, n_train in zip(by_category, alloc):
            if not indices:
                continue
            chosen = rng.permutation(len(indices))[:n_train]
            train_idx.update(indices[j] for j in chosen)
    else:
        n_train = round(train_fraction * len(records))
        train_idx.update(int(j) for j in rng.permutation(len(records))[:n_train])

    new_records = [
        replace(record, split=Split.TRAIN if i in train_idx else Split.TEST)
        for i, record in enumerate(records)
    ]
    result = manifest.with_records(new_records, seed=seed)
    logger.info("划分完成: %s（seed=%d, stratified=%s）", result.split_counts, seed, stratified)
    return result
