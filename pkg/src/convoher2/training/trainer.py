"""
训练循环

Adam + 分类交叉熵，只更新分类头（骨干冻结）。
每轮结束后计算监控损失，严格优于历史最优时覆盖写 best.weights.h5，
并在 checkpoints.jsonl 追加一行记录。

两条数据路径的更新语义完全相同：
- train：图像 → 骨干 → 分类头（可做数据增强）
- train_on_cached_features：预先提取的骨干特征 → 分类头（不增强）
每轮样本顺序都由 epoch_order(n, seed, epoch) 决定，因此特征相同时两条路径的轨迹一致。
"""
import logging
import math
import time
from dataclasses import replace
from functools import partial
from pathlib import Path
from typing import Callable, Iterator, Optional

import keras
import numpy as np
import tensorflow as tf
from tqdm import tqdm

from convoher2.data.manifest import DatasetManifest
from convoher2.enums import NUM_SCORES, Split
from convoher2.errors import BackboneMutated, ConfigError, EmptySplit, NonFiniteLoss
from convoher2.model.checkpoint import CheckpointMeta, save_checkpoint
from convoher2.model.features import FeatureStore
from convoher2.model.network import ModelHandle, extract_features
from convoher2.preprocess.augment import AugmentPolicy
from convoher2.preprocess.batches import batch_slices, epoch_order, make_batches
from convoher2.training.config import TrainConfig
from convoher2.training.evaluate import SplitScore, evaluate_features, evaluate_split
from convoher2.training.history import EpochMetrics, JsonlWriter, TrainHistory

logger = logging.getLogger(__name__)

BEST_CHECKPOINT = "best.weights.h5"
HISTORY_FILE = "history.jsonl"
CHECKPOINT_LOG = "checkpoints.jsonl"

# 每轮产出 (特征, one-hot 标签) 批次
EpochBatches = Callable[[int], Iterator[tuple[np.ndarray, np.ndarray]]]


class Trainer:
    """
    单个训练控制器，独占 ModelHandle

    Example:
        >>> trainer = Trainer(handle, TrainConfig(epochs=5), out_dir="runs/ihc")
        >>> history, best = trainer.train(manifest, manifest)
    """

    def __init__(
        self,
        handle: ModelHandle,
        config: TrainConfig,
        out_dir: str | Path,
        config_hash: str = "",
        progress: bool = True,
        workers: int = 4,
    ):
        self.handle = handle
        self.config = config
        self.out_dir = Path(out_dir)
        self.progress = progress
        self.workers = workers

        handle.metadata = replace(
            handle.metadata,
            config_hash=config_hash or handle.metadata.config_hash,
            modality=config.modality or handle.metadata.modality,
        )

        dtype = handle.head.layers[-1].compute_dtype
        self._dtype = dtype
        self._loss = keras.losses.CategoricalCrossentropy(dtype=dtype)
        self._optimizer = keras.optimizers.Adam(
            learning_rate=config.learning_rate,
            beta_1=config.beta1,
            beta_2=config.beta2,
            epsilon=config.adam_epsilon,
        )

    # ---------- 单步 ----------

    def _train_step(self, features: np.ndarray, labels: np.ndarray) -> tuple[float, int]:
        head = self.handle.head
        x = tf.constant(features, dtype=self._dtype)
        t = tf.constant(labels, dtype=self._dtype)
        with tf.GradientTape() as tape:
            probs = head(x, training=True)
            loss = self._loss(t, probs)
        grads = tape.gradient(loss, head.trainable_variables)
        self._optimizer.apply_gradients(zip(grads, head.trainable_variables))
        hits = int(np.sum(np.argmax(np.asarray(probs), axis=1) == np.argmax(labels, axis=1)))
        return float(loss), hits

    # ---------- 公共入口 ----------

    def train(
        self,
        train_manifest: DatasetManifest,
        val_manifest: Optional[DatasetManifest] = None,
        policy: Optional[AugmentPolicy] = None,
    ) -> tuple[TrainHistory, Optional[CheckpointMeta]]:
        """
        图像路径训练

        Args:
            train_manifest: 取其中 train 划分
            val_manifest: 取其中 test 划分做验证（checkpoint_monitor=val_loss 时必需）
            policy: 数据增强策略，None 不增强

        Raises:
            EmptySplit: 训练集或验证集为空
            NonFiniteLoss: 损失出现 NaN / Inf
        """
        n_train = len(train_manifest.select(Split.TRAIN))
        if n_train == 0:
            raise EmptySplit("训练集为空")
        side = self.handle.backbone_spec.input_side
        cfg = self.config

        def batches(epoch: int):
            for batch in make_batches(
                train_manifest, Split.TRAIN, cfg.batch_size, shuffle_seed=cfg.seed,
                policy=policy, epoch=epoch, workers=self.workers, side_px=side,
            ):
                yield extract_features(self.handle, batch), batch.labels

        validate: Optional[Callable[[], SplitScore]] = None
        if val_manifest is not None:
            if not val_manifest.select(Split.TEST):
                raise EmptySplit("验证集为空")
            validate = partial(evaluate_split, self.handle, val_manifest, Split.TEST, workers=self.workers)

        return self._fit(batches, n_train, validate)

    def train_on_cached_features(
        self,
        store: FeatureStore,
        train_manifest: DatasetManifest,
        val_manifest: Optional[DatasetManifest] = None,
    ) -> tuple[TrainHistory, Optional[CheckpointMeta]]:
        """
        特征缓存路径训练（不做数据增强）

        Raises:
            MissingFeature: 缓存未覆盖训练/验证样本
            EmptySplit: 训练集或验证集为空
        """
        records = train_manifest.select(Split.TRAIN)
        if not records:
            raise EmptySplit("训练集为空")
        ids = [r.sample_id for r in records]
        features = store.gather(ids)
        labels = np.eye(NUM_SCORES, dtype=np.float32)[[r.score.index for r in records]]
        cfg = self.config

        def batches(epoch: int):
            order = epoch_order(len(ids), cfg.seed, epoch)
            for sl in batch_slices(len(ids), cfg.batch_size):
                chosen = order[sl]
                yield features[chosen], labels[chosen]

        validate: Optional[Callable[[], SplitScore]] = None
        if val_manifest is not None:
            val_records = val_manifest.select(Split.TEST)
            if not val_records:
                raise EmptySplit("验证集为空")
            store.gather([r.sample_id for r in val_records])
            validate = partial(evaluate_features, self.handle, store, val_manifest, Split.TEST)

        return self._fit(batches, len(ids), validate)

    # ---------- 主循环 ----------

    def _fit(
        self,
        batches: EpochBatches,
        n_train: int,
        validate: Optional[Callable[[], SplitScore]],
    ) -> tuple[TrainHistory, Optional[CheckpointMeta]]:
        cfg = self.config
        if cfg.checkpoint_monitor == "val_loss" and validate is None:
            raise ConfigError("checkpoint_monitor=val_loss 需要验证集（或改用 train_loss）")

        keras.utils.set_random_seed(cfg.seed)
        tf.config.experimental.enable_op_determinism()

        self.out_dir.mkdir(parents=True, exist_ok=True)
        history = TrainHistory(monitor=cfg.checkpoint_monitor)
        best: Optional[CheckpointMeta] = None
        best_loss = math.inf
        backbone_before = self.handle.backbone_checksum()

        logger.info(
            "开始训练: %d 个样本, %d 轮, 每轮 %d 步 (lr=%g, batch=%d, monitor=%s)",
            n_train, cfg.epochs, cfg.steps_per_epoch(n_train), cfg.learning_rate, cfg.batch_size, cfg.checkpoint_monitor,
        )

        with JsonlWriter(self.out_dir / HISTORY_FILE) as history_log, \
                JsonlWriter(self.out_dir / CHECKPOINT_LOG) as checkpoint_log:
            epochs = tqdm(range(1, cfg.epochs + 1), desc="训练", unit="epoch", disable=not self.progress)
            for epoch in epochs:
                started = time.perf_counter()
                loss_sum, hits, seen = 0.0, 0, 0
                for features, labels in batches(epoch):
                    loss, batch_hits = self._train_step(features, labels)
                    if not math.isfinite(loss):
                        raise NonFiniteLoss(
                            f"第 {epoch} 轮出现非有限损失 ({loss})，训练中止", epoch=epoch, last_checkpoint=best,
                        )
                    n = len(labels)
                    loss_sum += loss * n
                    hits += batch_hits
                    seen += n

                val = validate() if validate is not None else None
                metrics = EpochMetrics(
                    epoch=epoch,
                    train_loss=loss_sum / seen,
                    train_accuracy=hits / seen,
                    val_loss=val.loss if val else None,
                    val_accuracy=val.accuracy if val else None,
                    wall_seconds=time.perf_counter() - started,
                )
                history.append(metrics)
                history_log.write(metrics.to_json())

                monitored = metrics.monitored(cfg.checkpoint_monitor)
                if not math.isfinite(monitored):
                    raise NonFiniteLoss(f"第 {epoch} 轮监控损失非有限 ({monitored})", epoch=epoch, last_checkpoint=best)
                if monitored < best_loss:
                    best_loss = monitored
                    best = save_checkpoint(self.handle, self.out_dir / BEST_CHECKPOINT, epoch, monitored)
                    history.checkpoints.append(best)
                    checkpoint_log.write(best.to_dict())

                epochs.set_postfix(loss=f"{metrics.train_loss:.4f}", acc=f"{metrics.train_accuracy:.3f}")
                logger.info(
                    "epoch %d/%d: loss=%.4f acc=%.4f val_loss=%s val_acc=%s%s",
                    epoch, cfg.epochs, metrics.train_loss, metrics.train_accuracy,
                    f"{metrics.val_loss:.4f}" if val else "-",
                    f"{metrics.val_accuracy:.4f}" if val else "-",
                    " *" if best is not None and best.epoch == epoch else "",
                )

        if self.handle.backbone_checksum() != backbone_before:
            raise BackboneMutated("训练后骨干参数发生变化")
        return history, best


def train(
    handle: ModelHandle,
    train_manifest: DatasetManifest,
    val_manifest: Optional[DatasetManifest],
    config: TrainConfig,
    out_dir: str | Path,
    policy: Optional[AugmentPolicy] = None,
    config_hash: str = "",
    progress: bool = True,
    workers: int = 4,
) -> tuple[TrainHistory, Optional[CheckpointMeta]]:
    trainer = Trainer(handle, config, out_dir, config_hash=config_hash, progress=progress, workers=workers)
    return trainer.train(train_manifest, val_manifest, policy)


def train_on_cached_features(
    handle: ModelHandle,
    store: FeatureStore,
    train_manifest: DatasetManifest,
    val_manifest: Optional[DatasetManifest],
    config: TrainConfig,
    out_dir: str | Path,
    config_hash: str = "",
    progress: bool = True,
) -> tuple[TrainHistory, Optional[CheckpointMeta]]:
    trainer = Trainer(handle, config, out_dir, config_hash=config_hash, progress=progress)
    return trainer.train_on_cached_features(store, train_manifest, val_manifest)
