"""
骨干特征缓存

骨干冻结 ⇒ 同一图像的特征在整个训练过程中不变，提前算好一次即可。
持久化为 .npz：ids / features / modality / backbone。
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np
from tqdm import tqdm

from convoher2.data.manifest import DatasetManifest
from convoher2.enums import StainModality
from convoher2.errors import CorruptArtifact, MissingFeature, ShapeError
from convoher2.model.network import ModelHandle, extract_features
from convoher2.preprocess.batches import batch_slices
from convoher2.preprocess.image import load_image

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class FeatureStore:
    ids: tuple[str, ...]
    features: np.ndarray              # N×D float32
    modality: Optional[StainModality] = None
    backbone: str = ""
    _index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float32)
        if features.ndim != 2 or features.shape[0] != len(self.ids):
            raise ShapeError(f"特征矩阵应为 {len(self.ids)}×D，实际 {features.shape}")
        index = {sample_id: i for i, sample_id in enumerate(self.ids)}
        if len(index) != len(self.ids):
            raise ValueError("特征缓存中存在重复的 sample_id")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "_index", index)

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, sample_id: str) -> bool:
        return sample_id in self._index

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def missing(self, sample_ids: Iterable[str]) -> list[str]:
        return [s for s in sample_ids if s not in self._index]

    def covers(self, sample_ids: Iterable[str]) -> bool:
        return not self.missing(sample_ids)

    def get(self, sample_id: str) -> np.ndarray:
        try:
            return self.features[self._index[sample_id]]
        except KeyError:
            raise MissingFeature(f"特征缓存中没有样本: {sample_id}") from None

    def gather(self, sample_ids: list[str]) -> np.ndarray:
        """按给定顺序取出特征矩阵；任一样本缺失即抛 MissingFeature"""
        missing = self.missing(sample_ids)
        if missing:
            preview = ", ".join(missing[:5])
            raise MissingFeature(f"特征缓存缺少 {len(missing)} 个样本: {preview}{' …' if len(missing) > 5 else ''}")
        return self.features[[self._index[s] for s in sample_ids]]

    def merge(self, other: "FeatureStore") -> "FeatureStore":
        """合并两个缓存；同一 sample_id 以 other 为准"""
        if len(self) and len(other) and self.dim != other.dim:
            raise ShapeError(f"特征维度不一致: {self.dim} vs {other.dim}")
        rows = {s: self.features[i] for s, i in self._index.items()}
        rows.update({s: other.features[i] for s, i in other._index.items()})
        ids = tuple(rows)
        dim = other.dim if len(other) else self.dim
        matrix = np.stack([rows[s] for s in ids]) if ids else np.zeros((0, dim), dtype=np.float32)
        return FeatureStore(ids, matrix, other.modality or self.modality, other.backbone or self.backbone)

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savez(
            path,
            ids=np.array(self.ids, dtype=str),
            features=self.features,
            modality=np.array(self.modality.value if self.modality else ""),
            backbone=np.array(self.backbone),
        )
        return path if path.suffix == ".npz" else path.with_name(path.name + ".npz")

    @classmethod
    def load(cls, path: str | Path) -> "FeatureStore":
        try:
            with np.load(path) as data:
                modality = str(data["modality"])
                return cls(
                    ids=tuple(str(s) for s in data["ids"]),
                    features=data["features"],
                    modality=StainModality.parse(modality) if modality else None,
                    backbone=str(data["backbone"]),
                )
        except (OSError, KeyError, ValueError) as e:
            raise CorruptArtifact(f"特征缓存不可读: {path} ({e})") from e

    @classmethod
    def empty(cls, dim: int = 2048) -> "FeatureStore":
        return cls((), np.zeros((0, dim), dtype=np.float32))


def build_feature_store(
    handle: ModelHandle,
    manifest: DatasetManifest,
    batch_size: int = 64,
    workers: int = 4,
    progress: bool = True,
) -> FeatureStore:
    """
    按清单顺序为所有记录（不分划分、不增强）提取骨干特征

    Args:
        handle: 已组合的模型
        manifest: 数据清单
        batch_size: 每次送入骨干的图像数
        workers: 解码线程数
        progress: 是否显示进度条
    """
    records = manifest.records
    side = handle.backbone_spec.input_side
    chunks: list[np.ndarray] = []

    def decode(path: str) -> np.ndarray:
        return load_image(path, side).data

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        for sl in tqdm(batch_slices(len(records), batch_size), desc="提取特征", unit="batch", disable=not progress):
            images = np.stack(list(pool.map(decode, [r.path for r in records[sl]])))
            chunks.append(extract_features(handle, images))

    features = np.concatenate(chunks) if chunks else np.zeros((0, handle.feature_dim), dtype=np.float32)
    store = FeatureStore(
        ids=tuple(r.sample_id for r in records),
        features=features,
        modality=manifest.modality,
        backbone=handle.backbone_spec.architecture_id,
    )
    logger.info("特征提取完成: %d 条, 维度 %d", len(store), store.dim)
    return store
