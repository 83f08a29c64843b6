"""
pytest 配置文件和共享 fixtures
"""
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from convoher2.data import DatasetManifest, ImageRecord, scan_dataset
from convoher2.enums import Her2Score, Split, StainModality
from convoher2.model import BackboneSpec, build_head, compose

SIDE = 32
TRAIN_PER_CLASS = 8
TEST_PER_CLASS = 2

# 每个评分一种底色，桩骨干的随机投影之后依然线性可分
CLASS_COLORS = {
    Her2Score.ZERO: (230, 220, 225),
    Her2Score.ONE_PLUS: (200, 150, 110),
    Her2Score.TWO_PLUS: (150, 90, 50),
    Her2Score.THREE_PLUS: (80, 40, 20),
}


def class_image(score: Her2Score, index: int, side: int = SIDE) -> np.ndarray:
    """某个评分的合成切片：底色 + 小幅噪声"""
    rng = np.random.default_rng(1000 * score.index + index)
    base = np.array(CLASS_COLORS[score], dtype=np.float64)
    noise = rng.normal(0.0, 6.0, size=(side, side, 3))
    return np.clip(base + noise, 0, 255).astype(np.uint8)


def write_png(path: Path, pixels: np.ndarray) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(pixels).save(path)
    return path


def write_tree(root: Path, train_per_class: int = TRAIN_PER_CLASS, test_per_class: int = TEST_PER_CLASS) -> Path:
    """按 BCI 发行版的目录结构写出合成数据：<root>/train|test/<id>_<split>_<score>.png"""
    counter = 0
    for split, per_class in (("train", train_per_class), ("test", test_per_class)):
        for score in Her2Score:
            for i in range(per_class):
                write_png(root / split / f"{counter:05d}_{split}_{score.label}.png", class_image(score, counter))
                counter += 1
    return root


def make_record(sample_id: str, score: Her2Score, modality=StainModality.IHC, split=Split.TRAIN) -> ImageRecord:
    return ImageRecord(
        path=f"/data/{modality.value}/{split.value}/{sample_id}_{score.label}.png",
        sample_id=sample_id,
        modality=modality,
        score=score,
        split=split,
        source_width_px=1024,
        source_height_px=1024,
    )


@pytest.fixture
def bci_root(tmp_path):
    """IHC 模态的合成数据目录（train 每类 8 张，test 每类 2 张）"""
    return write_tree(tmp_path / "BCI_dataset" / "IHC")


@pytest.fixture
def ihc_manifest(bci_root):
    """扫描合成目录得到的清单"""
    return scan_dataset(bci_root, StainModality.IHC, workers=2)


@pytest.fixture
def small_manifest():
    """不落盘的小清单（12 条，train 8 / test 4）"""
    records = [
        make_record(f"s{i:02d}", Her2Score.from_index(i % 4), split=Split.TRAIN if i < 8 else Split.TEST)
        for i in range(12)
    ]
    return DatasetManifest(modality=StainModality.IHC, records=tuple(records))


@pytest.fixture
def stub_handle():
    """桩骨干（16 维特征，输入 32×32）+ 完整结构分类头"""
    backbone = BackboneSpec.stub(feature_dim=16, input_side=SIDE)
    return compose(backbone, build_head(16), seed=0)


@pytest.fixture
def stub_handle_factory():
    """每次调用都按同一种子重新组合模型（用于比较两次训练）"""
    def factory(variant: str = "convoher2", feature_dim: int = 16, seed: int = 0):
        backbone = BackboneSpec.stub(feature_dim=feature_dim, input_side=SIDE)
        return compose(backbone, build_head(feature_dim, variant), seed=seed)
    return factory
