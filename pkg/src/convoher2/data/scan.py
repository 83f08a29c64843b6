"""
扫描数据目录，生成清单

BCI 发行版的目录结构为 ``<root>/train/*.png`` 与 ``<root>/test/*.png``，
存在预定义 train/test 子目录时直接沿用其划分，否则全部标记为 unsplit。
"""
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional

from PIL import Image, UnidentifiedImageError

from convoher2.data.labels import DEFAULT_LABEL_PATTERN, parse_label, sample_id_from_filename
from convoher2.data.manifest import DatasetManifest, ImageRecord
from convoher2.enums import Split, StainModality
from convoher2.errors import AmbiguousLabel, DatasetIoError, EmptyDataset, NoLabelToken

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg"}
SPLIT_DIRS = {"train": Split.TRAIN, "test": Split.TEST}


def _split_from_path(relative: Path) -> Split:
    for part in relative.parts[:-1]:
        split = SPLIT_DIRS.get(part.lower())
        if split is not None:
            return split
    return Split.UNSPLIT


def _list_images(root: Path) -> list[Path]:
    def on_error(err: OSError):
        raise DatasetIoError(f"无法读取目录 {err.filename}: {err.strerror}") from err

    found = []
    for dirpath, _, filenames in os.walk(root, onerror=on_error):
        for name in filenames:
            if Path(name).suffix.lower() in IMAGE_SUFFIXES:
                found.append(Path(dirpath) / name)
    return found


def _read_size(path: Path) -> Optional[tuple[int, int]]:
    # 只读文件头，不解码像素
    try:
        with Image.open(path) as img:
            return img.size
    except (OSError, UnidentifiedImageError) as e:
        logger.warning("无法读取图像 %s: %s", path, e)
        return None


def scan_dataset(
    root: str | Path,
    modality: StainModality,
    pattern: str = DEFAULT_LABEL_PATTERN,
    seed: int = 0,
    workers: int = 8,
) -> DatasetManifest:
    """
    扫描 root 下所有图像，解析标签并生成清单

    Args:
        root: 某一模态的数据根目录（如 BCI_dataset/IHC）
        modality: 染色方式
        pattern: 标签正则（见 parse_label）
        seed: 写入清单头，供后续划分使用
        workers: 读取图像尺寸的线程数；记录最终按路径排序，结果与线程数无关

    Raises:
        DatasetIoError: root 不存在或不可读
        EmptyDataset: 没有任何可解析图像
    """
    root = Path(root)
    if not root.is_dir():
        raise DatasetIoError(f"数据目录不存在: {root}")

    candidates = []
    skipped = 0
    for path in _list_images(root):
        try:
            score = parse_label(path.name, pattern)
            sample_id = sample_id_from_filename(path.name, pattern)
        except (NoLabelToken, AmbiguousLabel) as e:
            logger.debug("跳过 %s: %s", path, e)
            skipped += 1
            continue
        candidates.append((path, score, sample_id))

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        sizes = list(pool.map(lambda c: _read_size(c[0]), candidates))

    records = []
    for (path, score, sample_id), size in zip(candidates, sizes):
        if size is None:
            skipped += 1
            continue
        width, height = size
        records.append(ImageRecord(
            path=path.as_posix(),
            sample_id=sample_id,
            modality=modality,
            score=score,
            split=_split_from_path(path.relative_to(root)),
            source_width_px=width,
            source_height_px=height,
        ))

    if not records:
        raise EmptyDataset(f"{root} 中没有可解析的图像（跳过 {skipped} 个文件）")

    if skipped:
        logger.warning("%s: 跳过 %d 个无法解析的文件", root, skipped)

    manifest = DatasetManifest(
        modality=modality,
        records=tuple(records),
        seed=seed,
        pattern=pattern,
        skipped=skipped,
    )
    logger.info(
        "扫描完成 %s: %d 张图像, 类别分布 %s, 划分 %s",
        root, len(manifest), manifest.class_counts, manifest.split_counts,
    )
    return manifest
