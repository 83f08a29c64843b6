"""
图像解码、缩放与归一化

归一化到 [-1, 1]（InceptionV3 预训练时的输入约定）；输入形状固定为 (256, 256, 3)。
"""
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from convoher2.enums import RangeTag
from convoher2.errors import DecodeError, ImageIoError, WrongRangeTag

IMAGE_SIDE_PX = 256
CHANNELS = 3

_RANGES = {
    RangeTag.RAW_0_255: (0.0, 255.0),
    RangeTag.NORMALIZED_M1_1: (-1.0, 1.0),
}


@dataclass(frozen=True)
class ImageTensor:
    """H×W×3 浮点图像 + 取值范围标记；数据只读"""
    data: np.ndarray
    range_tag: RangeTag

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim != 3 or data.shape[2] != CHANNELS:
            raise ValueError(f"图像张量应为 H×W×3，实际 {data.shape}")
        if data is self.data:
            data = data.copy()
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def in_range(self) -> bool:
        lo, hi = _RANGES[self.range_tag]
        return bool(self.data.min() >= lo and self.data.max() <= hi)


def decode_resize(path: str | Path, side_px: int = IMAGE_SIDE_PX) -> ImageTensor:
    """
    解码 PNG/JPEG 并双线性缩放到 side_px × side_px

    Raises:
        ImageIoError: 文件不存在或不可读
        DecodeError: 文件损坏（含截断）
    """
    path = Path(path)
    if not path.is_file():
        raise ImageIoError(f"图像文件不存在: {path}")

    try:
        with Image.open(path) as img:
            img.load()
            rgb = img.convert("RGB")
    except PermissionError as e:
        raise ImageIoError(f"图像文件不可读: {path}") from e
    except (UnidentifiedImageError, OSError, SyntaxError) as e:
        raise DecodeError(f"图像解码失败 {path}: {e}") from e

    if rgb.size != (side_px, side_px):
        rgb = rgb.resize((side_px, side_px), resample=Image.Resampling.BILINEAR)
    return ImageTensor(np.asarray(rgb, dtype=np.float32), RangeTag.RAW_0_255)


def normalize(img: ImageTensor) -> ImageTensor:
    """x ↦ x / 127.5 − 1"""
    if img.range_tag is not RangeTag.RAW_0_255:
        raise WrongRangeTag(f"只能归一化 raw_0_255 图像，实际 {img.range_tag.value}")
    return ImageTensor(img.data / np.float32(127.5) - np.float32(1.0), RangeTag.NORMALIZED_M1_1)


def denormalize(img: ImageTensor) -> ImageTensor:
    """normalize 的逆映射（可视化用）"""
    if img.range_tag is not RangeTag.NORMALIZED_M1_1:
        raise WrongRangeTag(f"只能反归一化 normalized_m1_1 图像，实际 {img.range_tag.value}")
    return ImageTensor((img.data + np.float32(1.0)) * np.float32(127.5), RangeTag.RAW_0_255)


def load_image(path: str | Path, side_px: int = IMAGE_SIDE_PX) -> ImageTensor:
    """decode_resize + normalize"""
    return normalize(decode_resize(path, side_px))
