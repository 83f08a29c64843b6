"""
训练时数据增强

覆盖不同角度与尺度，默认策略：
- 旋转 {0°, 90°, 180°, 270°}
- 水平翻转
- 尺度抖动 [0.9, 1.1]，缩放后中心裁剪（缩小时镜像填充）回原尺寸

rotation_degrees 可以是任意角度：90° 的整数倍部分无损旋转，
余下的角度做双线性旋转后取内接正方形、缩放回原尺寸（不引入填充像素）。

同一 rng 状态 + 同一策略 → 输出逐位一致。
"""
import math
from dataclasses import dataclass

import numpy as np
from PIL import Image

from convoher2.preprocess.image import ImageTensor

# 内接正方形四周再让出的像素，避开插值时混入的边界
ROTATION_MARGIN_PX = 1


@dataclass(frozen=True)
class AugmentPolicy:
    rotation_degrees: tuple[float, ...] = (0, 90, 180, 270)
    horizontal_flip: bool = True
    vertical_flip: bool = False
    scale_jitter: tuple[float, float] = (0.9, 1.1)
    enabled: bool = True

    def __post_init__(self):
        if not self.rotation_degrees:
            raise ValueError("rotation_degrees 不能为空")
        for deg in self.rotation_degrees:
            if not math.isfinite(deg):
                raise ValueError(f"旋转角度必须是有限值，实际 {deg}")
        lo, hi = self.scale_jitter
        if lo <= 0 or lo > hi:
            raise ValueError(f"scale_jitter 区间非法: {self.scale_jitter}")
        if self.enabled and not lo <= 1.0 <= hi:
            raise ValueError(f"启用增强时 scale_jitter 必须包含 1.0，实际 {self.scale_jitter}")

    @classmethod
    def disabled(cls) -> "AugmentPolicy":
        return cls(enabled=False)


def _resize_float(data: np.ndarray, side: int) -> np.ndarray:
    # PIL 的 "F" 模式支持单通道浮点双线性插值
    channels = [
        np.asarray(Image.fromarray(np.ascontiguousarray(data[:, :, c], dtype=np.float32)).resize((side, side), Image.Resampling.BILINEAR))
        for c in range(data.shape[2])
    ]
    return np.stack(channels, axis=2)


def _scale_then_crop(data: np.ndarray, scale: float) -> np.ndarray:
    side = data.shape[0]
    new_side = int(round(side * scale))
    if new_side == side:
        return data

    scaled = _resize_float(data, new_side)
    if new_side > side:
        offset = (new_side - side) // 2
        return scaled[offset:offset + side, offset:offset + side, :]

    before = (side - new_side) // 2
    after = side - new_side - before
    return np.pad(scaled, ((before, after), (before, after), (0, 0)), mode="reflect")


def _rotate_then_crop(data: np.ndarray, degrees: float) -> np.ndarray:
    quarter, rest = divmod(degrees, 90)
    if int(quarter) % 4:
        data = np.rot90(data, k=int(quarter) % 4, axes=(0, 1))
    if rest == 0:
        return data

    side = data.shape[0]
    theta = math.radians(rest)
    inner = int(side / (abs(math.cos(theta)) + abs(math.sin(theta)))) - 2 * ROTATION_MARGIN_PX
    inner = max(inner, 1)
    rotated = np.stack([
        np.asarray(Image.fromarray(np.ascontiguousarray(data[:, :, c], dtype=np.float32)).rotate(rest, Image.Resampling.BILINEAR))
        for c in range(data.shape[2])
    ], axis=2)
    offset = (side - inner) // 2
    return _resize_float(rotated[offset:offset + inner, offset:offset + inner, :], side)


def augment(img: ImageTensor, policy: AugmentPolicy, rng: np.random.Generator) -> ImageTensor:
    """
    对单张图像做一次随机增强（保持形状与 range_tag）

    每次调用固定消耗 4 个随机数（旋转、水平翻转、垂直翻转、尺度），
    因此增强开关不同也不会打乱后续样本的随机流。
    """
    if not policy.enabled:
        return img

    rotation = policy.rotation_degrees[int(rng.integers(len(policy.rotation_degrees)))]
    flip_h = rng.random() < 0.5
    flip_v = rng.random() < 0.5
    scale = float(rng.uniform(*policy.scale_jitter))

    data = _rotate_then_crop(img.data, rotation)
    if policy.horizontal_flip and flip_h:
        data = data[:, ::-1, :]
    if policy.vertical_flip and flip_v:
        data = data[::-1, :, :]
    data = _scale_then_crop(np.ascontiguousarray(data), scale)

    return ImageTensor(data, img.range_tag)
