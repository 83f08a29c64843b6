"""
检查点读写

- ``<name>.weights.h5``：Keras 原生权重文件（只含分类头，骨干冻结不需要保存）
- ``<name>.meta.json``：可移植的元数据（epoch、监控损失、配置哈希、模态、结构）
- 扁平导出 ``.npz``：按层顺序的命名数组，供 numpy 参考实现重放
"""
import json
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from convoher2.enums import StainModality
from convoher2.errors import CorruptCheckpoint, TopologyMismatch
from convoher2.model.network import ModelHandle, ModelMetadata, compose
from convoher2.model.specs import BackboneSpec, HeadSpec, build_head

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "convoher2-checkpoint-v1"
WEIGHTS_SUFFIX = ".weights.h5"
META_SUFFIX = ".meta.json"


@dataclass(frozen=True)
class CheckpointMeta:
    path: str
    epoch: int
    monitored_loss: float
    config_hash: str = ""

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "CheckpointMeta":
        return cls(
            path=str(data["path"]),
            epoch=int(data["epoch"]),
            monitored_loss=float(data["monitored_loss"]),
            config_hash=str(data.get("config_hash", "")),
        )


def weights_path(path: str | Path) -> Path:
    """统一成 ``*.weights.h5``（Keras 3 要求的后缀）"""
    path = Path(path)
    if path.name.endswith(WEIGHTS_SUFFIX):
        return path
    return path.with_name(path.name + WEIGHTS_SUFFIX)


def meta_path(path: str | Path) -> Path:
    path = weights_path(path)
    return path.with_name(path.name[: -len(WEIGHTS_SUFFIX)] + META_SUFFIX)


def save_checkpoint(
    handle: ModelHandle,
    path: str | Path,
    epoch: int = 0,
    monitored_loss: float = math.nan,
) -> CheckpointMeta:
    """
    保存分类头权重 + 元数据（同名文件直接覆盖）

    Returns:
        CheckpointMeta
    """
    target = weights_path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    handle.head.save_weights(str(target))

    meta = handle.metadata
    sidecar = {
        "format": CHECKPOINT_FORMAT,
        "epoch": int(epoch),
        "monitored_loss": float(monitored_loss),
        "config_hash": meta.config_hash,
        "modality": meta.modality.value if meta.modality else None,
        "created_at": meta.created_at,
        "head": handle.head_spec.to_dict(),
        "backbone": handle.backbone_spec.to_dict(),
    }
    meta_path(target).write_text(json.dumps(sidecar, indent=2, ensure_ascii=False), encoding="utf-8")
    logger.debug("检查点已保存: %s (epoch=%d, loss=%.6f)", target, epoch, monitored_loss)
    return CheckpointMeta(str(target), int(epoch), float(monitored_loss), meta.config_hash)


def read_sidecar(path: str | Path) -> dict:
    """读取检查点元数据；缺失或无法解析时抛 CorruptCheckpoint"""
    sidecar = meta_path(path)
    try:
        data = json.loads(sidecar.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise CorruptCheckpoint(f"检查点元数据不可读: {sidecar} ({e})") from e
    if data.get("format") != CHECKPOINT_FORMAT:
        raise CorruptCheckpoint(f"未知的检查点格式: {data.get('format')!r}")
    for key in ("epoch", "monitored_loss", "head", "backbone"):
        if key not in data:
            raise CorruptCheckpoint(f"检查点元数据缺少字段: {key}")
    return data


def read_checkpoint_meta(path: str | Path) -> CheckpointMeta:
    data = read_sidecar(path)
    return CheckpointMeta(
        path=str(weights_path(path)),
        epoch=int(data["epoch"]),
        monitored_loss=float(data["monitored_loss"]),
        config_hash=data.get("config_hash") or "",
    )


def load_checkpoint(
    path: str | Path,
    expected_head: Optional[HeadSpec] = None,
    backbone: Optional[BackboneSpec] = None,
) -> ModelHandle:
    """
    读取检查点并重建 ModelHandle

    Args:
        path: save_checkpoint 写出的权重文件
        expected_head: 期望的分类头结构；与检查点不一致时抛 TopologyMismatch
        backbone: 覆盖元数据中记录的骨干（如测试时换成桩骨干）

    Raises:
        CorruptCheckpoint: 文件缺失、截断或元数据损坏
        TopologyMismatch: 分类头结构不一致
    """
    target = weights_path(path)
    if not target.is_file():
        raise CorruptCheckpoint(f"检查点不存在: {target}")
    data = read_sidecar(target)

    head_info = data["head"]
    try:
        head_spec = build_head(int(head_info["input_dim"]), head_info["variant"])
    except (KeyError, TypeError, ValueError) as e:
        raise CorruptCheckpoint(f"检查点中的分类头描述无效: {e}") from e
    if head_spec.topology() != head_info.get("topology"):
        raise CorruptCheckpoint("检查点中的分类头结构与其类型不符")
    if expected_head is not None and expected_head.topology() != head_spec.topology():
        raise TopologyMismatch(
            f"检查点分类头 ({head_spec.variant.value}, input_dim={head_spec.input_dim}) "
            f"与期望结构 ({expected_head.variant.value}, input_dim={expected_head.input_dim}) 不一致"
        )

    backbone = backbone or BackboneSpec.from_dict(data["backbone"])
    modality = data.get("modality")
    metadata = ModelMetadata(
        config_hash=data.get("config_hash") or "",
        created_at=data.get("created_at") or "",
        modality=StainModality.parse(modality) if modality else None,
    )
    handle = compose(backbone, head_spec, metadata=metadata)

    try:
        handle.head.load_weights(str(target))
    except (OSError, KeyError) as e:
        raise CorruptCheckpoint(f"检查点权重不可读: {target} ({e})") from e
    except ValueError as e:
        raise TopologyMismatch(f"检查点权重与分类头结构不匹配: {e}") from e

    logger.info("检查点已加载: %s (epoch=%s)", target, data["epoch"])
    return handle


# ---------- 扁平导出 ----------

def export_flat_weights(handle: ModelHandle) -> list[tuple[str, np.ndarray]]:
    """
    分类头全部变量，按层顺序排列

    名称格式 ``NN:<层名>/<变量名>``，NN 为层序号（两位），变量名为
    kernel / bias / gamma / beta / moving_mean / moving_variance。
    """
    flat = []
    for i, layer in enumerate(handle.head.layers):
        for v in layer.weights:
            flat.append((f"{i:02d}:{layer.name}/{v.name}", np.array(v.numpy())))
    return flat


def save_flat_export(handle: ModelHandle, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(path, **dict(export_flat_weights(handle)))
    return path if path.suffix == ".npz" else path.with_name(path.name + ".npz")


def load_flat_export(path: str | Path) -> list[tuple[str, np.ndarray]]:
    with np.load(path) as data:
        return [(name, data[name]) for name in sorted(data.files)]
