"""
参数统计

输出格式与 Keras ``model.summary()`` 一致：每层一行（层名、输出形状、参数量），
末尾三行 Total / Trainable / Non-trainable。
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from convoher2.model.network import ModelHandle
from convoher2.model.specs import INCEPTION_V3, BackboneSpec, HeadSpec


@dataclass(frozen=True)
class LayerCount:
    layer_name: str
    output_shape: tuple[Optional[int], ...]
    param_count: int
    trainable_count: int

    def __post_init__(self):
        if not 0 <= self.trainable_count <= self.param_count:
            raise ValueError(f"{self.layer_name}: trainable {self.trainable_count} 超出 total {self.param_count}")

    @property
    def shape_str(self) -> str:
        return "(" + ", ".join("None" if d is None else str(d) for d in self.output_shape) + ")"


@dataclass(frozen=True)
class ParamCount:
    total: int
    trainable: int
    non_trainable: int
    layers: tuple[LayerCount, ...]

    def as_tuple(self) -> tuple[int, int, int]:
        return self.total, self.trainable, self.non_trainable

    def summary(self) -> str:
        """类 model.summary() 的文本表"""
        name_w = max(len("Layer"), *(len(r.layer_name) for r in self.layers)) + 2
        shape_w = max(len("Output Shape"), *(len(r.shape_str) for r in self.layers)) + 2
        lines = [
            f"{'Layer':<{name_w}}{'Output Shape':<{shape_w}}{'Param #':>12}",
            "=" * (name_w + shape_w + 12),
        ]
        for row in self.layers:
            lines.append(f"{row.layer_name:<{name_w}}{row.shape_str:<{shape_w}}{row.param_count:>12,}")
        lines += [
            "=" * (name_w + shape_w + 12),
            f"Total params: {self.total:,}",
            f"Trainable params: {self.trainable:,}",
            f"Non-trainable params: {self.non_trainable:,}",
        ]
        return "\n".join(lines)


def _backbone_row_name(spec: BackboneSpec) -> str:
    return INCEPTION_V3 if spec.architecture_id == INCEPTION_V3 else "stub_backbone"


def _finish(rows: list[LayerCount]) -> ParamCount:
    total = sum(r.param_count for r in rows)
    trainable = sum(r.trainable_count for r in rows)
    return ParamCount(total=total, trainable=trainable, non_trainable=total - trainable, layers=tuple(rows))


def _count_spec(head: HeadSpec, backbone: Optional[BackboneSpec]) -> ParamCount:
    rows: list[LayerCount] = []
    if backbone is not None:
        rows.append(LayerCount(_backbone_row_name(backbone), (None, backbone.feature_dim), backbone.param_count, 0))
    for layer in head.all_layers:
        rows.append(LayerCount(layer.name, (None, layer.out_width), layer.param_count, layer.trainable_count))
    return _finish(rows)


def _n_elements(variables) -> int:
    return int(sum(np.prod(v.shape) for v in variables))


def _count_handle(handle: ModelHandle) -> ParamCount:
    backbone = handle.backbone
    rows = [LayerCount(
        _backbone_row_name(handle.backbone_spec),
        (None, handle.backbone_spec.feature_dim),
        _n_elements(backbone.weights),
        _n_elements(backbone.trainable_weights),
    )]
    for spec_layer in handle.head_spec.all_layers:
        layer = handle.head.get_layer(spec_layer.name)
        rows.append(LayerCount(
            spec_layer.name,
            (None, spec_layer.out_width),
            _n_elements(layer.weights),
            _n_elements(layer.trainable_weights),
        ))
    return _finish(rows)


def count_params(model: ModelHandle | HeadSpec, backbone: Optional[BackboneSpec] = None) -> ParamCount:
    """
    精确统计参数量

    Args:
        model: 已组合的 ModelHandle（按实际变量计数），或 HeadSpec（按公式计数）
        backbone: model 为 HeadSpec 时可选的骨干结构，用于补上骨干那一行

    Returns:
        ParamCount，骨干 + 分类头每层一行

    Example:
        >>> count_params(build_head(2048), BackboneSpec()).as_tuple()
        (31542052, 9724932, 21817120)
    """
    if isinstance(model, ModelHandle):
        return _count_handle(model)
    return _count_spec(model, backbone)
