"""
骨干网络与分类头的结构描述（与具体框架无关）

分类头的层结构与参数量（Keras 口径）：

    inception_v3 (Functional)      (None, 2048)   21,802,784
    flatten                        (None, 2048)            0
    batch_normalization_94         (None, 2048)        8,192
    dense                          (None, 2048)    4,196,352
    batch_normalization_95         (None, 2048)        8,192
    dense_1                        (None, 1536)    3,147,264
    batch_normalization_96         (None, 1536)        6,144
    dense_2                        (None, 1536)    2,360,832
    batch_normalization_97         (None, 1536)        6,144
    dense_3                        (None, 4)           6,148
    Total 31,542,052 / Trainable 9,724,932 / Non-trainable 21,817,120
"""
from dataclasses import dataclass
from enum import Enum
from typing import Optional

from convoher2.enums import NUM_SCORES
from convoher2.errors import ConfigError, InvalidDim

INCEPTION_V3 = "inception_v3"
STUB = "stub"
INCEPTION_V3_FEATURE_DIM = 2048
INCEPTION_V3_PARAMS = 21_802_784  # include_top=False, pooling="avg"
STUB_GRID = 8                     # 桩骨干先平均池化到 8×8×3 再随机投影


class HeadVariant(Enum):
    CONVOHER2 = "convoher2"  # 完整四段 BN-Dense 分类头
    BASELINE = "baseline"    # 原始迁移学习：只替换最后一层 Dense(→4)

    @classmethod
    def parse(cls, token: "str | HeadVariant") -> "HeadVariant":
        if isinstance(token, HeadVariant):
            return token
        try:
            return cls(token.strip().lower())
        except ValueError:
            raise ConfigError(f"未知分类头类型: {token!r}（convoher2 或 baseline）") from None


class LayerKind(Enum):
    FLATTEN = "flatten"
    BATCH_NORM = "batch_norm"
    DENSE = "dense"


@dataclass(frozen=True)
class BackboneSpec:
    architecture_id: str = INCEPTION_V3
    pretrain_corpus: str = "imagenet"
    feature_dim: int = INCEPTION_V3_FEATURE_DIM
    frozen: bool = True
    weights: Optional[str] = "imagenet"  # "imagenet" | 本地权重文件 | None（仅结构，用于参数统计）
    input_side: int = 256
    seed: int = 0                        # 仅桩骨干使用

    def __post_init__(self):
        if self.architecture_id not in (INCEPTION_V3, STUB):
            raise ConfigError(f"不支持的骨干网络: {self.architecture_id!r}")
        if self.architecture_id == INCEPTION_V3 and self.feature_dim != INCEPTION_V3_FEATURE_DIM:
            raise ConfigError(f"inception_v3 的特征维度固定为 2048，实际 {self.feature_dim}")
        min_side = 75 if self.architecture_id == INCEPTION_V3 else STUB_GRID
        if self.input_side < min_side:
            raise ConfigError(f"输入边长过小: {self.input_side}（至少 {min_side}）")

    @classmethod
    def stub(cls, feature_dim: int = INCEPTION_V3_FEATURE_DIM, seed: int = 0, input_side: int = 256) -> "BackboneSpec":
        """固定种子的随机投影骨干，测试时代替预训练 InceptionV3"""
        return cls(
            architecture_id=STUB,
            pretrain_corpus="none",
            feature_dim=feature_dim,
            weights=None,
            input_side=input_side,
            seed=seed,
        )

    @property
    def param_count(self) -> int:
        if self.architecture_id == INCEPTION_V3:
            return INCEPTION_V3_PARAMS
        return STUB_GRID * STUB_GRID * 3 * self.feature_dim

    def to_dict(self) -> dict:
        return {
            "architecture_id": self.architecture_id,
            "pretrain_corpus": self.pretrain_corpus,
            "feature_dim": self.feature_dim,
            "frozen": self.frozen,
            "weights": self.weights,
            "input_side": self.input_side,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BackboneSpec":
        return cls(**data)


@dataclass(frozen=True)
class LayerSpec:
    kind: LayerKind
    name: str
    in_width: int
    out_width: int
    activation: Optional[str] = None  # dense 才有："relu" / "softmax"

    @property
    def param_count(self) -> int:
        if self.kind is LayerKind.DENSE:
            return self.in_width * self.out_width + self.out_width
        if self.kind is LayerKind.BATCH_NORM:
            return 4 * self.out_width  # gamma, beta, moving_mean, moving_variance
        return 0

    @property
    def trainable_count(self) -> int:
        if self.kind is LayerKind.BATCH_NORM:
            return 2 * self.out_width  # 只有 gamma, beta 可训练
        return self.param_count


@dataclass(frozen=True)
class HeadSpec:
    input_dim: int
    variant: HeadVariant
    layers: tuple[LayerSpec, ...]   # 不含 flatten
    flatten: bool = True            # flatten：对已展平的 2048 特征是恒等映射

    @property
    def output_width(self) -> int:
        return self.layers[-1].out_width

    @property
    def all_layers(self) -> tuple[LayerSpec, ...]:
        """含 flatten 的完整层序列（与 summary 的行一一对应）"""
        if not self.flatten:
            return self.layers
        flat = LayerSpec(LayerKind.FLATTEN, "flatten", self.input_dim, self.input_dim)
        return (flat,) + self.layers

    @property
    def param_count(self) -> int:
        return sum(layer.param_count for layer in self.layers)

    @property
    def trainable_count(self) -> int:
        return sum(layer.trainable_count for layer in self.layers)

    def topology(self) -> list[list]:
        return [[layer.kind.value, layer.in_width, layer.out_width] for layer in self.layers]

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "variant": self.variant.value,
            "topology": self.topology(),
        }


def _hidden_width(input_dim: int) -> int:
    # 2048 → 1536，测试用小尺寸按同比例缩放
    return max(1, round(input_dim * 3 / 4))


def build_head(input_dim: int = INCEPTION_V3_FEATURE_DIM, variant: HeadVariant | str = HeadVariant.CONVOHER2) -> HeadSpec:
    """
    构建分类头结构

    convoher2：
        BN(d) → Dense(d→d)+ReLU → BN(d) → Dense(d→¾d)+ReLU → BN(¾d) → Dense(¾d→¾d)+ReLU → BN(¾d) → Dense(¾d→4)+Softmax
    baseline：
        Dense(d→4)+Softmax

    ReLU 作用在隐藏 Dense 的输出上，再进入下一个 BN。

    Raises:
        InvalidDim: input_dim < 1
    """
    if input_dim < 1:
        raise InvalidDim(f"input_dim 必须 ≥ 1，实际 {input_dim}")
    variant = HeadVariant.parse(variant)

    if variant is HeadVariant.BASELINE:
        layers = (LayerSpec(LayerKind.DENSE, "dense", input_dim, NUM_SCORES, "softmax"),)
        return HeadSpec(input_dim=input_dim, variant=variant, layers=layers)

    d1 = input_dim
    d2 = _hidden_width(input_dim)
    layers = (
        LayerSpec(LayerKind.BATCH_NORM, "batch_normalization_94", input_dim, input_dim),
        LayerSpec(LayerKind.DENSE, "dense", input_dim, d1, "relu"),
        LayerSpec(LayerKind.BATCH_NORM, "batch_normalization_95", d1, d1),
        LayerSpec(LayerKind.DENSE, "dense_1", d1, d2, "relu"),
        LayerSpec(LayerKind.BATCH_NORM, "batch_normalization_96", d2, d2),
        LayerSpec(LayerKind.DENSE, "dense_2", d2, d2, "relu"),
        LayerSpec(LayerKind.BATCH_NORM, "batch_normalization_97", d2, d2),
        LayerSpec(LayerKind.DENSE, "dense_3", d2, NUM_SCORES, "softmax"),
    )
    return HeadSpec(input_dim=input_dim, variant=variant, layers=layers)
