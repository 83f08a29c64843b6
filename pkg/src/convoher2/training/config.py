"""
训练配置与配置文件解析

配置文件为扁平的 ``key = value`` 文本（``#`` 开头的整行注释、空行允许）。
优先级：命令行参数 > 环境变量 CONVOHER2_<KEY> > 配置文件 > 默认值。
"""
import hashlib
import logging
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Callable, Mapping, Optional

from convoher2.data.labels import DEFAULT_LABEL_PATTERN
from convoher2.enums import StainModality
from convoher2.errors import ConfigError, ConfigTypeError, UnknownKey
from convoher2.model.specs import INCEPTION_V3, STUB, HeadVariant

logger = logging.getLogger(__name__)

ENV_PREFIX = "CONVOHER2_"
MONITORS = ("train_loss", "val_loss")
# 运行时选项，不影响训练结果，不计入 config_hash
HASH_EXCLUDED = frozenset({"progress", "log_level", "workers"})


@dataclass(frozen=True)
class TrainConfig:
    """训练超参数（默认：Adam, lr 1e-4, batch 256, 200 epochs）"""
    learning_rate: float = 1e-4
    batch_size: int = 256
    epochs: int = 200
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    adam_epsilon: float = 1e-7
    loss: str = "categorical_cross_entropy"
    seed: int = 0
    checkpoint_monitor: str = "val_loss"
    modality: Optional[StainModality] = None

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate 必须 > 0，实际 {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size 必须 ≥ 1，实际 {self.batch_size}")
        if self.epochs < 0:
            raise ConfigError(f"epochs 必须 ≥ 0，实际 {self.epochs}")
        if self.optimizer != "adam":
            raise ConfigError(f"只支持 adam 优化器，实际 {self.optimizer!r}")
        if self.loss != "categorical_cross_entropy":
            raise ConfigError(f"只支持 categorical_cross_entropy，实际 {self.loss!r}")
        if self.checkpoint_monitor not in MONITORS:
            raise ConfigError(f"checkpoint_monitor 必须是 {MONITORS} 之一，实际 {self.checkpoint_monitor!r}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1 and self.adam_epsilon > 0):
            raise ConfigError("Adam 参数非法")

    def steps_per_epoch(self, n_train: int) -> int:
        """每轮优化步数（最后一个不满批也算一步）"""
        return -(-n_train // self.batch_size)


@dataclass(frozen=True)
class PipelineSettings:
    """数据、模型结构与运行时选项"""
    data_root: Optional[str] = None
    out_dir: str = "runs"
    manifest: Optional[str] = None
    feature_cache: Optional[str] = None
    label_pattern: str = DEFAULT_LABEL_PATTERN
    head_variant: str = HeadVariant.CONVOHER2.value
    backbone: str = INCEPTION_V3
    backbone_weights: Optional[str] = "imagenet"
    augment: bool = True
    workers: int = 4
    train_fraction: float = 0.8
    progress: bool = True
    log_level: str = "INFO"

    def __post_init__(self):
        HeadVariant.parse(self.head_variant)
        if self.backbone not in (INCEPTION_V3, STUB):
            raise ConfigError(f"backbone 必须是 {INCEPTION_V3} 或 {STUB}，实际 {self.backbone!r}")
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError(f"train_fraction 必须在 (0, 1)，实际 {self.train_fraction}")
        if self.workers < 0:
            raise ConfigError(f"workers 不能为负，实际 {self.workers}")


def _parse_bool(text: str) -> bool:
    token = text.strip().lower()
    if token in ("1", "true", "yes", "on"):
        return True
    if token in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"不是布尔值: {text!r}")


def _parse_optional_str(text: str) -> Optional[str]:
    token = text.strip()
    return None if token.lower() in ("", "none", "null") else token


def _parse_modality(text: str) -> Optional[StainModality]:
    token = _parse_optional_str(text)
    return None if token is None else StainModality.parse(token)


_PARSERS: dict[Any, Callable[[str], Any]] = {
    int: int,
    float: float,
    bool: _parse_bool,
    str: str.strip,
    Optional[str]: _parse_optional_str,
    Optional[StainModality]: _parse_modality,
}


def _key_types() -> dict[str, tuple[str, Any]]:
    """key → (所属对象, 字段类型)"""
    table = {}
    for owner, cls in (("train", TrainConfig), ("pipeline", PipelineSettings)):
        for f in fields(cls):
            table[f.name] = (owner, f.type)
    return table


KEY_TYPES = _key_types()


def _convert(key: str, value: Any) -> Any:
    target = KEY_TYPES[key][1]
    if not isinstance(value, str):
        if target is float and isinstance(value, int) and not isinstance(value, bool):
            return float(value)
        return value
    try:
        return _PARSERS[target](value)
    except ValueError as e:
        raise ConfigTypeError(f"配置项 {key} 的值无法解析: {value!r}") from e


def _canonical(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, StainModality):
        return value.value
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_config_text(text: str, origin: str = "<config>") -> dict[str, str]:
    """解析 key = value 文本，返回原始字符串值"""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{origin}:{lineno}: 应为 key = value，实际 {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in KEY_TYPES:
            raise UnknownKey(f"{origin}:{lineno}: 未知配置项 {key!r}")
        values[key] = value
    return values


@dataclass(frozen=True)
class ResolvedConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    pipeline: PipelineSettings = field(default_factory=PipelineSettings)
    sources: Mapping[str, str] = field(default_factory=dict)  # key → default / file / env / flag

    def as_dict(self) -> dict[str, Any]:
        values = {f.name: getattr(self.train, f.name) for f in fields(TrainConfig)}
        values.update({f.name: getattr(self.pipeline, f.name) for f in fields(PipelineSettings)})
        return values

    def render(self) -> str:
        """逐行 key = value（按键排序），并标注来源"""
        width = max(len(k) for k in KEY_TYPES)
        return "\n".join(
            f"{key:<{width}} = {_canonical(value)}  [{self.sources.get(key, 'default')}]"
            for key, value in sorted(self.as_dict().items())
        )

    @property
    def config_hash(self) -> str:
        """SHA-256(排序后的 key=value 行) 的前 16 位十六进制"""
        lines = sorted(
            f"{key}={_canonical(value)}"
            for key, value in self.as_dict().items()
            if key not in HASH_EXCLUDED
        )
        return hashlib.sha256("\n".join(lines).encode("utf-8")).hexdigest()[:16]


def load_config(
    path: Optional[str | Path] = None,
    env: Optional[Mapping[str, str]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> ResolvedConfig:
    """
    解析配置

    Args:
        path: 配置文件路径（None 表示只用默认值）
        env: 环境变量（默认 os.environ）；只读取 CONVOHER2_ 前缀，未知键记录警告后忽略
        overrides: 命令行参数，值为 None 的键视为未指定

    Raises:
        ConfigError: 配置文件不存在或格式错误、取值非法
        UnknownKey: 配置文件或 overrides 中出现未知键
        ConfigTypeError: 值无法解析

    Example:
        >>> load_config(env={"CONVOHER2_EPOCHS": "5"}).train.epochs
        5
    """
    merged: dict[str, Any] = {}
    sources: dict[str, str] = {}

    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"配置文件不存在: {path}")
        for key, value in parse_config_text(path.read_text(encoding="utf-8"), str(path)).items():
            merged[key] = _convert(key, value)
            sources[key] = "file"

    env = os.environ if env is None else env
    for name, value in env.items():
        if not name.startswith(ENV_PREFIX):
            continue
        key = name[len(ENV_PREFIX):].lower()
        if key not in KEY_TYPES:
            logger.warning("忽略未知环境变量 %s", name)
            continue
        merged[key] = _convert(key, value)
        sources[key] = "env"

    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in KEY_TYPES:
            raise UnknownKey(f"未知配置项 {key!r}")
        merged[key] = _convert(key, value)
        sources[key] = "flag"

    train_values = {k: v for k, v in merged.items() if KEY_TYPES[k][0] == "train"}
    pipeline_values = {k: v for k, v in merged.items() if KEY_TYPES[k][0] == "pipeline"}
    return ResolvedConfig(
        train=replace(TrainConfig(), **train_values),
        pipeline=replace(PipelineSettings(), **pipeline_values),
        sources=sources,
    )
