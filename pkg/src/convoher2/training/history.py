"""
逐轮训练指标与检查点记录

- history.jsonl：每轮一行 EpochMetrics，逐轮追加并 flush（可在训练时 tail）
- checkpoints.jsonl：每次写检查点一行 CheckpointMeta
"""
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import pandas as pd

from convoher2.errors import CorruptArtifact, EmptyHistory
from convoher2.model.checkpoint import CheckpointMeta


@dataclass(frozen=True)
class EpochMetrics:
    epoch: int                      # 从 1 开始
    train_loss: float
    train_accuracy: float
    val_loss: Optional[float] = None
    val_accuracy: Optional[float] = None
    wall_seconds: float = 0.0

    def __post_init__(self):
        for name in ("train_accuracy", "val_accuracy"):
            value = getattr(self, name)
            if value is not None and not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} 应在 [0, 1]，实际 {value}")

    def monitored(self, monitor: str) -> float:
        value = getattr(self, monitor)
        if value is None:
            raise ValueError(f"第 {self.epoch} 轮没有 {monitor}")
        return value

    def to_json(self) -> str:
        return json.dumps(asdict(self))

    @classmethod
    def from_json(cls, line: str) -> "EpochMetrics":
        return cls(**json.loads(line))


@dataclass
class TrainHistory:
    monitor: str = "val_loss"
    epochs: list[EpochMetrics] = field(default_factory=list)
    checkpoints: list[CheckpointMeta] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.epochs)

    def append(self, metrics: EpochMetrics) -> None:
        self.epochs.append(metrics)

    @property
    def best_epoch(self) -> Optional[int]:
        """监控损失最小值首次出现的轮次"""
        best = None
        best_loss = math.inf
        for m in self.epochs:
            loss = m.monitored(self.monitor)
            if loss < best_loss:
                best, best_loss = m.epoch, loss
        return best

    @property
    def best_monitored_loss(self) -> float:
        return min((m.monitored(self.monitor) for m in self.epochs), default=math.inf)

    def series(self, name: str) -> list[float]:
        return [getattr(m, name) for m in self.epochs]

    def to_frame(self) -> pd.DataFrame:
        if not self.epochs:
            raise EmptyHistory("训练历史为空")
        return pd.DataFrame([asdict(m) for m in self.epochs]).set_index("epoch")

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("".join(m.to_json() + "\n" for m in self.epochs), encoding="utf-8")
        return path

    @classmethod
    def load(cls, path: str | Path, monitor: str = "val_loss", checkpoints: Optional[str | Path] = None) -> "TrainHistory":
        """读取 history.jsonl（可选同时读取 checkpoints.jsonl）"""
        try:
            lines = Path(path).read_text(encoding="utf-8").splitlines()
            history = cls(monitor=monitor, epochs=[EpochMetrics.from_json(line) for line in lines if line.strip()])
            if checkpoints is not None and Path(checkpoints).is_file():
                history.checkpoints = load_checkpoint_log(checkpoints)
        except (OSError, KeyError, TypeError, ValueError) as e:
            raise CorruptArtifact(f"训练历史不可读: {path} ({e})") from e
        return history


class JsonlWriter:
    """逐行追加并立即 flush"""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "w", encoding="utf-8")

    def write(self, record: dict | str) -> None:
        line = record if isinstance(record, str) else json.dumps(record)
        self._fh.write(line + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> "JsonlWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def load_checkpoint_log(path: str | Path) -> list[CheckpointMeta]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [CheckpointMeta.from_dict(json.loads(line)) for line in lines if line.strip()]
