"""
数据集清单（DatasetManifest）

清单是训练/评估的唯一数据来源。持久化为 UTF-8 文本：

    #convoher2-manifest v1 modality=IHC seed=0 skipped=0 pattern=<regex>
    path<TAB>sample_id<TAB>modality<TAB>score<TAB>split<TAB>width<TAB>height
"""
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional

from convoher2.data.labels import DEFAULT_LABEL_PATTERN
from convoher2.enums import Her2Score, NUM_SCORES, Split, StainModality
from convoher2.errors import DatasetIoError, ManifestFormatError

logger = logging.getLogger(__name__)

MANIFEST_MAGIC = "#convoher2-manifest"
MANIFEST_VERSION = "v1"
FIELD_ORDER = ("path", "sample_id", "modality", "score", "split", "width", "height")


@dataclass(frozen=True)
class ImageRecord:
    path: str               # 图像路径（扫描时的 root 拼接相对路径）
    sample_id: str          # 跨模态共享的切片 ID
    modality: StainModality
    score: Her2Score
    split: Split
    source_width_px: int
    source_height_px: int

    def __post_init__(self):
        if not self.sample_id:
            raise ValueError(f"sample_id 为空: {self.path}")
        if self.source_width_px <= 0 or self.source_height_px <= 0:
            raise ValueError(f"图像尺寸非法: {self.source_width_px}x{self.source_height_px} ({self.path})")

    def to_line(self) -> str:
        return "\t".join([
            self.path,
            self.sample_id,
            self.modality.value,
            self.score.label,
            self.split.value,
            str(self.source_width_px),
            str(self.source_height_px),
        ])

    @classmethod
    def from_line(cls, line: str) -> "ImageRecord":
        parts = line.rstrip("\n").split("\t")
        if len(parts) != len(FIELD_ORDER):
            raise ManifestFormatError(f"清单记录应有 {len(FIELD_ORDER)} 列，实际 {len(parts)} 列: {line!r}")
        path, sample_id, modality, score, split, width, height = parts
        return cls(
            path=path,
            sample_id=sample_id,
            modality=StainModality.parse(modality),
            score=Her2Score.from_label(score),
            split=Split.parse(split),
            source_width_px=int(width),
            source_height_px=int(height),
        )


@dataclass(frozen=True)
class SplitCounts:
    train: int
    test: int
    unsplit: int = 0

    @property
    def total(self) -> int:
        return self.train + self.test + self.unsplit

    def as_tuple(self) -> tuple[int, int]:
        return (self.train, self.test)


@dataclass(frozen=True)
class DatasetManifest:
    """
    不可变清单

    records 始终按 path 字典序排列；class_counts / split_counts 由记录重新计数得到，
    因此与记录永远一致。
    """
    modality: StainModality
    records: tuple[ImageRecord, ...]
    seed: int = 0
    pattern: str = DEFAULT_LABEL_PATTERN
    skipped: int = 0  # 文件名无法解析而被跳过的文件数
    _by_key: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        records = tuple(sorted(self.records, key=lambda r: r.path))
        object.__setattr__(self, "records", records)

        seen: dict[tuple[str, StainModality], ImageRecord] = {}
        for record in records:
            key = (record.sample_id, record.modality)
            if key in seen:
                raise ValueError(
                    f"(sample_id, modality) 重复: {key[0]}/{key[1]} "
                    f"({seen[key].path} 与 {record.path})"
                )
            if record.modality != self.modality:
                raise ValueError(f"记录模态 {record.modality} 与清单模态 {self.modality} 不一致: {record.path}")
            seen[key] = record
        object.__setattr__(self, "_by_key", {k[0]: v for k, v in seen.items()})

    def __len__(self) -> int:
        return len(self.records)

    @property
    def class_counts(self) -> tuple[int, ...]:
        counts = [0] * NUM_SCORES
        for record in self.records:
            counts[record.score.index] += 1
        return tuple(counts)

    @property
    def split_counts(self) -> SplitCounts:
        train = sum(1 for r in self.records if r.split is Split.TRAIN)
        test = sum(1 for r in self.records if r.split is Split.TEST)
        return SplitCounts(train=train, test=test, unsplit=len(self.records) - train - test)

    @property
    def is_split(self) -> bool:
        return any(r.split is not Split.UNSPLIT for r in self.records)

    def get(self, sample_id: str) -> Optional[ImageRecord]:
        return self._by_key.get(sample_id)

    def select(self, split: Split) -> list[ImageRecord]:
        """按清单顺序返回某个划分的记录"""
        return [r for r in self.records if r.split is split]

    def sample_ids(self, split: Optional[Split] = None) -> list[str]:
        records = self.records if split is None else self.select(split)
        return [r.sample_id for r in records]

    def with_records(self, records: Iterable[ImageRecord], **changes) -> "DatasetManifest":
        return replace(self, records=tuple(records), **changes)

    # ---------- 持久化 ----------

    def header(self) -> str:
        return (
            f"{MANIFEST_MAGIC} {MANIFEST_VERSION} modality={self.modality.value} "
            f"seed={self.seed} skipped={self.skipped} pattern={self.pattern}"
        )

    def dumps(self) -> str:
        lines = [self.header()]
        lines.extend(record.to_line() for record in self.records)
        return "\n".join(lines) + "\n"

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.dumps(), encoding="utf-8")
        logger.info("清单已写入 %s（%d 条记录）", path, len(self.records))
        return path

    @classmethod
    def loads(cls, text: str) -> "DatasetManifest":
        """
        Raises:
            ManifestFormatError: 文件头、记录行或记录之间的约束不合法
        """
        lines = text.splitlines()
        if not lines or not lines[0].startswith(MANIFEST_MAGIC):
            raise ManifestFormatError("不是 convoher2 清单文件（缺少文件头）")

        header = _parse_header(lines[0])
        try:
            records = [ImageRecord.from_line(line) for line in lines[1:] if line.strip()]
            return cls(
                modality=StainModality.parse(header["modality"]),
                records=tuple(records),
                seed=int(header.get("seed", 0)),
                pattern=header.get("pattern", DEFAULT_LABEL_PATTERN),
                skipped=int(header.get("skipped", 0)),
            )
        except ManifestFormatError:
            raise
        except ValueError as e:
            raise ManifestFormatError(f"清单内容非法: {e}") from e

    @classmethod
    def load(cls, path: str | Path) -> "DatasetManifest":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as e:
            raise DatasetIoError(f"清单文件不可读: {path} ({e})") from e
        return cls.loads(text)


def _parse_header(line: str) -> dict[str, str]:
    # pattern 可能含空格，因此放在最后、整体截取
    head, sep, pattern = line.partition(" pattern=")
    tokens = head.split()
    if len(tokens) < 2 or tokens[1] != MANIFEST_VERSION:
        raise ManifestFormatError(f"不支持的清单版本: {line!r}")

    fields = {}
    for token in tokens[2:]:
        key, eq, value = token.partition("=")
        if not eq:
            raise ManifestFormatError(f"清单文件头字段非法: {token!r}")
        fields[key] = value
    if sep:
        fields["pattern"] = pattern
    if "modality" not in fields:
        raise ManifestFormatError("清单文件头缺少 modality")
    return fields
