"""
HE / IHC 配对校验

两种染色来自同一患者、同一切片，评分应当一致。
差异只作为报告内容，不抛异常。
"""
import logging
from dataclasses import dataclass, field

from convoher2.data.manifest import DatasetManifest
from convoher2.enums import Her2Score

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ScoreMismatch:
    sample_id: str
    he_score: Her2Score
    ihc_score: Her2Score


@dataclass
class PairingReport:
    matched: int = 0                                   # 两侧都存在且评分一致的 ID 数
    score_mismatches: list[ScoreMismatch] = field(default_factory=list)
    missing_in_ihc: list[str] = field(default_factory=list)  # 只在 HE 中出现
    missing_in_he: list[str] = field(default_factory=list)   # 只在 IHC 中出现

    @property
    def missing_counterparts(self) -> list[str]:
        return sorted(self.missing_in_ihc + self.missing_in_he)

    @property
    def ok(self) -> bool:
        return not self.score_mismatches and not self.missing_in_ihc and not self.missing_in_he

    def summary(self) -> dict:
        return {
            "matched": self.matched,
            "score_mismatches": len(self.score_mismatches),
            "missing_in_ihc": len(self.missing_in_ihc),
            "missing_in_he": len(self.missing_in_he),
            "ok": self.ok,
        }


def verify_pairing(he: DatasetManifest, ihc: DatasetManifest) -> PairingReport:
    """按 sample_id 对齐两份清单，列出评分不一致与缺失的样本"""
    if he.pattern != ihc.pattern:
        logger.warning("两份清单的标签规则不同，仍按 sample_id 对齐: %r vs %r", he.pattern, ihc.pattern)

    he_scores = {r.sample_id: r.score for r in he.records}
    ihc_scores = {r.sample_id: r.score for r in ihc.records}

    report = PairingReport()
    for sample_id in sorted(he_scores.keys() | ihc_scores.keys()):
        if sample_id not in ihc_scores:
            report.missing_in_ihc.append(sample_id)
        elif sample_id not in he_scores:
            report.missing_in_he.append(sample_id)
        elif he_scores[sample_id] != ihc_scores[sample_id]:
            report.score_mismatches.append(
                ScoreMismatch(sample_id, he_scores[sample_id], ihc_scores[sample_id])
            )
        else:
            report.matched += 1
    return report
