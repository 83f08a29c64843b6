from dataclasses import dataclass

from convoher2.data.manifest import DatasetManifest

# 全量 BCI 每个模态的类别分布（0 / 1+ / 2+ / 3+），合计 4870；
# 发行版文档给出的总数是 4873，差 3 张只报警不报错
BCI_CLASS_COUNTS = (240, 1153, 2142, 1335)
BCI_SPLIT_COUNTS = (3896, 977)
BCI_TOLERANCE = 3


@dataclass(frozen=True)
class DistributionCheck:
    observed: tuple[int, ...]
    expected: tuple[int, ...]
    tolerance: int

    @property
    def deltas(self) -> tuple[int, ...]:
        return tuple(o - e for o, e in zip(self.observed, self.expected))

    @property
    def total_deviation(self) -> int:
        return sum(abs(d) for d in self.deltas)

    @property
    def exact(self) -> bool:
        return self.total_deviation == 0

    @property
    def ok(self) -> bool:
        return self.total_deviation <= self.tolerance


def check_distribution(
    manifest: DatasetManifest,
    expected: tuple[int, ...] = BCI_CLASS_COUNTS,
    tolerance: int = BCI_TOLERANCE,
) -> DistributionCheck:
    return DistributionCheck(
        observed=manifest.class_counts,
        expected=tuple(expected),
        tolerance=tolerance,
    )
