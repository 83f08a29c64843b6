"""
测试评估报告：混淆矩阵、逐类别指标、对比表与训练曲线
"""
import matplotlib
matplotlib.use('Agg')  # 使用非交互式后端

from fractions import Fraction

import numpy as np
import pytest

from convoher2.enums import Split, StainModality
from convoher2.errors import EmptyHistory, IndexOutOfRange, LengthMismatch, MissingFeature
from convoher2.model import FeatureStore, build_feature_store
from convoher2.report import (
    BASELINE_ROWS,
    ComparisonRow,
    ConfusionMatrix,
    EvaluationReport,
    comparison_table,
    confusion,
    full_report,
    measured_row,
)
from convoher2.training import EpochMetrics, TrainHistory
from convoher2.visualization import load_series, plot_curves


@pytest.fixture
def history():
    return TrainHistory(monitor="val_loss", epochs=[
        EpochMetrics(1, 1.30, 0.35, 1.25, 0.40),
        EpochMetrics(2, 1.10, 0.50, 1.15, 0.45),
        EpochMetrics(3, 0.95, 0.62, 1.05, 0.55),
    ])


class TestConfusion:
    """混淆矩阵"""

    def test_perfect(self):
        matrix = confusion([0, 1, 2, 3], [0, 1, 2, 3])
        np.testing.assert_array_equal(matrix.counts, np.eye(4, dtype=int))
        assert matrix.trace == 4
        assert matrix.accuracy == 1.0

    def test_constant_predictor(self):
        """全部预测为 2+：质量集中在第 3 列"""
        matrix = confusion([2, 2, 2, 2], [0, 1, 2, 3])
        assert matrix.counts[:, 2].sum() == 4
        assert matrix.accuracy == 0.25

    def test_rows_are_true_labels(self):
        matrix = confusion([1], [3])
        assert matrix.counts[3, 1] == 1

    def test_random_total(self):
        """1000 个随机样本：总数为 1000，逐格与暴力计数一致"""
        rng = np.random.default_rng(0)
        pred, labels = rng.integers(0, 4, 1000), rng.integers(0, 4, 1000)
        matrix = confusion(pred, labels)
        assert matrix.n == 1000
        for t in range(4):
            for p in range(4):
                assert matrix.counts[t, p] == np.sum((labels == t) & (pred == p))
        assert matrix.support_weighted_recall() == Fraction(matrix.trace, 1000)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            confusion([0, 1], [0])

    def test_index_out_of_range(self):
        with pytest.raises(IndexOutOfRange):
            confusion([0, 4], [0, 1])

    def test_read_only(self):
        matrix = confusion([0], [0])
        with pytest.raises(ValueError):
            matrix.counts[0, 0] = 5


class TestCategoryMetrics:
    """逐类别 precision / recall / f1"""

    def test_values(self):
        matrix = ConfusionMatrix([[2, 0, 0, 0], [1, 1, 0, 0], [0, 0, 3, 1], [0, 0, 0, 0]])
        zero, one, two, three = matrix.per_category()
        assert zero.precision == pytest.approx(2 / 3)
        assert zero.recall == 1.0
        assert one.f1 == pytest.approx(2 * 1.0 * 0.5 / 1.5)
        assert two.support == 4

        # 3+ 没有样本：recall 未定义；有 1 个误判为 3+ 的预测，precision = 0
        assert three.recall_undefined
        assert not three.precision_undefined
        assert three.precision == 0.0

    def test_undefined_precision(self):
        matrix = confusion([0, 0], [0, 1])
        assert matrix.per_category()[0].precision_undefined is False
        assert matrix.per_category()[1].precision_undefined is True
        assert matrix.per_category()[1].recall_undefined is False
        assert matrix.per_category()[2].precision_undefined is True
        assert matrix.per_category()[2].f1 == 0.0


class TestEvaluationReport:
    """评估报告"""

    def _perfect_report(self) -> EvaluationReport:
        labels = [i % 4 for i in range(12)]
        matrix = confusion(labels, labels)
        return EvaluationReport(
            modality=StainModality.IHC, split=Split.TEST, n_samples=12, accuracy=matrix.accuracy,
            loss=0.01, per_category=matrix.per_category(), matrix=matrix,
        )

    def test_perfect_predictor(self):
        """12 个样本全部预测正确 → accuracy 1.0，f1 全为 1"""
        report = self._perfect_report()
        assert report.accuracy == 1.0
        assert all(m.f1 == 1.0 for m in report.per_category)

    def test_accuracy_must_match_matrix(self):
        matrix = confusion([0, 1], [0, 0])
        with pytest.raises(ValueError):
            EvaluationReport(StainModality.IHC, Split.TEST, 2, 1.0, 0.1, matrix.per_category(), matrix)

    def test_save_load(self, tmp_path):
        report = self._perfect_report()
        loaded = EvaluationReport.load(report.save(tmp_path / "evaluation_IHC_test.json"))
        assert loaded.matrix == report.matrix
        assert loaded.modality is StainModality.IHC
        assert loaded.per_category == report.per_category

    def test_render(self):
        text = self._perfect_report().render()
        assert "accuracy=1.0000" in text
        assert "3+" in text

    def test_full_report(self, stub_handle, ihc_manifest):
        """图像路径与特征缓存路径得到同一份混淆矩阵"""
        store = build_feature_store(stub_handle, ihc_manifest, workers=2, progress=False)
        by_images = full_report(stub_handle, ihc_manifest, workers=0)
        by_features = full_report(stub_handle, ihc_manifest, store=store)
        assert by_images.n_samples == 8
        assert by_images.matrix == by_features.matrix
        assert by_images.accuracy == by_images.matrix.trace / 8
        assert by_images.matrix.support.tolist() == [2, 2, 2, 2]

    def test_full_report_missing_features(self, stub_handle, ihc_manifest):
        with pytest.raises(MissingFeature):
            full_report(stub_handle, ihc_manifest, store=FeatureStore.empty(16))


class TestComparisonTable:
    """与已发表方法的对比表"""

    def test_baselines_only(self):
        table = comparison_table()
        assert len(table) == 3
        assert [row.accuracy for row in BASELINE_ROWS] == [0.795, 0.8056, 0.833]

    def test_with_measured_row(self):
        """加入实测 IHC 行 → 4 行"""
        table = comparison_table([measured_row(0.8779, StainModality.IHC)])
        assert len(table) == 4
        rows = table.to_rows()
        assert rows[-1]["dataset"] == "BCI Dataset (IHC)"
        assert rows[-1]["accuracy"] == "87.79%"

    def test_include_original(self):
        assert len(comparison_table(include_original=True)) == 4

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            comparison_table([], include_baselines=False)

    def test_accuracy_range(self):
        with pytest.raises(ValueError):
            ComparisonRow("x", "y", 1.2)

    def test_csv(self, tmp_path):
        path = tmp_path / "comparison.csv"
        comparison_table([measured_row(0.851, StainModality.HE)]).to_csv(path)
        lines = path.read_text(encoding="utf-8").splitlines()
        assert len(lines) == 5


class TestCurves:
    """训练曲线"""

    def test_plot(self, history, tmp_path):
        artifacts = plot_curves(history, tmp_path, title_prefix="IHC")
        assert artifacts.accuracy_figure.is_file()
        assert artifacts.loss_figure.is_file()

    def test_single_epoch(self, tmp_path):
        """只有 1 轮时画单点，不报错"""
        one = TrainHistory(monitor="train_loss", epochs=[EpochMetrics(1, 1.3, 0.3)])
        artifacts = plot_curves(one, tmp_path)
        assert artifacts.loss_figure.is_file()

    def test_series_round_trip(self, history, tmp_path):
        """曲线数据文件写出再读入不变"""
        artifacts = plot_curves(history, tmp_path)
        series = {name: load_series(path) for name, path in artifacts.series_files.items()}
        assert series["train_loss"] == [(1, 1.30), (2, 1.10), (3, 0.95)]
        assert series["val_accuracy"] == [(1, 0.40), (2, 0.45), (3, 0.55)]

    def test_empty_history(self, tmp_path):
        with pytest.raises(EmptyHistory):
            plot_curves(TrainHistory(), tmp_path)
