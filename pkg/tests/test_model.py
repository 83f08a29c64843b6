"""
测试模型：分类头结构、参数统计、前向推理、检查点与特征缓存
"""
from dataclasses import replace

import numpy as np
import pytest

from tests.conftest import SIDE
from convoher2.enums import Split, StainModality
from convoher2.errors import ConfigError, CorruptCheckpoint, DimMismatch, InvalidDim, MissingFeature, ShapeError, TopologyMismatch
from convoher2.model import (
    BackboneSpec,
    FeatureStore,
    HeadVariant,
    LayerKind,
    ModelMetadata,
    build_feature_store,
    build_head,
    compose,
    count_params,
    export_flat_weights,
    extract_features,
    forward,
    forward_features,
    load_checkpoint,
    load_flat_export,
    read_checkpoint_meta,
    save_checkpoint,
    save_flat_export,
)
from convoher2.preprocess import make_batches

FULL_MODEL_COUNTS = (31_542_052, 9_724_932, 21_817_120)


@pytest.fixture
def images():
    return np.random.default_rng(0).uniform(-1, 1, size=(32, SIDE, SIDE, 3)).astype(np.float32)


class TestHeadSpec:
    """分类头结构"""

    def test_full_width(self):
        """2048 输入 → 8 层，输出宽度 4"""
        head = build_head(2048)
        assert len(head.layers) == 8
        assert head.output_width == 4
        assert [layer.kind for layer in head.layers] == [LayerKind.BATCH_NORM, LayerKind.DENSE] * 4
        assert [layer.out_width for layer in head.layers] == [2048, 2048, 2048, 1536, 1536, 1536, 1536, 4]
        assert head.layers[0].param_count == 8192

    def test_activations(self):
        dense = [layer for layer in build_head(2048).layers if layer.kind is LayerKind.DENSE]
        assert [layer.activation for layer in dense] == ["relu", "relu", "relu", "softmax"]

    def test_test_scale(self):
        """input_dim 8：第一个 BN 32 个参数，Dense(8→8) 72 个参数"""
        head = build_head(8)
        assert head.layers[0].param_count == 32
        assert head.layers[0].trainable_count == 16
        assert head.layers[1].param_count == 72

    def test_baseline(self):
        head = build_head(2048, HeadVariant.BASELINE)
        assert len(head.layers) == 1
        assert head.param_count == 2048 * 4 + 4

    def test_invalid_dim(self):
        with pytest.raises(InvalidDim):
            build_head(0)

    def test_unknown_variant(self):
        with pytest.raises(ConfigError):
            build_head(16, "wide")


class TestParamCount:
    """参数统计"""

    def test_full_model_counts(self):
        """完整模型：31,542,052 / 9,724,932 / 21,817,120"""
        counts = count_params(build_head(2048), BackboneSpec())
        assert counts.as_tuple() == FULL_MODEL_COUNTS

    def test_per_layer_rows(self):
        counts = count_params(build_head(2048), BackboneSpec())
        rows = {row.layer_name: row.param_count for row in counts.layers}
        assert rows == {
            "inception_v3": 21_802_784,
            "flatten": 0,
            "batch_normalization_94": 8_192,
            "dense": 4_196_352,
            "batch_normalization_95": 8_192,
            "dense_1": 3_147_264,
            "batch_normalization_96": 6_144,
            "dense_2": 2_360_832,
            "batch_normalization_97": 6_144,
            "dense_3": 6_148,
        }

    def test_layer_identities(self):
        """Dense(a→b) = a·b + b；BN(d) = 4d，其中 2d 可训练"""
        for layer in build_head(2048).layers:
            if layer.kind is LayerKind.DENSE:
                assert layer.param_count == layer.in_width * layer.out_width + layer.out_width
            else:
                assert layer.param_count == 4 * layer.out_width
                assert layer.trainable_count == 2 * layer.out_width

    def test_summary_text(self):
        text = count_params(build_head(2048), BackboneSpec()).summary()
        assert "Total params: 31,542,052" in text
        assert "Trainable params: 9,724,932" in text
        assert "Non-trainable params: 21,817,120" in text

    def test_handle_counts_real_variables(self):
        """按实际 Keras 变量计数，与公式一致"""
        handle = compose(BackboneSpec.stub(feature_dim=2048, input_side=SIDE), build_head(2048))
        counts = count_params(handle)
        stub = 8 * 8 * 3 * 2048
        assert counts.as_tuple() == (stub + 9_739_268, 9_724_932, stub + 14_336)
        assert handle.network.count_params() == counts.total

    @pytest.mark.slow
    def test_inception_v3_graph(self):
        """真实 InceptionV3 结构（不加载权重）"""
        handle = compose(BackboneSpec(weights=None), build_head(2048))
        assert count_params(handle).as_tuple() == FULL_MODEL_COUNTS
        assert handle.backbone.output_shape == (None, 2048)


class TestCompose:
    """组合骨干与分类头"""

    def test_unfrozen_rejected(self):
        backbone = replace(BackboneSpec.stub(feature_dim=16, input_side=SIDE), frozen=False)
        with pytest.raises(ConfigError):
            compose(backbone, build_head(16))

    def test_dim_mismatch(self):
        with pytest.raises(DimMismatch):
            compose(BackboneSpec.stub(feature_dim=16, input_side=SIDE), build_head(8))

    def test_only_head_is_trainable(self, stub_handle):
        """可训练变量全部来自分类头"""
        assert not stub_handle.backbone.trainable_weights
        head_ids = {id(v) for v in stub_handle.head.trainable_weights}
        assert {id(v) for v in stub_handle.network.trainable_weights} == head_ids

    def test_inception_input_too_small(self):
        with pytest.raises(ConfigError):
            BackboneSpec(input_side=64)

    def test_same_seed_same_weights(self, stub_handle_factory):
        assert stub_handle_factory().head_checksum() == stub_handle_factory().head_checksum()

    def test_initial_prediction_near_uniform(self, stub_handle, images):
        """输出层初始化缩小后，初始预测接近均匀分布"""
        probs = forward(stub_handle, images)
        np.testing.assert_allclose(probs, 0.25, atol=0.1)


class TestForward:
    """前向推理"""

    def test_rows_sum_to_one(self, stub_handle, images):
        for mode in ("infer", "train"):
            probs = forward(stub_handle, images, mode)
            assert probs.shape == (32, 4)
            np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-5)

    def test_batch_size_independent(self, stub_handle, images):
        """推理模式下单张与整批结果一致"""
        batched = forward(stub_handle, images)
        alone = forward(stub_handle, images[5:6])
        np.testing.assert_allclose(alone[0], batched[5], atol=1e-5)

    def test_train_mode_keeps_running_stats(self, stub_handle, images):
        before = [np.array(v.numpy()) for v in stub_handle.head.non_trainable_variables]
        forward(stub_handle, images, "train")
        for v, value in zip(stub_handle.head.non_trainable_variables, before):
            np.testing.assert_array_equal(v.numpy(), value)

    def test_features_are_deterministic(self, stub_handle, images):
        """同一图像两次提取特征完全相同"""
        first = extract_features(stub_handle, images[:2])
        second = extract_features(stub_handle, images[:2])
        assert first.shape == (2, 16)
        np.testing.assert_array_equal(first, second)

    def test_wrong_image_shape(self, stub_handle):
        with pytest.raises(ShapeError):
            forward(stub_handle, np.zeros((2, SIDE + 8, SIDE + 8, 3), dtype=np.float32))

    def test_wrong_feature_width(self, stub_handle):
        with pytest.raises(ShapeError):
            forward_features(stub_handle, np.zeros((2, 5)))

    def test_unknown_mode(self, stub_handle):
        with pytest.raises(ValueError):
            forward_features(stub_handle, np.zeros((2, 16)), "eval")

    def test_accepts_batch(self, stub_handle, ihc_manifest):
        batch = next(iter(make_batches(ihc_manifest, Split.TEST, batch_size=8, workers=0, side_px=SIDE)))
        assert forward(stub_handle, batch).shape == (8, 4)


class TestCheckpoint:
    """检查点读写"""

    def test_round_trip(self, stub_handle, images, tmp_path):
        """保存再读取，固定批次上的输出逐位一致"""
        stub_handle.metadata = ModelMetadata(config_hash="abc123", modality=StainModality.IHC)
        meta = save_checkpoint(stub_handle, tmp_path / "best", epoch=3, monitored_loss=0.5)
        assert meta.path.endswith("best.weights.h5")

        loaded = load_checkpoint(meta.path)
        np.testing.assert_array_equal(forward(loaded, images), forward(stub_handle, images))
        assert loaded.metadata.config_hash == "abc123"
        assert loaded.metadata.modality is StainModality.IHC

        read = read_checkpoint_meta(meta.path)
        assert (read.epoch, read.monitored_loss, read.config_hash) == (3, 0.5, "abc123")

    def test_overwrite(self, stub_handle_factory, tmp_path):
        """同名检查点直接覆盖"""
        first = stub_handle_factory(seed=0)
        second = stub_handle_factory(seed=1)
        save_checkpoint(first, tmp_path / "best.weights.h5", epoch=1)
        save_checkpoint(second, tmp_path / "best.weights.h5", epoch=2)
        loaded = load_checkpoint(tmp_path / "best.weights.h5")
        assert loaded.head_checksum() == second.head_checksum()

    def test_missing(self, tmp_path):
        with pytest.raises(CorruptCheckpoint):
            load_checkpoint(tmp_path / "nope.weights.h5")

    def test_truncated(self, stub_handle, tmp_path):
        meta = save_checkpoint(stub_handle, tmp_path / "best.weights.h5")
        with open(meta.path, "rb") as f:
            data = f.read()
        with open(meta.path, "wb") as f:
            f.write(data[: len(data) // 2])
        with pytest.raises(CorruptCheckpoint):
            load_checkpoint(meta.path)

    def test_missing_sidecar(self, stub_handle, tmp_path):
        meta = save_checkpoint(stub_handle, tmp_path / "best.weights.h5")
        (tmp_path / "best.meta.json").unlink()
        with pytest.raises(CorruptCheckpoint):
            load_checkpoint(meta.path)

    def test_topology_mismatch(self, stub_handle_factory, tmp_path):
        """窄分类头的检查点不能按宽分类头读取"""
        narrow = stub_handle_factory(feature_dim=12)
        meta = save_checkpoint(narrow, tmp_path / "narrow.weights.h5")
        with pytest.raises(TopologyMismatch):
            load_checkpoint(meta.path, expected_head=build_head(16))

    def test_flat_export(self, stub_handle, tmp_path):
        """扁平导出按层顺序，写出再读入不变"""
        flat = export_flat_weights(stub_handle)
        names = [name for name, _ in flat]
        assert names[0].startswith("01:batch_normalization_94/")
        assert names[-1] == "08:dense_3/bias"
        assert len(flat) == 4 * 4 + 2 * 4

        path = save_flat_export(stub_handle, tmp_path / "head.npz")
        reloaded = dict(load_flat_export(path))
        for name, value in flat:
            np.testing.assert_array_equal(reloaded[name], value)


class TestFeatureStore:
    """骨干特征缓存"""

    def test_build_matches_direct_extraction(self, stub_handle, ihc_manifest):
        store = build_feature_store(stub_handle, ihc_manifest, batch_size=7, workers=2, progress=False)
        assert len(store) == len(ihc_manifest)
        assert store.dim == 16
        assert store.modality is StainModality.IHC

        batch = next(iter(make_batches(ihc_manifest, Split.TEST, batch_size=8, workers=0, side_px=SIDE)))
        np.testing.assert_allclose(store.gather(list(batch.record_ids)), extract_features(stub_handle, batch), atol=1e-6)

    def test_save_load(self, tmp_path):
        store = FeatureStore(("a", "b"), np.arange(6, dtype=np.float32).reshape(2, 3), StainModality.HE, "stub")
        loaded = FeatureStore.load(store.save(tmp_path / "features"))
        assert loaded.ids == ("a", "b")
        assert loaded.modality is StainModality.HE
        assert loaded.backbone == "stub"
        np.testing.assert_array_equal(loaded.features, store.features)

    def test_gather_missing(self):
        store = FeatureStore(("a",), np.zeros((1, 3)))
        with pytest.raises(MissingFeature):
            store.gather(["a", "b"])
        with pytest.raises(MissingFeature):
            store.get("b")

    def test_empty_store(self):
        store = FeatureStore.empty(dim=16)
        assert len(store) == 0
        assert not store.covers(["a"])

    def test_merge_prefers_other(self):
        left = FeatureStore(("a", "b"), np.zeros((2, 2)))
        right = FeatureStore(("b", "c"), np.ones((2, 2)))
        merged = left.merge(right)
        assert merged.ids == ("a", "b", "c")
        np.testing.assert_array_equal(merged.get("b"), [1.0, 1.0])

    def test_shape_checked(self):
        with pytest.raises(ShapeError):
            FeatureStore(("a", "b"), np.zeros((3, 2)))

    def test_duplicate_ids(self):
        with pytest.raises(ValueError):
            FeatureStore(("a", "a"), np.zeros((2, 2)))
