"""
测试数值参考实现：BN、激活、损失、数值梯度与梯度校验
"""
import math

import keras
import numpy as np
import pytest
import tensorflow as tf

from convoher2.errors import NonFiniteGradient, ShapeMismatch
from convoher2.model import BackboneSpec, build_head, compose, export_flat_weights, forward_features
from convoher2.oracle import (
    BatchNormParams,
    NormBatch,
    bn_forward_infer,
    bn_forward_train,
    check_head_gradients,
    cross_entropy,
    finite_diff_grad,
    gradient_check,
    head_forward,
    mean_cross_entropy,
    relative_error,
    relu,
    softmax,
    softmax_cross_entropy_grad,
)
from convoher2.oracle.gradcheck import tape_gradients
from convoher2.oracle.suite import run_verification_suite


def float64_handle(variant: str, dim: int, seed: int = 3):
    """float64 分类头 + 桩骨干（梯度校验用）"""
    return compose(BackboneSpec.stub(feature_dim=dim, input_side=16), build_head(dim, variant), seed=seed, dtype="float64")


def labelled(n: int, dim: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(n, dim)), np.eye(4)[np.arange(n) % 4]


class TestBatchNorm:
    """批归一化"""

    def test_unit_gamma(self):
        """x=[1,2,3], ε=0 → μ=2, σ²=2/3"""
        result = bn_forward_train(np.array([1.0, 2.0, 3.0]), BatchNormParams(epsilon=0.0))
        assert result.mu_B == pytest.approx(2.0)
        assert result.sigma2_B == pytest.approx(2 / 3)
        np.testing.assert_allclose(result.y, [-1.224745, 0.0, 1.224745], atol=1e-6)

    def test_affine(self):
        """γ=2, β=1"""
        result = bn_forward_train(np.array([1.0, 2.0, 3.0]), BatchNormParams(gamma=2.0, beta=1.0, epsilon=0.0))
        np.testing.assert_allclose(result.y, [-1.449490, 1.0, 3.449490], atol=1e-6)

    def test_constant_batch(self):
        """零方差批次归一化为 β"""
        result = bn_forward_train(np.full(3, 5.0), BatchNormParams(beta=0.7))
        np.testing.assert_allclose(result.y, [0.7, 0.7, 0.7])

    def test_output_statistics(self):
        """ε=0 时输出均值为 β、标准差为 |γ|"""
        x = np.random.default_rng(1).normal(3.0, 2.0, size=(64, 5))
        gamma = np.array([1.0, -2.0, 0.5, 3.0, 1.5])
        beta = np.array([0.0, 1.0, -1.0, 2.0, 0.5])
        y = bn_forward_train(NormBatch(x), BatchNormParams(gamma=gamma, beta=beta, epsilon=0.0)).y
        np.testing.assert_allclose(y.mean(axis=0), beta, atol=1e-9)
        np.testing.assert_allclose(y.std(axis=0), np.abs(gamma), atol=1e-9)

    def test_running_update(self):
        """running ← momentum · running + (1 − momentum) · batch"""
        result = bn_forward_train(np.array([1.0, 2.0, 3.0]), BatchNormParams(momentum=0.99))
        assert result.params.running_mean == pytest.approx(0.99 * 0.0 + 0.01 * 2.0)
        assert result.params.running_var == pytest.approx(0.99 * 1.0 + 0.01 * (2 / 3))

    def test_infer_identity(self):
        x = np.array([-1.0, 0.5, 4.0])
        np.testing.assert_allclose(bn_forward_infer(x, BatchNormParams(epsilon=0.0)), x)

    def test_infer_centered(self):
        """x = running_mean → y = β"""
        params = BatchNormParams(beta=0.3, running_mean=1.5, running_var=4.0)
        assert bn_forward_infer(np.array([1.5]), params)[0] == pytest.approx(0.3)

    def test_infer_matches_train_with_batch_stats(self):
        x = np.array([1.0, 2.0, 3.0])
        train = bn_forward_train(x, BatchNormParams(epsilon=0.0)).y
        infer = bn_forward_infer(x, BatchNormParams(epsilon=0.0, running_mean=2.0, running_var=2 / 3))
        np.testing.assert_allclose(infer, train, atol=1e-12)

    def test_matches_keras(self):
        """与 Keras BatchNormalization（训练模式）一致"""
        x = np.random.default_rng(2).normal(size=(16, 6))
        layer = keras.layers.BatchNormalization(momentum=0.99, epsilon=1e-3, dtype="float64")
        framework = np.asarray(layer(x, training=True))
        reference = bn_forward_train(x, BatchNormParams()).y
        np.testing.assert_allclose(framework, reference, atol=1e-9)

    @pytest.mark.parametrize("kwargs", [{"epsilon": -1e-3}, {"momentum": 1.0}, {"running_var": -1.0}])
    def test_invalid_params(self, kwargs):
        with pytest.raises(ValueError):
            BatchNormParams(**kwargs)

    def test_empty_batch(self):
        with pytest.raises(ValueError):
            NormBatch(np.zeros((0, 3)))


class TestActivations:
    """ReLU 与 softmax"""

    def test_relu(self):
        np.testing.assert_array_equal(relu(np.array([-1.0, 3.0, 0.0])), [0.0, 3.0, 0.0])

    def test_softmax_uniform(self):
        np.testing.assert_allclose(softmax(np.zeros(4)), [0.25] * 4)

    def test_softmax_values(self):
        np.testing.assert_allclose(softmax(np.array([1.0, 2.0, 3.0])), [0.090031, 0.244728, 0.665241], atol=1e-6)

    def test_softmax_no_overflow(self):
        p = softmax(np.array([1000.0, 0.0, 0.0, 0.0]))
        assert np.all(np.isfinite(p))
        assert p[0] == pytest.approx(1.0)

    def test_softmax_rows(self):
        """逐行和为 1，且平移不变"""
        z = np.random.default_rng(3).normal(scale=5.0, size=(10_000, 4))
        p = softmax(z)
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)
        np.testing.assert_allclose(softmax(z + 17.0), p, atol=1e-12)

    def test_softmax_rejects_nan(self):
        with pytest.raises(ValueError):
            softmax(np.array([0.0, np.nan]))


class TestCrossEntropy:
    """分类交叉熵"""

    def test_uniform(self):
        assert cross_entropy(np.full(4, 0.25), np.eye(4)[2]) == pytest.approx(math.log(4))

    def test_perfect(self):
        assert cross_entropy(np.eye(4)[1], np.eye(4)[1]) == pytest.approx(0.0)

    def test_clip(self):
        """p_true = 1e-9 按 1e-7 截断"""
        p = np.array([1e-9, 1 - 1e-9, 0.0, 0.0])
        assert cross_entropy(p, np.eye(4)[0]) == pytest.approx(16.1181, abs=1e-4)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            cross_entropy(np.full(4, 0.25), np.eye(3)[0])

    def test_mean(self):
        P = np.full((5, 4), 0.25)
        assert mean_cross_entropy(P, np.eye(4)[[0, 1, 2, 3, 0]]) == pytest.approx(math.log(4))


class TestFiniteDiff:
    """中心差分"""

    def test_square(self):
        grad = finite_diff_grad(lambda x: float(np.sum(x ** 2)), np.array([3.0]), h=1e-5)
        assert grad[0] == pytest.approx(6.0, abs=1e-6)

    def test_constant(self):
        np.testing.assert_array_equal(finite_diff_grad(lambda x: 4.2, np.ones(5)), np.zeros(5))

    def test_softmax_cross_entropy(self):
        """CE∘softmax 的梯度为 p − t"""
        z = np.random.default_rng(4).normal(size=4)
        t = np.eye(4)[1]
        numeric = finite_diff_grad(lambda v: cross_entropy(softmax(v), t), z)
        np.testing.assert_allclose(numeric, softmax_cross_entropy_grad(softmax(z), t), atol=1e-6)

    def test_does_not_modify_input(self):
        x = np.array([1.0, 2.0])
        finite_diff_grad(lambda v: float(v.sum()), x)
        np.testing.assert_array_equal(x, [1.0, 2.0])

    def test_step_must_be_positive(self):
        with pytest.raises(ValueError):
            finite_diff_grad(lambda v: 0.0, np.ones(2), h=0.0)

    def test_relative_error_floor(self):
        assert relative_error(0.0, 0.0) == 0.0


class TestGradientCheck:
    """框架梯度 vs 数值梯度"""

    def test_full_head_small_width(self):
        """完整结构分类头（宽度 8）逐坐标校验通过"""
        handle = float64_handle("convoher2", 8)
        features, labels = labelled(8, 8, seed=4)
        report = check_head_gradients(handle.head, features, labels)
        assert report.passed, report.summary()
        assert {b.n_checked for b in report.blocks} == {b.size for b in report.blocks}

    def test_corrupted_gradient_fails(self):
        """注入 ×2 的错误梯度必须被发现"""
        handle = float64_handle("convoher2", 8)
        features, labels = labelled(8, 8, seed=4)
        x, t = tf.constant(features), tf.constant(labels)
        loss_obj = keras.losses.CategoricalCrossentropy(dtype="float64")

        def doubled():
            grads = tape_gradients(lambda: loss_obj(t, handle.head(x, training=True)), handle.head.trainable_variables)
            return [2.0 * g for g in grads]

        report = check_head_gradients(handle.head, features, labels, analytic=doubled)
        assert not report.passed

    def test_zero_input_batch(self):
        """全零输入：被 ReLU 屏蔽的单元梯度为 0，校验仍通过"""
        handle = float64_handle("convoher2", 8)
        report = check_head_gradients(handle.head, np.zeros((4, 8)), np.eye(4))
        assert report.passed, report.summary()

    def test_running_stats_restored(self):
        """校验前后 BN running 统计量不变"""
        handle = float64_handle("convoher2", 8)
        before = [np.array(v.numpy()) for v in handle.head.non_trainable_variables]
        features, labels = labelled(8, 8, seed=5)
        check_head_gradients(handle.head, features, labels)
        for v, value in zip(handle.head.non_trainable_variables, before):
            np.testing.assert_array_equal(v.numpy(), value)

    def test_generic_quadratic(self):
        """任意变量上的 loss = Σ w² 校验通过；解析梯度含 NaN 时报错"""
        w = tf.Variable(np.array([[0.5, -1.0], [2.0, 0.25]]), dtype=tf.float64)
        report = gradient_check(lambda: tf.reduce_sum(w * w), [w])
        assert report.passed, report.summary()
        assert report.blocks[0].n_checked == 4

        with pytest.raises(NonFiniteGradient):
            gradient_check(lambda: tf.reduce_sum(w * w), [w], analytic=lambda: [np.full((2, 2), np.nan)])

    def test_steps_recorded(self):
        """二次函数在 h 本身全部通过，报告只记录 h"""
        w = tf.Variable(np.array([[0.5, -1.0], [2.0, 0.25]]), dtype=tf.float64)
        report = gradient_check(lambda: tf.reduce_sum(w * w), [w])
        assert report.strict
        assert report.steps_used == {report.h: 4}

    def test_relu_kink_retry(self):
        """|w| < h 时差分区间跨过 ReLU 拐点：只有改用 h/10 才通过，且报告记下该步长"""
        w = tf.Variable(np.array([5e-4, 2.0]), dtype=tf.float64)

        def loss_fn():
            return tf.reduce_sum(tf.nn.relu(w))

        relaxed = gradient_check(loss_fn, [w])
        assert relaxed.passed
        assert not relaxed.strict
        assert relaxed.retried == 1
        assert relaxed.steps_used == {relaxed.h: 1, relaxed.h / 10: 1}

        exact = gradient_check(loss_fn, [w], retry=False)
        assert not exact.passed
        assert exact.max_rel_error == pytest.approx(0.25)
        assert exact.steps_used == {exact.h: 2}

    @pytest.mark.slow
    def test_baseline_head_full_width(self):
        """2048→4 单层分类头、batch 4，容差 1e-3 通过"""
        handle = float64_handle("baseline", 2048)
        features, labels = labelled(4, 2048, seed=6)
        report = check_head_gradients(handle.head, features, labels, tolerance=1e-3)
        assert report.passed, report.summary()


class TestReplay:
    """numpy 逐层重放 vs 框架前向"""

    @pytest.mark.parametrize("mode", ["infer", "train"])
    def test_matches_framework(self, stub_handle, mode):
        features = np.random.default_rng(7).normal(size=(12, 16)).astype(np.float32)
        framework = forward_features(stub_handle, features, mode)
        reference = head_forward(export_flat_weights(stub_handle), features, mode)
        np.testing.assert_allclose(framework, reference, atol=1e-4)

    def test_many_random_batches(self, stub_handle):
        """100 个随机批次（批大小 2..16）在两种模式下都与框架一致"""
        flat = export_flat_weights(stub_handle)
        rng = np.random.default_rng(11)
        worst = 0.0
        for _ in range(100):
            features = rng.normal(scale=2.0, size=(int(rng.integers(2, 17)), 16)).astype(np.float32)
            for mode in ("infer", "train"):
                framework = forward_features(stub_handle, features, mode)
                worst = max(worst, float(np.max(np.abs(framework - head_forward(flat, features, mode)))))
        assert worst <= 1e-4

    def test_width_mismatch(self, stub_handle):
        with pytest.raises(ShapeMismatch):
            head_forward(export_flat_weights(stub_handle), np.zeros((2, 5)))


class TestVerificationSuite:
    """完整校验套件"""

    def test_all_checks_pass(self):
        report = run_verification_suite()
        assert report.passed, [(c.name, c.detail) for c in report.failed]
        names = {c.name for c in report.checks}
        assert {"softmax", "head_gradient", "head_replay", "param_counts"} <= names
