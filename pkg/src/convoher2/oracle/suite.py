"""
数值校验套件（CLI ``verify`` 调用）

每一项检查互相独立，某一项抛异常只记为该项失败，不影响其他项。
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import keras
import numpy as np
import tensorflow as tf

from convoher2.enums import NUM_SCORES
from convoher2.model.checkpoint import export_flat_weights
from convoher2.model.network import compose, forward_features
from convoher2.model.params import count_params
from convoher2.model.specs import BackboneSpec, build_head
from convoher2.oracle.activations import relu, softmax
from convoher2.oracle.batchnorm import DEFAULT_EPSILON, DEFAULT_MOMENTUM, BatchNormParams, bn_forward_infer, bn_forward_train
from convoher2.oracle.finite_diff import finite_diff_grad
from convoher2.oracle.gradcheck import check_head_gradients, tape_gradients
from convoher2.oracle.loss import cross_entropy, softmax_cross_entropy_grad
from convoher2.oracle.replay import head_forward

logger = logging.getLogger(__name__)

FULL_MODEL_COUNTS = (31_542_052, 9_724_932, 21_817_120)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class VerificationReport:
    checks: list[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return bool(self.checks) and all(c.passed for c in self.checks)

    @property
    def failed(self) -> list[CheckResult]:
        return [c for c in self.checks if not c.passed]


def _close(a, b, tol: float) -> bool:
    return bool(np.allclose(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64), atol=tol, rtol=0))


def check_softmax() -> CheckResult:
    p = softmax(np.array([1.0, 2.0, 3.0]))
    ok = _close(p, [0.090031, 0.244728, 0.665241], 1e-6)
    ok &= _close(softmax(np.zeros(4)), np.full(4, 0.25), 1e-12)
    big = softmax(np.array([1000.0, 0.0, 0.0, 0.0]))
    ok &= bool(np.all(np.isfinite(big))) and _close(big, [1, 0, 0, 0], 1e-12)
    z = np.random.default_rng(0).normal(size=(8, NUM_SCORES))
    ok &= _close(softmax(z + 123.4), softmax(z), 1e-12)
    return CheckResult("softmax", ok, f"softmax([1,2,3]) = {np.round(p, 6).tolist()}")


def check_relu() -> CheckResult:
    x = np.array([-1.0, 0.0, 3.0])
    ok = _close(relu(x), [0.0, 0.0, 3.0], 0) and _close(relu(relu(x)), relu(x), 0)
    return CheckResult("relu", ok)


def check_cross_entropy() -> CheckResult:
    t = np.eye(NUM_SCORES)[2]
    uniform = cross_entropy(np.full(NUM_SCORES, 0.25), t)
    clipped = cross_entropy(np.array([1 - 1e-9, 0.0, 1e-9, 0.0]), t)
    ok = abs(uniform - math.log(4)) < 1e-6 and abs(clipped - 16.1181) < 1e-4
    ok &= cross_entropy(t, t) == 0.0
    return CheckResult("cross_entropy", ok, f"uniform={uniform:.6f}, clipped={clipped:.4f}")


def check_batchnorm_formulas() -> CheckResult:
    x = np.array([1.0, 2.0, 3.0])
    res = bn_forward_train(x, BatchNormParams(epsilon=0.0))
    ok = _close(res.y, [-1.224745, 0.0, 1.224745], 1e-6)
    ok &= abs(res.mu_B - 2.0) < 1e-12 and abs(res.sigma2_B - 2 / 3) < 1e-12

    scaled = bn_forward_train(x, BatchNormParams(gamma=2.0, beta=1.0, epsilon=0.0))
    ok &= _close(scaled.y, [-1.449490, 1.0, 3.449490], 1e-6)

    as_running = BatchNormParams(epsilon=0.0, running_mean=2.0, running_var=2 / 3)
    ok &= _close(bn_forward_infer(x, as_running), res.y, 1e-9)
    ok &= _close(bn_forward_train(np.full(3, 5.0), BatchNormParams(beta=0.3)).y, np.full(3, 0.3), 1e-12)
    return CheckResult("batchnorm_formulas", ok, f"y = {np.round(res.y, 6).tolist()}")


def check_batchnorm_vs_framework() -> CheckResult:
    """框架 BN 层（训练 + 推理 + running 统计量更新）与参考实现一致"""
    rng = np.random.default_rng(1)
    x = rng.normal(2.0, 3.0, size=(16, 6))
    layer = keras.layers.BatchNormalization(momentum=DEFAULT_MOMENTUM, epsilon=DEFAULT_EPSILON, dtype="float64")
    layer.build((None, 6))
    gamma = rng.uniform(0.5, 1.5, size=6)
    beta = rng.normal(size=6)
    layer.gamma.assign(gamma)
    layer.beta.assign(beta)

    y_train = np.asarray(layer(x, training=True))
    res = bn_forward_train(x, BatchNormParams(gamma=gamma, beta=beta))
    ok = _close(y_train, res.y, 1e-9)
    ok &= _close(layer.moving_mean.numpy(), res.params.running_mean, 1e-9)
    ok &= _close(layer.moving_variance.numpy(), res.params.running_var, 1e-9)

    y_infer = np.asarray(layer(x, training=False))
    ok &= _close(y_infer, bn_forward_infer(x, res.params), 1e-9)
    return CheckResult("batchnorm_vs_framework", ok, f"max |Δ| = {np.max(np.abs(y_train - res.y)):.2e}")


def check_softmax_ce_gradient() -> CheckResult:
    rng = np.random.default_rng(2)
    z = rng.normal(size=NUM_SCORES)
    t = np.eye(NUM_SCORES)[1]
    numeric = finite_diff_grad(lambda v: cross_entropy(softmax(v), t), z, h=1e-5)
    analytic = softmax_cross_entropy_grad(softmax(z), t)
    rel = float(np.max(np.abs(numeric - analytic) / np.maximum(np.abs(analytic), 1e-8)))
    return CheckResult("softmax_ce_gradient", rel <= 1e-6, f"max rel error = {rel:.2e}")


def _small_handle(variant: str, input_dim: int):
    backbone = BackboneSpec.stub(feature_dim=input_dim, input_side=16)
    return compose(backbone, build_head(input_dim, variant), seed=3, dtype="float64")


def _labelled_batch(n: int, dim: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    features = rng.normal(size=(n, dim))
    labels = np.eye(NUM_SCORES)[np.arange(n) % NUM_SCORES]
    return features, labels


def check_head_gradient() -> CheckResult:
    """完整分类头结构（缩小宽度）上的梯度校验，同时确认注入的错误梯度会被发现"""
    handle = _small_handle("convoher2", 8)
    features, labels = _labelled_batch(8, 8, seed=4)
    report = check_head_gradients(handle.head, features, labels)

    def doubled():
        x = tf.constant(features)
        t = tf.constant(labels)
        loss_obj = keras.losses.CategoricalCrossentropy(dtype="float64")
        grads = tape_gradients(lambda: loss_obj(t, handle.head(x, training=True)), handle.head.trainable_variables)
        return [2.0 * g for g in grads]

    corrupted = check_head_gradients(handle.head, features, labels, analytic=doubled)
    ok = report.passed and not corrupted.passed
    return CheckResult(
        "head_gradient",
        ok,
        f"max rel error = {report.max_rel_error:.2e}, steps = {report.steps_used}, injected ×2 → {corrupted.max_rel_error:.2e}",
    )


def check_baseline_gradient() -> CheckResult:
    handle = _small_handle("baseline", 16)
    features, labels = _labelled_batch(4, 16, seed=5)
    report = check_head_gradients(handle.head, features, labels)
    return CheckResult(
        "baseline_gradient", report.passed, f"max rel error = {report.max_rel_error:.2e}, steps = {report.steps_used}",
    )


def check_head_replay() -> CheckResult:
    """框架分类头前向 = 参考实现逐层重放（推理 + 训练两种模式）"""
    handle = _small_handle("convoher2", 8)
    features, _ = _labelled_batch(12, 8, seed=6)
    flat = export_flat_weights(handle)
    worst = 0.0
    for mode in ("infer", "train"):
        framework = forward_features(handle, features, mode)
        reference = head_forward(flat, features, mode)
        worst = max(worst, float(np.max(np.abs(framework - reference))))
    return CheckResult("head_replay", worst <= 1e-4, f"max |Δ| = {worst:.2e}")


def check_param_counts() -> CheckResult:
    counts = count_params(build_head(2048), BackboneSpec()).as_tuple()
    return CheckResult("param_counts", counts == FULL_MODEL_COUNTS, "total / trainable / non-trainable = " + " / ".join(f"{c:,}" for c in counts))


CHECKS: tuple[Callable[[], CheckResult], ...] = (
    check_softmax,
    check_relu,
    check_cross_entropy,
    check_batchnorm_formulas,
    check_batchnorm_vs_framework,
    check_softmax_ce_gradient,
    check_head_gradient,
    check_baseline_gradient,
    check_head_replay,
    check_param_counts,
)


def run_verification_suite() -> VerificationReport:
    report = VerificationReport()
    for check in CHECKS:
        try:
            result = check()
        except Exception as e:  # 单项异常只记为失败
            logger.exception("校验 %s 异常", check.__name__)
            result = CheckResult(check.__name__.removeprefix("check_"), False, f"{type(e).__name__}: {e}")
        report.checks.append(result)
    return report
