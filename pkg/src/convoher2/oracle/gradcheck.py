"""
框架梯度 vs 中心差分的梯度校验

对每个可训练参数块（dense 的 kernel/bias、BN 的 gamma/beta）：
- 参数总量 ≤ FULL_CHECK_LIMIT 时逐坐标校验
- 否则按固定种子抽取 coords_per_block 个坐标

校验步长为 h（默认 1e-3）。ReLU 在 0 处不可导，差分区间恰好跨过拐点时中心差分会偏离；
retry=True 时依次改用 h/10、h/100 重算，任一步长满足容差即视为通过。
每个坐标最终采用的步长都记在 BlockCheck.step_counts 中，
report.strict 表示所有坐标都在 h 本身通过、没有用到重试。
注入错误（如梯度 ×2）在任何步长下都无法通过。
"""
import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import keras
import numpy as np
import tensorflow as tf

from convoher2.errors import NonFiniteGradient

logger = logging.getLogger(__name__)

FULL_CHECK_LIMIT = 10_000
ABS_FLOOR = 1e-8
RETRY_FACTORS = (10.0, 100.0)


@dataclass
class BlockCheck:
    name: str
    size: int
    n_checked: int
    max_rel_error: float
    h: float = 1e-3
    step_counts: dict[float, int] = field(default_factory=dict)  # 步长 → 最终采用该步长的坐标数

    @property
    def retried(self) -> int:
        """没有在 h 本身通过、改用更小步长的坐标数"""
        return sum(n for step, n in self.step_counts.items() if step != self.h)


@dataclass
class GradientCheckReport:
    tolerance: float
    h: float
    retry: bool = True
    blocks: list[BlockCheck] = field(default_factory=list)

    @property
    def max_rel_error(self) -> float:
        return max((b.max_rel_error for b in self.blocks), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tolerance

    @property
    def retried(self) -> int:
        return sum(b.retried for b in self.blocks)

    @property
    def strict(self) -> bool:
        """通过且全部坐标都在 h 本身通过"""
        return self.passed and self.retried == 0

    @property
    def steps_used(self) -> dict[float, int]:
        total: Counter = Counter()
        for b in self.blocks:
            total.update(b.step_counts)
        return dict(sorted(total.items(), reverse=True))

    def summary(self) -> dict[str, float]:
        return {b.name: b.max_rel_error for b in self.blocks}


def relative_error(analytic: float, numeric: float, floor: float = ABS_FLOOR) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def _variable_name(var) -> str:
    return getattr(var, "path", None) or var.name


def tape_gradients(loss_fn: Callable[[], tf.Tensor], variables: Sequence) -> list[np.ndarray]:
    with tf.GradientTape() as tape:
        loss = loss_fn()
    grads = tape.gradient(loss, list(variables))
    return [np.zeros(v.shape) if g is None else np.asarray(g, dtype=np.float64) for g, v in zip(grads, variables)]


def _central_difference(loss_fn, var, base: np.ndarray, index: tuple, step: float) -> float:
    perturbed = base.copy()
    perturbed[index] = base[index] + step
    var.assign(perturbed)
    f_plus = float(loss_fn())
    perturbed[index] = base[index] - step
    var.assign(perturbed)
    f_minus = float(loss_fn())
    var.assign(base)
    return (f_plus - f_minus) / (2 * step)


def gradient_check(
    loss_fn: Callable[[], tf.Tensor],
    variables: Sequence,
    h: float = 1e-3,
    tolerance: float = 1e-3,
    coords_per_block: int = 32,
    seed: int = 0,
    analytic: Optional[Callable[[], list[np.ndarray]]] = None,
    retry: bool = True,
) -> GradientCheckReport:
    """
    Args:
        loss_fn: 无参函数，返回当前参数下的标量损失
        variables: 要校验的可训练变量（按块）
        h: 差分步长
        tolerance: 最大相对误差容差
        coords_per_block: 每块抽样坐标数（参数总量较小时全量校验）
        seed: 坐标抽样种子
        analytic: 解析梯度来源，默认用 GradientTape 求 loss_fn 的梯度
        retry: h 下未通过的坐标是否改用 h/10、h/100 重算（False 时只用 h）

    Raises:
        NonFiniteGradient: 解析梯度含 NaN / Inf
    """
    grads = analytic() if analytic is not None else tape_gradients(loss_fn, variables)
    for g, v in zip(grads, variables):
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(f"参数 {_variable_name(v)} 的梯度含非有限值")

    total = sum(int(np.prod(v.shape)) for v in variables)
    full = total <= FULL_CHECK_LIMIT
    rng = np.random.default_rng(seed)
    report = GradientCheckReport(tolerance=tolerance, h=h, retry=retry)

    for var, grad in zip(variables, grads):
        base = np.array(var.numpy(), dtype=np.float64)
        size = base.size
        if full or size <= coords_per_block:
            coords = np.arange(size)
        else:
            coords = rng.choice(size, size=coords_per_block, replace=False)

        worst = 0.0
        steps: Counter = Counter()
        for flat_index in coords:
            index = np.unravel_index(int(flat_index), base.shape)
            a = float(grad[index])
            err = relative_error(a, _central_difference(loss_fn, var, base, index, h))
            used = h
            if err > tolerance and retry:
                for factor in RETRY_FACTORS:
                    step = h / factor
                    retry_err = relative_error(a, _central_difference(loss_fn, var, base, index, step))
                    if retry_err < err:
                        err, used = retry_err, step
                    if err <= tolerance:
                        break
            steps[used] += 1
            worst = max(worst, err)

        block = BlockCheck(_variable_name(var), size, len(coords), worst, h=h, step_counts=dict(steps))
        logger.debug(
            "梯度校验 %s: %d 个坐标, 最大相对误差 %.3e, 步长 %s",
            block.name, block.n_checked, worst, block.step_counts,
        )
        report.blocks.append(block)

    if report.retried:
        logger.info("梯度校验: %d 个坐标在 h=%g 未通过，改用更小步长 %s", report.retried, h, report.steps_used)
    return report


def check_head_gradients(
    head,
    features: np.ndarray,
    labels: np.ndarray,
    h: float = 1e-3,
    tolerance: float = 1e-3,
    coords_per_block: int = 32,
    seed: int = 0,
    analytic: Optional[Callable[[], list[np.ndarray]]] = None,
    retry: bool = True,
) -> GradientCheckReport:
    """
    在一个批次上校验分类头（训练模式 BN + 平均交叉熵）的全部可训练参数

    BN 的 running 统计量会在校验前后快照/恢复，分类头状态不变。
    """
    dtype = head.layers[-1].compute_dtype
    x = tf.constant(features, dtype=dtype)
    t = tf.constant(labels, dtype=dtype)
    loss_obj = keras.losses.CategoricalCrossentropy(dtype=dtype)

    def loss_fn():
        return loss_obj(t, head(x, training=True))

    snapshot = [np.array(v.numpy()) for v in head.non_trainable_variables]
    try:
        return gradient_check(
            loss_fn,
            head.trainable_variables,
            h=h,
            tolerance=tolerance,
            coords_per_block=coords_per_block,
            seed=seed,
            analytic=analytic,
            retry=retry,
        )
    finally:
        for v, value in zip(head.non_trainable_variables, snapshot):
            v.assign(value)
