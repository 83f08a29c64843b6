from convoher2.oracle.activations import relu, softmax
from convoher2.oracle.batchnorm import (
    BatchNormParams,
    BatchNormTrainResult,
    NormBatch,
    bn_forward_infer,
    bn_forward_train,
)
from convoher2.oracle.finite_diff import finite_diff_grad
from convoher2.oracle.gradcheck import (
    BlockCheck,
    GradientCheckReport,
    check_head_gradients,
    gradient_check,
    relative_error,
)
from convoher2.oracle.loss import PROB_CLIP, cross_entropy, mean_cross_entropy, softmax_cross_entropy_grad
from convoher2.oracle.replay import head_forward

__all__ = [
    "BatchNormParams",
    "BatchNormTrainResult",
    "BlockCheck",
    "GradientCheckReport",
    "NormBatch",
    "PROB_CLIP",
    "bn_forward_infer",
    "bn_forward_train",
    "check_head_gradients",
    "cross_entropy",
    "finite_diff_grad",
    "gradient_check",
    "head_forward",
    "mean_cross_entropy",
    "relative_error",
    "relu",
    "softmax",
    "softmax_cross_entropy_grad",
]
