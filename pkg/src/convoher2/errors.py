"""
统一异常定义

所有业务异常都继承 Convoher2Error，CLI 据此映射退出码。
输入/前置条件类错误同时继承 ValueError（与原有 raise ValueError 的习惯保持兼容）。
"""


class Convoher2Error(Exception):
    """项目内所有异常的基类"""


class ConfigError(Convoher2Error, ValueError):
    """配置非法（含本项目不支持的配置，如解冻骨干网络）"""


class UnknownKey(ConfigError):
    """配置文件中出现未知键"""


class ConfigTypeError(Convoher2Error, TypeError):
    """配置值无法解析为目标类型"""


# ---------- ingest ----------

class NoLabelToken(Convoher2Error, ValueError):
    """文件名中找不到评分标签"""


class AmbiguousLabel(Convoher2Error, ValueError):
    """文件名匹配到多个评分标签"""


class EmptyDataset(Convoher2Error, ValueError):
    """目录中没有可解析的图像"""


class DatasetIoError(Convoher2Error, OSError):
    """数据目录无法读取"""


class AlreadySplit(Convoher2Error, ValueError):
    """清单已带预定义划分，且未设置 force"""


class InvalidLabelPattern(Convoher2Error, ValueError):
    """标签正则无法编译，或捕获组不是恰好一个"""


class ManifestFormatError(Convoher2Error, ValueError):
    """清单文件格式不正确"""


# ---------- preprocess ----------

class ImageIoError(Convoher2Error, OSError):
    """图像文件不存在或不可读"""


class DecodeError(Convoher2Error, ValueError):
    """图像文件损坏，无法解码"""


class WrongRangeTag(Convoher2Error, ValueError):
    """张量的取值范围标记不符合要求"""


class EmptySplit(Convoher2Error, ValueError):
    """请求的划分中没有记录"""


# ---------- numerics oracle ----------

class ShapeMismatch(Convoher2Error, ValueError):
    """两个向量长度不一致"""


class NonFiniteGradient(Convoher2Error, ArithmeticError):
    """梯度中出现 NaN / Inf"""


# ---------- model ----------

class InvalidDim(Convoher2Error, ValueError):
    """维度参数非法"""


class DimMismatch(Convoher2Error, ValueError):
    """骨干网络特征维度与分类头输入维度不一致"""


class MissingWeights(Convoher2Error, OSError):
    """预训练权重不可用"""


class ShapeError(Convoher2Error, ValueError):
    """输入张量形状错误"""


class CorruptCheckpoint(Convoher2Error, OSError):
    """检查点文件损坏或不完整"""


class TopologyMismatch(Convoher2Error, ValueError):
    """检查点的分类头结构与期望结构不一致"""


class CorruptArtifact(Convoher2Error, OSError):
    """特征缓存、训练历史或评估报告文件缺失或无法解析"""


# ---------- trainer ----------

class NonFiniteLoss(Convoher2Error, ArithmeticError):
    """训练损失出现 NaN / Inf，训练中止（保留最后一个有效检查点）"""

    def __init__(self, message: str, epoch: int, last_checkpoint=None):
        super().__init__(message)
        self.epoch = epoch
        self.last_checkpoint = last_checkpoint


class BackboneMutated(Convoher2Error, RuntimeError):
    """训练结束后冻结骨干的参数校验和发生变化"""


class MissingFeature(Convoher2Error, KeyError):
    """特征缓存中缺少样本"""

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "missing feature"


# ---------- reporting ----------

class LengthMismatch(Convoher2Error, ValueError):
    """预测与标签长度不一致"""


class IndexOutOfRange(Convoher2Error, ValueError):
    """类别下标不在 [0, 3]"""


class EmptyHistory(Convoher2Error, ValueError):
    """训练历史为空，无法绘图"""
