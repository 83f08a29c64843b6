"""
文件名 → HER2 评分标签解析

文件名规则可配置。默认规则取“最后一个下划线与扩展名之间”的片段，
对应 BCI 数据集的命名方式，如 ``00012_train_3+.png``。
"""
import re
from pathlib import Path

from convoher2.enums import Her2Score
from convoher2.errors import AmbiguousLabel, InvalidLabelPattern, NoLabelToken

DEFAULT_LABEL_PATTERN = r"_(0|1\+|2\+|3\+)\.[^._]+$"


def _compile(pattern: str | re.Pattern) -> re.Pattern:
    try:
        regex = re.compile(pattern) if isinstance(pattern, str) else pattern
    except re.error as e:
        raise InvalidLabelPattern(f"标签规则无法编译: {pattern!r} ({e})") from e
    if regex.groups != 1:
        raise InvalidLabelPattern(f"标签规则必须恰好包含一个捕获组，实际 {regex.groups} 个: {regex.pattern!r}")
    return regex


def _single_match(filename: str, regex: re.Pattern) -> re.Match:
    if not filename:
        raise ValueError("文件名为空")

    matches = list(regex.finditer(filename))
    if not matches:
        raise NoLabelToken(f"文件名中没有评分标签: {filename!r}")
    if len(matches) > 1:
        tokens = [m.group(1) for m in matches]
        raise AmbiguousLabel(f"文件名匹配到多个评分标签 {tokens}: {filename!r}")
    return matches[0]


def parse_label(filename: str, pattern: str | re.Pattern = DEFAULT_LABEL_PATTERN) -> Her2Score:
    """
    从文件名中解析 HER2 评分

    Args:
        filename: 文件名（不含目录也可）
        pattern: 含一个捕获组的正则，捕获 0 / 1+ / 2+ / 3+

    Raises:
        NoLabelToken: 没有匹配，或捕获到的不是合法评分
        AmbiguousLabel: 匹配多于一次
        InvalidLabelPattern: 正则无法编译或捕获组不是一个

    Example:
        >>> parse_label("00012_train_3+.png")
        <Her2Score.THREE_PLUS: '3+'>
    """
    match = _single_match(Path(filename).name, _compile(pattern))
    token = match.group(1)
    try:
        return Her2Score.from_label(token)
    except ValueError:
        raise NoLabelToken(f"捕获到的片段 {token!r} 不是合法评分: {filename!r}") from None


def sample_id_from_filename(filename: str, pattern: str | re.Pattern = DEFAULT_LABEL_PATTERN) -> str:
    """
    样本 ID：去掉评分片段与扩展名后的文件名

    同一切片的 HE / IHC 图像文件名相同，因此 ID 可跨模态配对。
    ``00012_train_3+.png`` → ``00012_train``
    """
    name = Path(filename).name
    match = _single_match(name, _compile(pattern))
    start, end = match.span(1)
    remainder = Path(name[:start] + name[end:]).stem
    sample_id = remainder.strip("_-. ")
    if not sample_id:
        raise NoLabelToken(f"去掉评分标签后样本 ID 为空: {filename!r}")
    return sample_id
