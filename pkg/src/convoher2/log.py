import logging

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
DATE_FORMAT = "%m/%d/%Y %I:%M:%S %p"


def setup_logging(level: str | int = "INFO") -> None:
    """初始化根日志（CLI 入口调用一次）"""
    if isinstance(level, str):
        level = getattr(logging, level.upper(), logging.INFO)
    logging.basicConfig(format=LOG_FORMAT, datefmt=DATE_FORMAT, level=level, force=True)
    # TensorFlow 自身的 INFO 日志过多
    logging.getLogger("tensorflow").setLevel(max(level, logging.WARNING))
