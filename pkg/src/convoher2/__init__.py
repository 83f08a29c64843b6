"""convoher2：HER2 乳腺癌染色切片四级评分（0 / 1+ / 2+ / 3+）"""

__version__ = "0.1.0"
