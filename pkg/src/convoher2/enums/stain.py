from enum import Enum


class StainModality(Enum):
    """染色方式：H&E 或 IHC（两种模态各自独立训练）"""
    HE = "HE"
    IHC = "IHC"

    @classmethod
    def parse(cls, token: str) -> "StainModality":
        try:
            return cls(token.strip().upper().replace("&", ""))
        except ValueError:
            raise ValueError(f"未知染色方式: {token!r}（应为 HE 或 IHC）") from None

    def __str__(self) -> str:
        return self.value
