"""工具包统一的异常类型"""
from typing import Optional


class ToolkitError(Exception):
    """所有工具包异常的公共基类"""
    kind = "error"


class InputError(ToolkitError, ValueError):
    """输入形状或取值不合法"""
    kind = "input"


class MatrixInputError(InputError):
    """矩阵输入不合法（非有限值、形状不符）"""


class DomainError(ToolkitError, ValueError):
    """参数超出公式定义域"""
    kind = "domain"


class InstabilityError(DomainError):
    """系统不稳定（谱半径过大）"""
    kind = "instability"


class CapabilityError(ToolkitError, RuntimeError):
    """请求超出计算能力（例如枚举维度过大）"""
    kind = "capability"


class ConfigValidationError(ToolkitError, ValueError):
    """配置校验失败，携带字段路径"""
    kind = "validation"

    def __init__(self, message: str, field_path: Optional[str] = None):
        self.field_path = field_path
        prefix = f"{field_path}: " if field_path else ""
        super().__init__(f"{prefix}{message}")


class PersistenceError(ToolkitError, OSError):
    """结果写入失败"""
    kind = "persistence"
