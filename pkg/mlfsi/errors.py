"""异常体系与第三方异常的归一化。"""
from __future__ import annotations

import numpy as np
from pydantic import ValidationError


class FsiError(RuntimeError):
    pass


class BoundsError(FsiError, ValueError):
    pass


class DomainError(FsiError, ValueError):
    pass


class DimensionError(FsiError, ValueError):
    pass


class ParseError(FsiError):
    """文本输入（网格、状态快照、配置）格式错误。"""

    def __init__(self, message: str, *, line: int | None = None, section: str | None = None):
        where = []
        if section:
            where.append(f"段 {section}")
        if line is not None:
            where.append(f"第 {line} 行")
        super().__init__(f"{message}（{'，'.join(where)}）" if where else message)
        self.line = line
        self.section = section


class MeshParseError(ParseError):
    pass


class MeshValidationError(FsiError):
    def __init__(self, message: str, *, entity: str = "", entity_id: int | None = None):
        super().__init__(message)
        self.entity = entity
        self.entity_id = entity_id


class ConvexityError(MeshValidationError):
    pass


class TopologyError(MeshValidationError):
    pass


class CompatibilityError(FsiError):
    def __init__(self, message: str, *, condition: str, node: int | None = None):
        super().__init__(f"相容性条件 ({condition}) 不满足：{message}")
        self.condition = condition
        self.node = node


class NumericError(FsiError):
    def __init__(self, message: str, *, residual: float | None = None):
        super().__init__(message if residual is None else f"{message}（残差 {residual:.3e}）")
        self.residual = residual


class AssemblyConsistencyError(FsiError):
    def __init__(self, message: str, *, deviation: float):
        super().__init__(f"{message}（偏差 {deviation:.3e}）")
        self.deviation = deviation


class InvariantViolation(FsiError):
    def __init__(self, message: str, *, step: int | None = None):
        super().__init__(message if step is None else f"第 {step} 步：{message}")
        self.step = step


class LedgerViolation(InvariantViolation):
    pass


def normalize_error(exc: Exception) -> Exception:
    """把第三方异常归一到 FsiError 体系。"""
    if isinstance(exc, FsiError):
        return exc
    if isinstance(exc, np.linalg.LinAlgError):
        return NumericError(f"线性代数失败：{exc}")
    if isinstance(exc, ValidationError):
        return BoundsError(f"配置无效：{exc.errors(include_url=False)}")
    if isinstance(exc, RuntimeError) and "singular" in str(exc).lower():
        return NumericError(f"矩阵奇异：{exc}")
    return exc


def exit_code_for(exc: Exception) -> int:
    exc = normalize_error(exc)
    if isinstance(exc, (BoundsError, DomainError, DimensionError, ParseError, MeshValidationError)):
        return 2
    if isinstance(exc, (InvariantViolation, AssemblyConsistencyError, CompatibilityError)):
        return 3
    if isinstance(exc, NumericError):
        return 4
    return 1
