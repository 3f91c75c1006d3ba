"""实验室内的异常类型，命令行入口把它们映射为退出码"""


class ConeLabError(Exception):
    """所有领域异常的基类"""


class MetricError(ConeLabError, ValueError):
    """系数场构造或几何假设检查的输入错误"""


class SolverError(ConeLabError, RuntimeError):
    """求解器失败"""


class CFLViolationError(SolverError):
    pass


class DomainTruncationError(SolverError):
    """数据支集或查询半径碰到截断边界"""


class InstabilityError(SolverError):
    def __init__(self, message: str, step: int = -1, t: float = float("nan"), growth: float = float("nan")):
        super().__init__(message)
        self.step = step
        self.t = t
        self.growth = growth


class AnalysisError(ConeLabError, ValueError):
    pass


class SeriesTooShortError(AnalysisError):
    """能量序列太短，需要延长 T"""


class ConfigError(ConeLabError, ValueError):
    def __init__(self, message: str, field: str = "", line: int = 0):
        location = f" (field '{field}', line {line})" if field else ""
        super().__init__(f"{message}{location}")
        self.field = field
        self.line = line
