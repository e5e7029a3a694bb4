from typing import Optional, Tuple


class DomainException(Exception): ...


class NoConvergenceException(Exception):
    def __init__(self, message: str, bracket: Optional[Tuple[float, float]] = None):
        super().__init__(message)
        self.bracket = bracket


class NoRootException(Exception):
    def __init__(self, message: str, scanned: Optional[Tuple[float, float]] = None):
        super().__init__(message)
        self.scanned = scanned


class NoBracketException(Exception):
    def __init__(self, message: str, bracket: Optional[Tuple[float, float]] = None):
        super().__init__(message)
        self.bracket = bracket


class QuadratureException(Exception):
    def __init__(self, message: str, error_estimate: float = float("nan")):
        super().__init__(message)
        self.error_estimate = error_estimate
