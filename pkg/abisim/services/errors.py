"""
Exception hierarchy for the interferometer simulator

Every error raised by abisim derives from AbiSimError so callers (the CLI in
particular) can map failures to exit codes with a single except clause.
"""

from typing import Any, Dict, Optional


class AbiSimError(Exception):
    """Base exception for simulator errors"""
    pass


class ConfigError(AbiSimError):
    """Raised when a configuration value is missing, mistyped or out of range"""

    def __init__(self, message: str, path: Optional[str] = None):
        self.path = path
        if path:
            message = f"{path}: {message}"
        super().__init__(message)


class ScenarioError(AbiSimError):
    """Raised when a scenario cannot be composed or executed"""
    pass


class UndersampledError(AbiSimError):
    """Raised when a trace does not resolve the dither frequency"""
    pass


class ArtifactError(AbiSimError):
    """Raised on artifact I/O problems: unreadable files, refused overwrite"""
    pass


class SchemaError(ConfigError):
    """Raised when a CSV trace does not match the trace or counts schema"""
    pass


# ==================================
# FITTING
# ==================================

class FitError(AbiSimError):
    """Base class for fringe fitting failures"""

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class NonConvergence(FitError):
    """Raised when the least-squares refinement does not converge"""
    pass


class IllConditioned(FitError):
    """Raised when the trace spans less than half a fringe"""
    pass


# ==================================
# LOCKING
# ==================================

class LockError(AbiSimError):
    """Base class for lock failures; carries the partial LockReport"""

    def __init__(self, message: str, report: Any = None):
        super().__init__(message)
        self.report = report


class LockLost(LockError):
    """Raised when the residual phase exceeds the loss threshold for a sustained interval"""
    pass


class NoAcquisition(LockError):
    """Raised when the loop does not acquire within the timeout"""
    pass
