from __future__ import annotations

from typing import Any, Dict, Optional


class OdeformerError(Exception):
    pass


class DimensionError(OdeformerError, ValueError):
    pass


class ConfigError(OdeformerError, ValueError):
    pass


class ContractError(OdeformerError):
    pass


class InputError(OdeformerError, ValueError):
    pass


class CheckpointError(OdeformerError):
    pass


class DatasetError(OdeformerError):
    pass


class DivergenceError(OdeformerError, ArithmeticError):
    """Non-finite values showed up; ``diagnostics`` says where."""

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None) -> None:
        super().__init__(message)
        self.diagnostics = diagnostics or {}
