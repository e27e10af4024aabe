"""Exception classes for ocl-bench."""

from typing import Dict, List, Optional


class OclBenchError(Exception):
    """Base exception for ocl-bench."""

    pass


class ConfigurationError(OclBenchError):
    """Configuration error (infeasible scenario, invalid strategy block)."""

    pass


class ValidationError(OclBenchError):
    """Argument validation error."""

    pass


class DatasetParseError(OclBenchError):
    """Malformed dataset file."""

    def __init__(self, message: str, line: Optional[int] = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class EmptyDatasetError(OclBenchError):
    """Dataset contains no examples."""

    pass


class NetworkStateError(OclBenchError):
    """Operation not valid for the current network or memory state."""

    pass


class NumericError(OclBenchError):
    """Non-finite values encountered during training."""

    def __init__(self, message: str, batch_index: Optional[int] = None):
        super().__init__(message)
        self.batch_index = batch_index


class ManifestMismatchError(OclBenchError):
    """Run records were produced from different scenarios."""

    def __init__(self, message: str, differences: Optional[List[Dict[str, str]]] = None):
        super().__init__(message)
        self.differences = differences or []
