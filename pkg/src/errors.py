"""
Exception hierarchy shared by all pipeline stages
"""


class AvNodeError(Exception):
    """Base class for all errors raised by this package"""


class DataError(AvNodeError):
    """Input data could not be used (bad file, empty series, malformed row)"""

    def __init__(self, message: str, path: str = None, line: int = None):
        self.path = path
        self.line = line
        location = ""
        if path is not None:
            location = f"{path}"
            if line is not None:
                location += f":{line}"
            location += ": "
        super().__init__(f"{location}{message}")


class ConfigError(AvNodeError):
    """Invalid configuration or synthetic cohort specification"""


class EstimationError(AvNodeError):
    """Numerical failure inside an estimator"""


class AbcStallError(EstimationError):
    """ABC acceptance stalled: too many proposals for one particle slot"""

    def __init__(self, iteration: int, slot: int, proposals: int, threshold: float):
        self.iteration = iteration
        self.slot = slot
        self.proposals = proposals
        self.threshold = threshold
        super().__init__(
            f"ABC stalled at iteration {iteration}, slot {slot}: "
            f"{proposals} proposals without eps <= {threshold:.6g}"
        )

    def __reduce__(self):
        return (type(self), (self.iteration, self.slot, self.proposals, self.threshold))
