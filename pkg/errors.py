"""
Exception hierarchy shared by the kernels, loaders and the model file codec
"""


class HDError(Exception):
    """Base class for every error raised by this package"""


class DimensionError(HDError, ValueError):
    """Dimension is invalid or two operands disagree on it"""


class CutoffError(HDError, ValueError):
    """Stochastic binarization cutoff is not positive"""


class UndefinedSimilarityError(HDError, ValueError):
    """Similarity against a zero-norm vector"""


class AccumulatorOverflowError(HDError, OverflowError):
    """Accumulation left the signed 32-bit element range"""


class ConfigError(HDError, ValueError):
    pass


class DatasetError(HDError, ValueError):
    """Malformed dataset file; carries the path and 1-based line number when known"""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ''
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(f"{where}{message}")


class ModelFileError(HDError, ValueError):
    pass


class DigestMismatchError(ModelFileError):
    pass


class TruncatedFileError(ModelFileError):
    pass


class VersionError(ModelFileError):
    pass
