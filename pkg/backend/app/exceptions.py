"""
MTGrow — Error Hierarchy

Every failure the toolkit raises on purpose derives from MTGrowError and
carries:
- detail: human-readable message
- exit_code: distinct process exit code used by the CLI

Exit code 0 is success and 1 is reserved for unexpected exceptions.
"""

from typing import List, Optional


class MTGrowError(Exception):
    """Base class for all toolkit errors."""

    exit_code: int = 2

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


# ------- Tensor math -------

class DimensionError(MTGrowError):
    exit_code = 10

    def __init__(self, op: str, shape_a, shape_b=None):
        if shape_b is None:
            detail = f"{op}: incompatible shape {tuple(shape_a)}"
        else:
            detail = f"{op}: incompatible shapes {tuple(shape_a)} and {tuple(shape_b)}"
        super().__init__(detail)
        self.shape_a = tuple(shape_a)
        self.shape_b = tuple(shape_b) if shape_b is not None else None


class AxisError(MTGrowError):
    exit_code = 11


class ConfigError(MTGrowError):
    exit_code = 12


# ------- Vocabulary -------

class VocabError(MTGrowError):
    exit_code = 20


# ------- Checkpoints -------

class CheckpointError(MTGrowError):
    exit_code = 30


class BadMagicError(CheckpointError):
    exit_code = 31


class VersionMismatchError(CheckpointError):
    exit_code = 32


class TruncatedCheckpointError(CheckpointError):
    exit_code = 33


class IndexMismatchError(CheckpointError):
    exit_code = 34


# ------- Surgery & training -------

class SurgeryError(MTGrowError):
    exit_code = 40


class NonFiniteGradientError(MTGrowError):
    exit_code = 41

    def __init__(self, step: int, names: List[str]):
        super().__init__(
            f"Non-finite gradient at step {step} in: {', '.join(names)}"
        )
        self.step = step
        self.names = names


class MetricError(MTGrowError):
    exit_code = 42


# ------- Experiments -------

class ManifestError(MTGrowError):
    exit_code = 50

    def __init__(self, detail: str, field_path: Optional[str] = None):
        if field_path:
            detail = f"{field_path}: {detail}"
        super().__init__(detail)
        self.field_path = field_path


class StageDependencyError(MTGrowError):
    exit_code = 51


class ManifestMismatchError(MTGrowError):
    exit_code = 52


class UnknownAxisError(MTGrowError):
    exit_code = 53
