"""Data records for fuzzlab reports and output formatting."""

from dataclasses import dataclass, field
from typing import Optional


@dataclass
class FieldTrial:
    """Outcome of testing one candidate field during field selection."""

    field: str
    fuzzed: tuple[str, ...]  # candidate plus the fields already accepted
    trials: int
    successes: int
    rate: float
    accepted: bool


@dataclass(frozen=True)
class Confusion:
    """Binary confusion matrix counts (positive = malicious)."""

    tn: int
    fp: int
    fn: int
    tp: int

    @property
    def total(self) -> int:
        return self.tn + self.fp + self.fn + self.tp


@dataclass
class Metrics:
    """Detection metrics derived from a confusion matrix.

    A metric whose denominator is zero is None and listed in `undefined`.
    """

    confusion: Confusion
    accuracy: Optional[float]
    precision: Optional[float]
    recall: Optional[float]
    f1: Optional[float]
    fpr_paper: Optional[float]  # fp / (fp + tp)
    fpr_standard: Optional[float]  # fp / (fp + tn)
    undefined: list[str] = field(default_factory=list)


@dataclass
class ThresholdRow:
    """Session-level detection result for one threshold."""

    threshold: float
    sessions: int
    detected: int
    rate: float


@dataclass
class ImportanceRow:
    """Permutation importance of one feature."""

    feature: int
    baseline_f1: float
    permuted_f1: float  # mean over repeats
    importance: float
    repeats: int
    seed: int
    fields: tuple[str, ...] = ()  # packet fields the feature is read from


@dataclass
class FieldCoverage:
    """Covered / uncovered element counts for one fuzzed field."""

    field: str
    covered: int
    uncovered: int


@dataclass
class CoverageReport:
    """Coverage of real samples by fuzzed training samples."""

    x: int  # covered elements
    y: int  # uncovered elements from fuzzed fields
    rate: float
    per_field: list[FieldCoverage] = field(default_factory=list)


@dataclass
class ValueSubsetRow:
    """Whether every value seen in real traffic also appears in fuzzed traffic."""

    field: str
    real_values: int
    fuzzed_values: int
    missing: int
    subset: bool


@dataclass
class GenerationSummary:
    """Counts for one generated capture."""

    scenario: str
    mode: str
    sessions: int
    successes: int
    packets: int
    success_rate: float
