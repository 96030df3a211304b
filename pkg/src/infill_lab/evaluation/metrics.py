"""
Task metrics: exact match, Pearson / Spearman / Kendall correlations, infill
diagnostics, and aggregation of reports over seeds.
"""

import math
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from ..errors import ContractError, UndefinedMetricError


def normalize_answer(text: str) -> str:
    """Trim and collapse internal whitespace runs to one space."""
    return " ".join(text.split())


def exact_match(prediction: str, reference: str) -> int:
    return int(normalize_answer(prediction) == normalize_answer(reference))


def parse_number(text: str) -> Optional[float]:
    """Read a number written as space-separated symbols ("- 1 2" -> -12.0)."""
    joined = "".join(text.split())
    try:
        value = float(joined)
    except ValueError:
        return None
    return value if math.isfinite(value) else None


def rank_correlations(x: Sequence[float], y: Sequence[float]) -> Tuple[float, float, float]:
    """
    Pearson r, Spearman rho and Kendall tau-b of two paired samples.

    Spearman is Pearson on average ranks; Kendall uses the tau-b tie
    correction.

    Raises:
        UndefinedMetricError: fewer than two pairs, or a constant input
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ContractError("correlation inputs must be equal-length vectors")
    if len(x) < 2:
        raise UndefinedMetricError("correlations need at least two pairs")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise UndefinedMetricError("correlation is undefined for a constant input")
    pearson = stats.pearsonr(x, y)[0]
    spearman = stats.spearmanr(x, y)[0]
    kendall = stats.kendalltau(x, y, variant="b")[0]
    return float(pearson), float(spearman), float(kendall)


@dataclass(frozen=True)
class MetricReport:
    """Exact match plus correlations between numeric predictions and references."""
    exact_match: float
    pearson: Optional[float]
    spearman: Optional[float]
    kendall: Optional[float]
    count: int

    def __post_init__(self):
        if not 0.0 <= self.exact_match <= 1.0:
            raise ContractError(f"exact match {self.exact_match} outside [0, 1]")
        for name in ("pearson", "spearman", "kendall"):
            value = getattr(self, name)
            if value is not None and not -1.0 - 1e-12 <= value <= 1.0 + 1e-12:
                raise ContractError(f"{name} {value} outside [-1, 1]")

    def to_record(self) -> Dict[str, Optional[float]]:
        return asdict(self)


def metric_report(predictions: Sequence[str], references: Sequence[str], numeric: bool = False) -> MetricReport:
    """
    Score predictions against references.

    Args:
        predictions: Generated answers
        references: Reference answers
        numeric: Also correlate answers that parse as numbers

    Returns:
        MetricReport; correlations are None when undefined or not requested
    """
    if len(predictions) != len(references):
        raise ContractError("predictions and references differ in count")
    if not predictions:
        raise UndefinedMetricError("no predictions to score")
    em = float(np.mean([exact_match(p, r) for p, r in zip(predictions, references)]))
    pearson = spearman = kendall = None
    if numeric:
        pairs = [(parse_number(p), parse_number(r)) for p, r in zip(predictions, references)]
        pairs = [(p, r) for p, r in pairs if p is not None and r is not None]
        if pairs:
            try:
                pearson, spearman, kendall = rank_correlations(*zip(*pairs))
            except UndefinedMetricError:
                pass
    return MetricReport(em, pearson, spearman, kendall, len(predictions))


def infill_diagnostics(
    candidate: Sequence[int],
    reference: Sequence[int],
    mask_spans: Sequence[Tuple[int, int]],
    eos_id: int,
    pad_id: int,
) -> Tuple[float, float]:
    """
    Token accuracy inside the mask spans and the fraction of span positions
    holding EOS or PAD.

    Args:
        candidate: Infilled tokens
        reference: Reference template tokens
        mask_spans: [start, end) ranges that were infilled
        eos_id: EOS token id
        pad_id: PAD token id

    Returns:
        (accuracy, fill_fraction)
    """
    if len(candidate) != len(reference):
        raise ContractError("candidate and reference differ in length")
    positions: List[int] = []
    for start, end in mask_spans:
        if not 0 <= start < end <= len(reference):
            raise ContractError(f"span [{start}, {end}) does not fit a sequence of length {len(reference)}")
        positions.extend(range(start, end))
    if not positions:
        raise UndefinedMetricError("no masked positions to diagnose")
    correct = sum(candidate[p] == reference[p] for p in positions)
    filled = sum(candidate[p] in (eos_id, pad_id) for p in positions)
    return correct / len(positions), filled / len(positions)


def aggregate_reports(reports: Sequence[MetricReport]) -> Dict[str, Tuple[float, float]]:
    """
    Mean and standard deviation of every report field across runs.

    Undefined correlations are skipped; a field undefined everywhere maps to
    (nan, nan).
    """
    if not reports:
        raise UndefinedMetricError("no reports to aggregate")
    summary: Dict[str, Tuple[float, float]] = {}
    for name in ("exact_match", "pearson", "spearman", "kendall", "count"):
        values = [getattr(r, name) for r in reports if getattr(r, name) is not None]
        if not values:
            summary[name] = (math.nan, math.nan)
            continue
        std = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
        summary[name] = (float(np.mean(values)), std)
    return summary


@dataclass(frozen=True)
class RecoveryReport:
    """Mean infill diagnostics over a set of recovered templates."""
    accuracy: float
    fill_fraction: float
    count: int

    @classmethod
    def from_pairs(cls, diagnostics: Sequence[Tuple[float, float]]) -> "RecoveryReport":
        if not diagnostics:
            raise UndefinedMetricError("no infill diagnostics to summarize")
        accuracy, fill = np.mean(np.asarray(diagnostics, dtype=np.float64), axis=0)
        return cls(float(accuracy), float(fill), len(diagnostics))

    def to_record(self) -> Dict[str, float]:
        return asdict(self)
