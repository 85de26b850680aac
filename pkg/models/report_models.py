import math
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional


@dataclass
class LossReport:
    """Scalar breakdown of one iteration's objective"""
    l_sup_1: float
    l_sup_2: float
    l_unsup: float
    l_cog: float
    l_mix: float
    lambda_u: float
    l_total: float

    @classmethod
    def from_components(cls, l_sup_1: float, l_sup_2: float, l_unsup: float,
                        l_cog: float, l_mix: float, lambda_u: float) -> 'LossReport':
        l_total = l_sup_1 + l_sup_2 + l_cog + l_mix + lambda_u * l_unsup
        return cls(l_sup_1, l_sup_2, l_unsup, l_cog, l_mix, lambda_u, l_total)

    def is_finite(self) -> bool:
        return all(math.isfinite(v) for v in asdict(self).values())

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


@dataclass
class MetricReport:
    """Overlap and surface metrics of one binary comparison.

    hd95 and asd are NaN when undefined (empty mask on either side).
    """
    dice: float
    jaccard: float
    hd95: float = math.nan
    asd: float = math.nan
    defined: bool = False


@dataclass
class CaseEvaluation:
    """Headline foreground-union report plus one report per foreground class"""
    case_id: str
    foreground: MetricReport
    per_class: Dict[str, MetricReport] = field(default_factory=dict)

    def rows(self) -> List[Dict[str, Any]]:
        rows = [_metric_row(self.case_id, 'foreground', self.foreground)]
        for name, report in self.per_class.items():
            rows.append(_metric_row(self.case_id, name, report))
        return rows


def _metric_row(case_id: str, label: str, report: MetricReport) -> Dict[str, Any]:
    return {
        'case_id': case_id,
        'class': label,
        'dice': report.dice,
        'jaccard': report.jaccard,
        'hd95': report.hd95,
        'asd': report.asd,
        'defined_flag': int(report.defined),
    }


TRACE_COLUMNS = [
    'iteration', 'l_sup_1', 'l_sup_2', 'l_unsup', 'l_cog', 'l_mix',
    'lambda_u', 'l_total', 'pseudo_labeler', 'wall_ms',
]


@dataclass
class IterationTrace:
    iteration: int
    report: LossReport
    pseudo_labeler: int
    wall_ms: float
    forward_passes: Optional[int] = None

    def to_row(self) -> Dict[str, Any]:
        row = {'iteration': self.iteration}
        row.update(self.report.to_dict())
        row['pseudo_labeler'] = self.pseudo_labeler
        row['wall_ms'] = self.wall_ms
        return {column: row[column] for column in TRACE_COLUMNS}


@dataclass
class TrainingSummary:
    """Artifacts of a finished run"""
    final_checkpoint: str
    trace_path: str
    iterations: int
    best_checkpoint: Optional[str] = None
    best_val_dice: float = math.nan
    traces: List[IterationTrace] = field(default_factory=list)
