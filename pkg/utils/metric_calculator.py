import logging
import math
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import torch
from scipy.ndimage import binary_erosion, distance_transform_edt, generate_binary_structure

from models.report_models import CaseEvaluation, MetricReport
from utils.errors import UndefinedMetricError, ValidationError
from utils.validation import InputValidator

logger = logging.getLogger(__name__)

METRIC_COLUMNS = ['case_id', 'class', 'dice', 'jaccard', 'hd95', 'asd', 'defined_flag']


class MetricCalculator:
    """Dice, Jaccard, 95% Hausdorff and average surface distance on hard masks"""

    def __init__(self, percentile: int = 95):
        self.percentile = percentile
        self.connectivity = generate_binary_structure(3, 1)  # 6-connected faces
        self.validator = InputValidator()

    def dice_jaccard(self, a: np.ndarray, b: np.ndarray) -> Tuple[float, float]:
        """Overlap metrics; two empty masks count as a perfect match"""
        a, b = self._as_masks(a, b)
        size_a, size_b = int(a.sum()), int(b.sum())
        if size_a == 0 and size_b == 0:
            return 1.0, 1.0
        intersection = int(np.logical_and(a, b).sum())
        union = int(np.logical_or(a, b).sum())
        return 2.0 * intersection / (size_a + size_b), intersection / union

    def surface(self, mask: np.ndarray) -> np.ndarray:
        """Foreground voxels with a background or out-of-grid face neighbour"""
        eroded = binary_erosion(mask, structure=self.connectivity, border_value=0)
        return np.logical_and(mask, np.logical_not(eroded))

    def directed_distances(self, a: np.ndarray, b: np.ndarray,
                           spacing: Sequence[float] = (1.0, 1.0, 1.0)) -> np.ndarray:
        """Distance from every surface voxel of a to the nearest surface voxel centre of b"""
        surface_a, surface_b = self.surface(a), self.surface(b)
        to_b = distance_transform_edt(np.logical_not(surface_b), sampling=tuple(spacing))
        return np.asarray(to_b[surface_a], dtype=np.float64)

    def surface_distances(self, a: np.ndarray, b: np.ndarray,
                          spacing: Sequence[float] = (1.0, 1.0, 1.0)) -> Tuple[float, float]:
        """(hd95, asd) in spacing units.

        hd95 is the larger of the two directed nearest-rank 95th percentiles; asd is
        the mean over both directed distance sets pooled together.
        """
        a, b = self._as_masks(a, b)
        spacing = self.validator.validate_spacing(spacing)
        if not a.any() or not b.any():
            raise UndefinedMetricError(
                f"Surface distance undefined for empty mask (|a|={int(a.sum())}, |b|={int(b.sum())})"
            )
        a_to_b = self.directed_distances(a, b, spacing)
        b_to_a = self.directed_distances(b, a, spacing)
        hd95 = max(self._nearest_rank(a_to_b), self._nearest_rank(b_to_a))
        asd = float(np.concatenate([a_to_b, b_to_a]).mean())
        return hd95, asd

    def compare(self, a: np.ndarray, b: np.ndarray,
                spacing: Sequence[float] = (1.0, 1.0, 1.0)) -> MetricReport:
        dice, jaccard = self.dice_jaccard(a, b)
        try:
            hd95, asd = self.surface_distances(a, b, spacing)
        except UndefinedMetricError as e:
            logger.warning(f"Surface metrics skipped: {e}")
            return MetricReport(dice=dice, jaccard=jaccard)
        return MetricReport(dice=dice, jaccard=jaccard, hd95=hd95, asd=asd, defined=True)

    def evaluate_case(self, y_hat: Union[torch.Tensor, np.ndarray], labels: np.ndarray,
                      spacing: Sequence[float] = (1.0, 1.0, 1.0), case_id: str = 'case',
                      class_names: Optional[Sequence[str]] = None) -> CaseEvaluation:
        """Binarize a K x H x W x D probability field and score it against the labels.

        The headline report compares foreground unions; one extra report per
        foreground class follows.
        """
        if isinstance(y_hat, torch.Tensor):
            y_hat = y_hat.detach().cpu().numpy()
        if y_hat.ndim != 4:
            raise ValidationError(f"Expected a K x H x W x D field, got shape {y_hat.shape}")
        labels = np.asarray(labels)
        self.validator.validate_same_shape(y_hat[0], labels, names=('prediction', 'labels'))

        num_classes = y_hat.shape[0]
        if class_names is None:
            class_names = [f'class_{k}' for k in range(num_classes)]
        prediction = np.argmax(y_hat, axis=0)
        return self.evaluate_labels(prediction, labels, spacing, case_id, class_names)

    def evaluate_labels(self, prediction: np.ndarray, labels: np.ndarray,
                        spacing: Sequence[float], case_id: str,
                        class_names: Sequence[str]) -> CaseEvaluation:
        foreground = self.compare(prediction != 0, labels != 0, spacing)
        per_class: Dict[str, MetricReport] = {}
        if len(class_names) > 2:
            for k in range(1, len(class_names)):
                per_class[class_names[k]] = self.compare(prediction == k, labels == k, spacing)
        return CaseEvaluation(case_id=case_id, foreground=foreground, per_class=per_class)

    def to_frame(self, cases: Iterable[CaseEvaluation]) -> pd.DataFrame:
        """Per-case rows followed by mean and std rows for each class label"""
        rows: List[dict] = []
        for case in cases:
            rows.extend(case.rows())
        frame = pd.DataFrame(rows, columns=METRIC_COLUMNS)
        if frame.empty:
            return frame

        aggregates = []
        for label, group in frame.groupby('class', sort=False):
            defined = int(group['defined_flag'].sum())
            for stat in ('mean', 'std'):
                row = {'case_id': stat, 'class': label, 'defined_flag': defined}
                for column in ('dice', 'jaccard', 'hd95', 'asd'):
                    values = group[column]
                    row[column] = values.mean() if stat == 'mean' else values.std(ddof=0)
                aggregates.append(row)
        return pd.concat([frame, pd.DataFrame(aggregates, columns=METRIC_COLUMNS)], ignore_index=True)

    def write_csv(self, cases: Iterable[CaseEvaluation], path: str) -> pd.DataFrame:
        frame = self.to_frame(cases)
        frame.to_csv(path, index=False, float_format='%.10g')
        logger.info(f"Wrote {len(frame)} metric rows to {path}")
        return frame

    @staticmethod
    def mean_foreground_dice(cases: Sequence[CaseEvaluation]) -> float:
        if not cases:
            return math.nan
        return float(np.mean([case.foreground.dice for case in cases]))

    def _nearest_rank(self, distances: np.ndarray) -> float:
        # inverted_cdf is the nearest-rank definition: smallest d with rank >= ceil(p*n/100)
        return float(np.percentile(distances, self.percentile, method='inverted_cdf'))

    def _as_masks(self, a, b) -> Tuple[np.ndarray, np.ndarray]:
        a = np.asarray(a).astype(bool)
        b = np.asarray(b).astype(bool)
        self.validator.validate_same_shape(a, b, names=('a', 'b'))
        if a.ndim != 3:
            raise ValidationError(f"Masks must be 3D, got shape {a.shape}")
        return a, b
