from .volume_models import Volume, LabelMap, EllipsoidSpec, DatasetManifest
from .tensor_models import EncoderFeatures, PlaneFeatures, DualPrediction, PseudoLabel, MixedBatch, ForwardOutput
from .report_models import LossReport, MetricReport, CaseEvaluation, IterationTrace, TrainingSummary, TRACE_COLUMNS
from .train_config import BackboneConfig, ModuleToggles, TrainConfig

__all__ = [
    'Volume', 'LabelMap', 'EllipsoidSpec', 'DatasetManifest',
    'EncoderFeatures', 'PlaneFeatures', 'DualPrediction', 'PseudoLabel', 'MixedBatch', 'ForwardOutput',
    'LossReport', 'MetricReport', 'CaseEvaluation', 'IterationTrace', 'TrainingSummary', 'TRACE_COLUMNS',
    'BackboneConfig', 'ModuleToggles', 'TrainConfig',
]
