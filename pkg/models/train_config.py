import os
from dataclasses import dataclass
from typing import Any, Dict, Literal, Optional, Tuple

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from pydantic import ValidationError as PydanticValidationError

import config
from utils.errors import ConfigError, ValidationError


@dataclass
class BackboneConfig:
    """Size of the dual-decoder V-Net"""
    num_classes: int
    base_channels: int = 4
    depth: int = 3
    in_channels: int = 1
    dropout: float = 0.0

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValidationError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.base_channels < 1:
            raise ValidationError(f"base_channels must be >= 1, got {self.base_channels}")
        if self.depth < 1:
            raise ValidationError(f"depth must be >= 1, got {self.depth}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValidationError(f"dropout must be in [0, 1), got {self.dropout}")

    @property
    def downsampling(self) -> int:
        """Factor every input dim must be divisible by"""
        return 2 ** (self.depth - 1)

    def stage_channels(self, stage: int) -> int:
        return self.base_channels * 2 ** stage

    @property
    def bottleneck_channels(self) -> int:
        return self.stage_channels(self.depth - 1)


@dataclass(frozen=True)
class ModuleToggles:
    """Which Text-SemiSeg components are active in a run"""
    tmr: bool = True
    csa: bool = True
    dca: bool = True
    unsup: bool = True
    text_injection: str = 'multiplanar'

    @property
    def uses_text(self) -> bool:
        return self.tmr or self.csa


def _parse_triplet(value):
    if isinstance(value, str):
        parts = [p for p in value.replace('x', ',').split(',') if p.strip()]
        value = [int(p) for p in parts]
    if isinstance(value, int):
        value = [value]
    value = list(value)
    if len(value) == 1:
        value = value * 3
    return tuple(value)


class TrainConfig(BaseModel):
    """Declarative description of one training run"""
    model_config = ConfigDict(extra='forbid', validate_assignment=True)

    manifest: str
    patch_size: Tuple[int, int, int] = (32, 32, 32)
    batch_size: int = Field(default=4, ge=2)
    labeled_per_batch: int = Field(default=2, ge=1)
    iterations: int = Field(default=30000, ge=1)
    lr: float = Field(default=0.01, gt=0)
    momentum: float = Field(default=0.9, ge=0, lt=1)
    weight_decay: float = Field(default=1e-4, ge=0)
    beta: float = Field(default=0.1, ge=0)
    num_context: int = Field(default=4, ge=1)
    base_channels: int = Field(default=4, ge=1)
    depth: int = Field(default=3, ge=1)
    text_dim: Optional[int] = Field(default=None, ge=1)
    attn_dim: Optional[int] = Field(default=None, ge=1)
    dropout: float = Field(default=0.0, ge=0, lt=1)
    seed: int = 1
    eval_every: int = Field(default=0, ge=0)
    log_every: int = Field(default=50, ge=1)
    checkpoint_dir: str = 'checkpoints'
    trace_path: Optional[str] = None
    class_embeddings: Optional[str] = None

    tmr: bool = True
    csa: bool = True
    dca: bool = True
    unsup: bool = True
    baseline: bool = False
    text_injection: Literal['multiplanar', 'repeat'] = 'multiplanar'

    deterministic: bool = Field(default_factory=config.deterministic_enabled)
    device: str = Field(default_factory=lambda: config.TSS_DEVICE)

    @field_validator('patch_size', mode='before')
    @classmethod
    def _parse_patch_size(cls, value):
        return _parse_triplet(value)

    @field_validator('text_dim', 'attn_dim', 'trace_path', 'class_embeddings', mode='before')
    @classmethod
    def _blank_is_none(cls, value):
        if isinstance(value, str) and value.strip().lower() in ('', 'none'):
            return None
        return value

    @model_validator(mode='after')
    def _check_consistency(self) -> 'TrainConfig':
        if not 1 <= self.labeled_per_batch <= self.batch_size - 1:
            raise ValueError(
                f"labeled_per_batch must be in [1, {self.batch_size - 1}], got {self.labeled_per_batch}"
            )
        factor = 2 ** (self.depth - 1)
        if any(p < 1 or p % factor for p in self.patch_size):
            raise ValueError(f"patch_size {self.patch_size} must be positive multiples of {factor}")
        return self

    @property
    def unlabeled_per_batch(self) -> int:
        return self.batch_size - self.labeled_per_batch

    def backbone_config(self, num_classes: int) -> BackboneConfig:
        return BackboneConfig(
            num_classes=num_classes,
            base_channels=self.base_channels,
            depth=self.depth,
            dropout=self.dropout,
        )

    def resolved_trace_path(self) -> str:
        if self.trace_path:
            return self.trace_path
        return f"{self.checkpoint_dir.rstrip('/')}/trace.csv"

    @classmethod
    def from_file(cls, path: str, overrides: Optional[Dict[str, str]] = None) -> 'TrainConfig':
        """Parse a `key = value` run file; overrides win over file values"""
        if not os.path.isfile(path):
            raise ConfigError(f"Config file not found: {path}")
        values = {k.strip().lower(): v for k, v in dotenv_values(path).items() if v is not None}
        values.update({k.strip().lower(): v for k, v in (overrides or {}).items()})
        return cls.from_mapping(values, source=path)

    @classmethod
    def from_mapping(cls, values: Dict[str, Any], source: str = 'config') -> 'TrainConfig':
        try:
            return cls(**values)
        except PydanticValidationError as e:
            first = e.errors()[0]
            where = '.'.join(str(part) for part in first['loc']) or 'config'
            raise ConfigError(f"{source}: {where}: {first['msg']}") from e
