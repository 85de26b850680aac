import logging
import os
from typing import Dict, List, Sequence

import pandas as pd

from models.train_config import TrainConfig
from services.training_service import TrainingService
from utils.errors import ConfigError

logger = logging.getLogger(__name__)

# overrides applied on top of the base config for each ablation variant
VARIANTS: Dict[str, Dict[str, object]] = {
    'baseline': {'baseline': True},
    'tmr': {'tmr': True, 'csa': False, 'dca': False},
    'csa': {'tmr': False, 'csa': True, 'dca': False},
    'dca': {'tmr': False, 'csa': False, 'dca': True},
    'tmr+csa': {'tmr': True, 'csa': True, 'dca': False},
    'tmr+dca': {'tmr': True, 'csa': False, 'dca': True},
    'csa+dca': {'tmr': False, 'csa': True, 'dca': True},
    'full': {'tmr': True, 'csa': True, 'dca': True},
    'repeat': {'tmr': True, 'csa': True, 'dca': True, 'text_injection': 'repeat'},
}

SUMMARY_COLUMNS = ['variant', 'seed', 'dice', 'jaccard', 'hd95', 'asd']


class AblationService:
    """Train and test every (variant, seed) pair on the same data"""

    def __init__(self, training: TrainingService = None):
        self.training = training or TrainingService()

    def variant_config(self, base: TrainConfig, variant: str, seed: int) -> TrainConfig:
        if variant not in VARIANTS:
            raise ConfigError(f"Unknown ablation variant '{variant}'; choose from {', '.join(VARIANTS)}")
        values = base.model_dump()
        values.update({'baseline': False, 'text_injection': 'multiplanar'})
        values.update(VARIANTS[variant])
        values.update({
            'seed': seed,
            'checkpoint_dir': os.path.join(base.checkpoint_dir, f'{variant}_seed{seed}'),
            'trace_path': None,
        })
        return TrainConfig.from_mapping(values, source=f'variant {variant}')

    def run_ablation(self, config: TrainConfig, variants: Sequence[str], seeds: Sequence[int],
                     out_csv: str = None) -> pd.DataFrame:
        """One row per (variant, seed) of mean foreground test metrics, then per-variant mean/std"""
        if not variants or not seeds:
            raise ConfigError("Ablation needs at least one variant and one seed")
        configs = {(v, s): self.variant_config(config, v, s) for v in variants for s in seeds}

        rows: List[dict] = []
        for (variant, seed), run_config in configs.items():
            logger.info(f"Ablation run: variant={variant}, seed={seed}")
            summary = self.training.train(run_config)
            frame = self.training.evaluate(summary.final_checkpoint)
            foreground = frame[(frame['class'] == 'foreground') & (frame['case_id'] == 'mean')].iloc[0]
            rows.append({
                'variant': variant,
                'seed': seed,
                'dice': foreground['dice'],
                'jaccard': foreground['jaccard'],
                'hd95': foreground['hd95'],
                'asd': foreground['asd'],
            })

        runs = pd.DataFrame(rows, columns=SUMMARY_COLUMNS)
        aggregates = []
        for variant, group in runs.groupby('variant', sort=False):
            metrics = group[['dice', 'jaccard', 'hd95', 'asd']]
            aggregates.append({'variant': variant, 'seed': 'mean', **metrics.mean().to_dict()})
            aggregates.append({'variant': variant, 'seed': 'std', **metrics.std(ddof=0).to_dict()})
        table = pd.concat([runs.astype({'seed': object}), pd.DataFrame(aggregates, columns=SUMMARY_COLUMNS)],
                          ignore_index=True)

        if out_csv:
            table.to_csv(out_csv, index=False, float_format='%.10g')
            logger.info(f"Ablation summary ({len(rows)} runs) written to {out_csv}")
        return table
