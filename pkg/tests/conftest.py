import numpy as np
import pytest
import torch

from models.train_config import TrainConfig
from services.phantom_service import PhantomService


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture(autouse=True)
def _seed_torch():
    torch.manual_seed(0)


@pytest.fixture
def phantom_dataset(tmp_path):
    """K=2 phantoms of 16^3: 2 labeled, 2 unlabeled, 1 val, 2 test"""
    return PhantomService().generate_phantom_dataset(
        seed=3, n_labeled=2, n_unlabeled=2, n_test=2, size=(16, 16, 16),
        num_classes=2, out_dir=str(tmp_path / 'data'), n_val=1,
    )


@pytest.fixture
def supervised_dataset(tmp_path):
    """Labeled-only phantoms (no unlabeled split)"""
    return PhantomService().generate_phantom_dataset(
        seed=4, n_labeled=3, n_unlabeled=0, n_test=1, size=(16, 16, 16),
        num_classes=2, out_dir=str(tmp_path / 'supervised'),
    )


@pytest.fixture
def make_config(tmp_path, phantom_dataset):
    """Miniature run configuration; keyword overrides replace defaults"""
    _, manifest_path = phantom_dataset

    def factory(**overrides):
        values = dict(
            manifest=manifest_path,
            patch_size=(8, 8, 8),
            batch_size=4,
            labeled_per_batch=2,
            iterations=2,
            base_channels=2,
            depth=3,
            seed=1,
            log_every=1,
            checkpoint_dir=str(tmp_path / 'checkpoints'),
            deterministic=True,
            device='cpu',
        )
        values.update(overrides)
        return TrainConfig(**values)

    return factory
