import logging
import os
import random

import numpy as np
import torch

logger = logging.getLogger(__name__)


def set_seeds(seed: int) -> None:
    """Seed python, numpy and torch global generators"""
    random.seed(seed)
    np.random.seed(seed % (2 ** 32))
    torch.manual_seed(seed)
    if torch.cuda.is_available():
        torch.cuda.manual_seed_all(seed)


def configure_determinism(enabled: bool) -> None:
    """Force (or release) deterministic kernels"""
    if enabled:
        os.environ.setdefault('CUBLAS_WORKSPACE_CONFIG', ':4096:8')
    torch.use_deterministic_algorithms(enabled, warn_only=True)
    torch.backends.cudnn.deterministic = enabled
    torch.backends.cudnn.benchmark = not enabled
    logger.debug(f"Deterministic kernels {'enabled' if enabled else 'disabled'}")
