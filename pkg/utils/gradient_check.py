import logging
from dataclasses import dataclass
from typing import Callable, List, Sequence, Tuple

import numpy as np
import torch

from utils.errors import ValidationError

logger = logging.getLogger(__name__)


@dataclass
class GradientCheckEntry:
    name: str
    index: int
    analytic: float
    numeric: float
    rel_error: float


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-6)


def gradient_check(fn: Callable[[], torch.Tensor], params: Sequence[Tuple[str, torch.Tensor]],
                   n: int, rng: np.random.Generator, eps: float = 1e-5,
                   kink_tol: float = 1e-3, max_draws: int = None) -> List[GradientCheckEntry]:
    """Compare autograd against central differences on n random parameter entries.

    An entry whose forward and backward one-sided differences disagree sits on a
    kink or a discontinuity (argmax flip, PReLU hinge) and is redrawn.

    Args:
        fn: closure returning the scalar loss; must be deterministic
        params: (name, tensor) pairs, ideally double precision
        n: number of entries to check
        rng: generator choosing parameters and flat indices
        eps: finite-difference step
    """
    params = [(name, p) for name, p in params if p.requires_grad and p.numel() > 0]
    if not params:
        raise ValidationError("No trainable parameters to check")
    max_draws = max_draws or 50 * n

    loss = fn()
    grads = torch.autograd.grad(loss, [p for _, p in params], allow_unused=True)
    f0 = float(loss.detach())

    results: List[GradientCheckEntry] = []
    draws = 0
    while len(results) < n:
        draws += 1
        if draws > max_draws:
            raise ValidationError(f"Only {len(results)} of {n} entries were smooth after {max_draws} draws")

        which = int(rng.integers(0, len(params)))
        name, param = params[which]
        index = int(rng.integers(0, param.numel()))
        flat = param.data.view(-1)
        original = flat[index].item()

        with torch.no_grad():
            flat[index] = original + eps
            f_plus = float(fn())
            flat[index] = original - eps
            f_minus = float(fn())
            flat[index] = original

        forward = (f_plus - f0) / eps
        backward = (f0 - f_minus) / eps
        if abs(forward - backward) > kink_tol * max(abs(forward), abs(backward)) + 1e-7:
            logger.debug(f"Redrawing {name}[{index}]: one-sided slopes {forward:.3e} / {backward:.3e}")
            continue

        numeric = (f_plus - f_minus) / (2 * eps)
        grad = grads[which]
        analytic = 0.0 if grad is None else grad.reshape(-1)[index].item()
        results.append(GradientCheckEntry(name, index, analytic, numeric, relative_error(analytic, numeric)))

    worst = max(r.rel_error for r in results)
    logger.info(f"Gradient check: {n} entries, {draws} draws, worst relative error {worst:.2e}")
    return results
