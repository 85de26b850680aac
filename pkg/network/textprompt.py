import logging

import numpy as np
import torch
import torch.nn as nn

from utils.binary_codec import decode_embeddings, encode_embeddings
from utils.errors import ValidationError

logger = logging.getLogger(__name__)


class TextPromptBank(nn.Module):
    """Learnable prompt bank standing in for a frozen text encoder.

    Each class k is described by the sequence [V_1]..[V_M][E_k]; the sequence is
    mean-pooled and passed through a linear mixer, giving one C_t-dim text feature
    per class.
    """

    def __init__(self, num_classes: int, text_dim: int, num_context: int = 4):
        super().__init__()
        if num_classes < 1 or text_dim < 1 or num_context < 1:
            raise ValidationError(
                f"Prompt bank needs positive sizes, got K={num_classes}, C_t={text_dim}, M={num_context}"
            )
        self.num_classes = num_classes
        self.text_dim = text_dim
        self.num_context = num_context

        self.context = nn.Parameter(torch.randn(num_context, text_dim) * 0.02)
        self.class_emb = nn.Parameter(torch.randn(num_classes, text_dim) / text_dim ** 0.5)
        self.mixer = nn.Linear(text_dim, text_dim)
        with torch.no_grad():
            self.mixer.weight.copy_(torch.eye(text_dim))
            self.mixer.bias.zero_()

    def forward(self) -> torch.Tensor:
        return self.text_features()

    def text_features(self) -> torch.Tensor:
        """F_t, K x C_t: F_t[k] = mixer(mean(V_1, ..., V_M, E_k))"""
        pooled = (self.context.sum(dim=0, keepdim=True) + self.class_emb) / (self.num_context + 1)
        return self.mixer(pooled)

    @property
    def class_embeddings_frozen(self) -> bool:
        return not self.class_emb.requires_grad

    def load_class_embeddings(self, path: str) -> None:
        """Replace class embeddings with externally supplied rows and freeze them"""
        with open(path, 'rb') as f:
            rows = decode_embeddings(f.read())
        if rows.shape != (self.num_classes, self.text_dim):
            raise ValidationError(
                f"Class embeddings in {path} are {rows.shape[0]}x{rows.shape[1]}, "
                f"expected {self.num_classes}x{self.text_dim}"
            )
        with torch.no_grad():
            self.class_emb.copy_(torch.from_numpy(rows).to(self.class_emb))
        self.class_emb.requires_grad_(False)
        logger.info(f"Loaded frozen class embeddings ({rows.shape[0]}x{rows.shape[1]}) from {path}")

    def save_class_embeddings(self, path: str) -> None:
        rows = self.class_emb.detach().cpu().numpy().astype(np.float32)
        with open(path, 'wb') as f:
            f.write(encode_embeddings(rows))
