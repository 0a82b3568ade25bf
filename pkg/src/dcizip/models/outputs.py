"""Mapping from logits to the probabilities the coder consumes."""
import numpy as np
import torch

from ..coders.arithmetic import P_MIN


def output_probs(logits: torch.Tensor) -> torch.Tensor:
    """Sigmoid squeezed into ``[P_MIN, 1 - P_MIN]``.

    Training and coding share this map, so the training loss is exactly the
    coding cost and no gradient is lost to a hard clamp.
    """
    return P_MIN + (1.0 - 2.0 * P_MIN) * torch.sigmoid(logits)


def to_numpy_probs(logits: torch.Tensor) -> np.ndarray:
    return output_probs(logits.double()).numpy()
