"""Bit-wise GRU predictor in the style of DeepZip.

The model walks the bits of the ``L`` previous messages and then the bits
already coded in the current one; each step outputs P(next bit = 1).
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import torch
from torch import nn

from .outputs import to_numpy_probs

PAD_BIT = 2


@dataclass(frozen=True)
class RnnConfig:
    L: int = 4
    hidden: int = 64
    embed: int = 16

    def to_dict(self):
        return asdict(self)


class BitGru(nn.Module):
    def __init__(self, cfg: RnnConfig, N: int):
        super().__init__()
        self.cfg = cfg
        self.N = N
        self.bit_embed = nn.Embedding(3, cfg.embed)
        self.pos_embed = nn.Embedding(N, cfg.embed)
        self.gru = nn.GRU(cfg.embed, cfg.hidden, batch_first=True)
        self.head = nn.Linear(cfg.hidden, 1)

    def _inputs(self, bits, pos):
        return self.bit_embed(bits) + self.pos_embed(pos)

    def forward(self, bits: torch.Tensor, pos: torch.Tensor, h=None):
        """Logits after each input step and the final hidden state."""
        out, h = self.gru(self._inputs(bits, pos), h)
        return self.head(out).squeeze(-1), h

    @property
    def window(self) -> int:
        return self.cfg.L * self.N


def window_tokens(history, N: int, L: int) -> np.ndarray:
    """Bits of the ``L`` previous messages, oldest first; missing ones are padding."""
    out = np.full(L * N, PAD_BIT, dtype=np.int64)
    for j, msg in enumerate(history[:L]):
        slot = L - 1 - j
        out[slot * N:(slot + 1) * N] = msg
    return out


def stream_arrays(messages: np.ndarray, N: int, L: int, history: np.ndarray | None = None):
    """Teacher-forcing inputs ``(bits, pos)`` and targets ``y`` for a UE stream."""
    ctx = np.zeros((0, N), np.uint8) if history is None else np.asarray(history)
    allmsg = np.concatenate([ctx, messages]).astype(np.int64) if len(ctx) else np.asarray(messages, np.int64)
    n0, n = len(ctx), len(messages)
    T = L * N + N - 1
    bits = np.full((n, T), PAD_BIT, dtype=np.int64)
    for j in range(L):
        src = np.arange(n) + n0 - L + j
        ok = src >= 0
        bits[ok, j * N:(j + 1) * N] = allmsg[src[ok]]
    bits[:, L * N:] = allmsg[n0:, :N - 1]
    pos = np.tile(np.arange(T) % N, (n, 1))
    return bits, pos, np.asarray(messages, np.float32)


def rnn_forward(model: BitGru, window_bits, window_pos) -> float:
    """Probability that the bit following ``window`` is 1."""
    with torch.inference_mode():
        logits, _ = model(torch.as_tensor(np.asarray(window_bits, np.int64))[None],
                          torch.as_tensor(np.asarray(window_pos, np.int64))[None])
    return float(to_numpy_probs(logits[0, -1:])[0])
