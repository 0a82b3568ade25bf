"""Encoder/decoder token features and masked per-field labels."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..schema import DciSchema


@dataclass(frozen=True)
class TokenLayout:
    """Token ids and block sizes shared by features and the transformer."""

    R: int
    D: int
    L: int
    dictionary_size: int
    field_start: tuple[int, ...]
    widths: tuple[int, ...]

    @classmethod
    def from_schema(cls, schema: DciSchema, L: int) -> "TokenLayout":
        plan = schema.plan
        return cls(plan.R, schema.D, L, plan.dictionary_size, plan.field_start, schema.widths)

    @property
    def pad(self) -> int:
        return self.dictionary_size

    @property
    def start(self) -> int:
        return self.dictionary_size + 1

    @property
    def vocab(self) -> int:
        return self.dictionary_size + 2

    @property
    def s_encoder(self) -> int:
        return self.L * self.R

    @property
    def s_decoder(self) -> int:
        return self.R

    @property
    def s_output(self) -> int:
        return max(self.widths)


@dataclass(frozen=True)
class FeaturePair:
    encoder: np.ndarray  # (L*R,)
    decoder: np.ndarray  # (R,)


def encoder_feature(history: Sequence[np.ndarray], layout: TokenLayout) -> np.ndarray:
    """Concatenate the token forms of the ``L`` previous messages, newest first.

    ``history[0]`` is the message at ``t-1``.  Missing slots hold the padding
    pseudo-message.
    """
    out = np.full(layout.s_encoder, layout.pad, dtype=np.int64)
    for j, toks in enumerate(history[:layout.L]):
        out[j * layout.R:(j + 1) * layout.R] = toks
    return out


def decoder_feature(tokens: np.ndarray, k: int, layout: TokenLayout) -> np.ndarray:
    """Tokens of fields ``0..k-1`` followed by padding, length ``R``."""
    out = np.full(layout.R, layout.pad, dtype=np.int64)
    n = layout.field_start[k] if k < layout.D else layout.R
    out[:n] = tokens[:n]
    return out


def build_features(history: Sequence[np.ndarray], tokens: np.ndarray, k: int, layout: TokenLayout) -> FeaturePair:
    return FeaturePair(encoder_feature(history, layout), decoder_feature(tokens, k, layout))


def decoder_input(dec_feature: np.ndarray, layout: TokenLayout) -> np.ndarray:
    """Shift right behind the start token; the model reads position ``field_start[k]``."""
    return np.concatenate([[layout.start], dec_feature[:-1]])


def field_labels(msg: np.ndarray, schema: DciSchema) -> tuple[np.ndarray, np.ndarray]:
    """Per-field zero-padded labels and validity masks, each ``(D, S_output)``."""
    s_out = schema.max_width
    y = np.zeros((schema.D, s_out), dtype=np.float32)
    mask = np.zeros((schema.D, s_out), dtype=bool)
    for k, w in enumerate(schema.widths):
        y[k, :w] = msg[schema.field_slice(k)]
        mask[k, :w] = True
    return y, mask


def stream_arrays(messages: np.ndarray, schema: DciSchema, L: int, history: np.ndarray | None = None):
    """Training tensors for one UE stream.

    ``history`` holds messages preceding ``messages`` (oldest first) and is
    used only as context.  Returns ``(enc, dec_in, y, mask)`` with shapes
    ``(n, L*R)``, ``(n, R)``, ``(n, D, S)`` and ``(n, D, S)``.
    """
    layout = TokenLayout.from_schema(schema, L)
    ctx = np.zeros((0, schema.N), np.uint8) if history is None else np.asarray(history)
    allmsg = np.concatenate([ctx, messages]) if len(ctx) else np.asarray(messages)
    toks = np.stack([schema.message_to_integers(m) for m in allmsg]) if len(allmsg) else \
        np.zeros((0, layout.R), np.int64)
    n0 = len(ctx)
    n = len(messages)
    enc = np.full((n, layout.s_encoder), layout.pad, dtype=np.int64)
    for j in range(L):
        src = np.arange(n) + n0 - 1 - j
        ok = src >= 0
        enc[ok, j * layout.R:(j + 1) * layout.R] = toks[src[ok]]
    cur = toks[n0:]
    dec_in = np.concatenate([np.full((n, 1), layout.start, np.int64), cur[:, :-1]], axis=1)
    s_out = layout.s_output
    y = np.zeros((n, schema.D, s_out), dtype=np.float32)
    mask = np.zeros((schema.D, s_out), dtype=bool)
    for k, w in enumerate(schema.widths):
        y[:, k, :w] = messages[:, schema.field_slice(k)]
        mask[k, :w] = True
    return enc, dec_in, y, np.broadcast_to(mask, y.shape).copy()
