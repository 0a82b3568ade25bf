"""Encoder-decoder transformer that predicts the bits of one field at a time.

The encoder reads the ``L`` previous messages (temporal context), the
decoder reads the already-coded fields of the current message (spatial
context) under a causal mask, and the decoder state at the last revealed
token feeds a sigmoid head of width ``max(M_k)``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
import torch
from torch import nn

from .features import TokenLayout
from .outputs import to_numpy_probs


@dataclass(frozen=True)
class TransformerConfig:
    L: int = 4
    d_model: int = 64
    heads: int = 4
    encoder_layers: int = 2
    decoder_layers: int = 2
    d_ff: int = 128
    dropout: float = 0.0

    def __post_init__(self):
        if self.d_model % self.heads:
            raise ValueError("heads must divide d_model")
        if self.L < 1:
            raise ValueError("memory length L must be >= 1")

    def to_dict(self):
        return asdict(self)


def sinusoidal_encoding(length: int, d_model: int) -> torch.Tensor:
    pos = torch.arange(length, dtype=torch.float64)[:, None]
    i = torch.arange(0, d_model, 2, dtype=torch.float64)
    angle = pos / torch.pow(10000.0, i / d_model)
    pe = torch.zeros(length, d_model, dtype=torch.float64)
    pe[:, 0::2] = torch.sin(angle)
    pe[:, 1::2] = torch.cos(angle[:, : d_model // 2])
    return pe.float()


class MultiHeadAttention(nn.Module):
    def __init__(self, d_model: int, heads: int):
        super().__init__()
        self.heads = heads
        self.dk = d_model // heads
        self.q = nn.Linear(d_model, d_model)
        self.k = nn.Linear(d_model, d_model)
        self.v = nn.Linear(d_model, d_model)
        self.o = nn.Linear(d_model, d_model)

    def forward(self, x, mem, mask=None):
        B, T, d = x.shape
        S = mem.shape[1]
        q = self.q(x).view(B, T, self.heads, self.dk).transpose(1, 2)
        k = self.k(mem).view(B, S, self.heads, self.dk).transpose(1, 2)
        v = self.v(mem).view(B, S, self.heads, self.dk).transpose(1, 2)
        att = q @ k.transpose(-1, -2) / math.sqrt(self.dk)
        if mask is not None:
            att = att.masked_fill(mask, float("-inf"))
        out = torch.softmax(att, dim=-1) @ v
        return self.o(out.transpose(1, 2).reshape(B, T, d))


class FeedForward(nn.Sequential):
    def __init__(self, d_model, d_ff, dropout):
        super().__init__(nn.Linear(d_model, d_ff), nn.ReLU(), nn.Dropout(dropout), nn.Linear(d_ff, d_model))


class EncoderLayer(nn.Module):
    def __init__(self, cfg: TransformerConfig):
        super().__init__()
        self.attn = MultiHeadAttention(cfg.d_model, cfg.heads)
        self.ff = FeedForward(cfg.d_model, cfg.d_ff, cfg.dropout)
        self.norm1 = nn.LayerNorm(cfg.d_model)
        self.norm2 = nn.LayerNorm(cfg.d_model)
        self.drop = nn.Dropout(cfg.dropout)

    def forward(self, x):
        x = self.norm1(x + self.drop(self.attn(x, x)))
        return self.norm2(x + self.drop(self.ff(x)))


class DecoderLayer(nn.Module):
    def __init__(self, cfg: TransformerConfig):
        super().__init__()
        self.self_attn = MultiHeadAttention(cfg.d_model, cfg.heads)
        self.cross_attn = MultiHeadAttention(cfg.d_model, cfg.heads)
        self.ff = FeedForward(cfg.d_model, cfg.d_ff, cfg.dropout)
        self.norm1 = nn.LayerNorm(cfg.d_model)
        self.norm2 = nn.LayerNorm(cfg.d_model)
        self.norm3 = nn.LayerNorm(cfg.d_model)
        self.drop = nn.Dropout(cfg.dropout)

    def forward(self, x, mem, causal):
        x = self.norm1(x + self.drop(self.self_attn(x, x, causal)))
        x = self.norm2(x + self.drop(self.cross_attn(x, mem)))
        return self.norm3(x + self.drop(self.ff(x)))


class DciTransformer(nn.Module):
    def __init__(self, cfg: TransformerConfig, layout: TokenLayout):
        super().__init__()
        if layout.L != cfg.L:
            raise ValueError("layout and config disagree on L")
        self.cfg = cfg
        self.layout = layout
        self.embed = nn.Embedding(layout.vocab, cfg.d_model)
        self.encoder = nn.ModuleList(EncoderLayer(cfg) for _ in range(cfg.encoder_layers))
        self.decoder = nn.ModuleList(DecoderLayer(cfg) for _ in range(cfg.decoder_layers))
        self.head = nn.Linear(cfg.d_model, layout.s_output)
        self.drop = nn.Dropout(cfg.dropout)
        self.register_buffer("pos_enc", sinusoidal_encoding(max(layout.s_encoder, layout.s_decoder), cfg.d_model),
                             persistent=False)
        R = layout.R
        self.register_buffer("causal", torch.triu(torch.ones(R, R, dtype=torch.bool), 1), persistent=False)
        self.register_buffer("field_pos", torch.tensor(layout.field_start, dtype=torch.long), persistent=False)
        self.use_positions = True

    def _embed(self, tokens):
        x = self.embed(tokens) * math.sqrt(self.cfg.d_model)
        if self.use_positions:
            x = x + self.pos_enc[: tokens.shape[1]]
        return self.drop(x)

    def encode(self, enc_tokens: torch.Tensor) -> torch.Tensor:
        x = self._embed(enc_tokens)
        for layer in self.encoder:
            x = layer(x)
        return x

    def decode(self, memory: torch.Tensor, dec_in: torch.Tensor) -> torch.Tensor:
        T = dec_in.shape[1]
        x = self._embed(dec_in)
        for layer in self.decoder:
            x = layer(x, memory, self.causal[:T, :T])
        return x

    def forward(self, enc_tokens: torch.Tensor, dec_in: torch.Tensor) -> torch.Tensor:
        """Logits for every field, shape ``(B, D, S_output)``."""
        h = self.decode(self.encode(enc_tokens), dec_in)
        return self.head(h[:, self.field_pos])

    def field_logits(self, memory: torch.Tensor, dec_in: torch.Tensor, k: int) -> torch.Tensor:
        h = self.decode(memory, dec_in)
        return self.head(h[:, self.layout.field_start[k]])


def transformer_forward(model: DciTransformer, encoder_feature, decoder_feature, k: int) -> np.ndarray:
    """Bit probabilities for field ``k`` from one feature pair, shape ``(S_output,)``."""
    layout = model.layout
    enc = torch.as_tensor(np.asarray(encoder_feature, dtype=np.int64))[None]
    dec = np.concatenate([[layout.start], np.asarray(decoder_feature, dtype=np.int64)[:-1]])
    with torch.inference_mode():
        was_training = model.training
        model.eval()
        logits = model.field_logits(model.encode(enc), torch.as_tensor(dec)[None], k)
        model.train(was_training)
    return to_numpy_probs(logits[0])
