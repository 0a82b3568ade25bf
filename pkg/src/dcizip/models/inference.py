"""Numpy inference for the trained networks.

Coding a message calls the network once per field (transformer) or once per
bit (GRU) with batch size one; at that size torch's per-operator overhead
dominates.  These engines evaluate the same functions in float64 numpy with
incremental state: the transformer caches decoder keys and values across
fields (exact under the causal mask) and the GRU tabulates its input
projections.  Encoder and decoder both go through this code, so they see
identical probabilities.
"""
from __future__ import annotations

import math

import numpy as np

from ..coders.arithmetic import P_MIN
from .rnn import BitGru
from .transformer import DciTransformer

_LN_EPS = 1e-5


def squeezed_sigmoid(z):
    return P_MIN + (1.0 - 2.0 * P_MIN) / (1.0 + np.exp(-z))


def _layer_norm(x, g, b):
    inv = 1.0 / x.shape[-1]
    c = x - np.add.reduce(x, axis=-1, keepdims=True) * inv
    var = np.add.reduce(c * c, axis=-1, keepdims=True) * inv
    return c / np.sqrt(var + _LN_EPS) * g + b


class _Attention:
    def __init__(self, sd, prefix, heads):
        w = lambda n: sd[f"{prefix}.{n}"]
        self.wq, self.bq = w("q.weight").T, w("q.bias")
        self.wk, self.bk = w("k.weight").T, w("k.bias")
        self.wv, self.bv = w("v.weight").T, w("v.bias")
        self.wo, self.bo = w("o.weight").T, w("o.bias")
        self.h = heads
        self.dk = self.wq.shape[1] // heads
        self.scale = 1.0 / math.sqrt(self.dk)

    def split(self, x):
        return x.reshape(len(x), self.h, self.dk).transpose(1, 0, 2)

    def keys(self, mem):
        return self.split(mem @ self.wk + self.bk), self.split(mem @ self.wv + self.bv)

    def attend(self, x, k, v, mask=None):
        q = self.split(x @ self.wq + self.bq)
        att = q @ k.transpose(0, 2, 1) * self.scale
        if mask is not None:
            att = np.where(mask, -np.inf, att)
        att = np.exp(att - att.max(axis=-1, keepdims=True))
        att /= att.sum(axis=-1, keepdims=True)
        out = (att @ v).transpose(1, 0, 2).reshape(len(x), -1)
        return out @ self.wo + self.bo


class _FF:
    def __init__(self, sd, prefix):
        self.w1, self.b1 = sd[f"{prefix}.0.weight"].T, sd[f"{prefix}.0.bias"]
        self.w2, self.b2 = sd[f"{prefix}.3.weight"].T, sd[f"{prefix}.3.bias"]

    def __call__(self, x):
        return np.maximum(x @ self.w1 + self.b1, 0.0) @ self.w2 + self.b2


class TransformerEngine:
    """Float64 replica of :class:`DciTransformer` in inference mode."""

    def __init__(self, model: DciTransformer):
        sd = {k: v.detach().double().numpy() for k, v in model.state_dict().items()}
        cfg = model.cfg
        self.layout = model.layout
        self.d = cfg.d_model
        self.embed = sd["embed.weight"] * math.sqrt(cfg.d_model)
        pe = model.pos_enc.double().numpy()
        self.pos = pe if model.use_positions else np.zeros_like(pe)
        self.enc = []
        for i in range(cfg.encoder_layers):
            p = f"encoder.{i}"
            self.enc.append((_Attention(sd, f"{p}.attn", cfg.heads), _FF(sd, f"{p}.ff"),
                             (sd[f"{p}.norm1.weight"], sd[f"{p}.norm1.bias"]),
                             (sd[f"{p}.norm2.weight"], sd[f"{p}.norm2.bias"])))
        self.dec = []
        for i in range(cfg.decoder_layers):
            p = f"decoder.{i}"
            self.dec.append((_Attention(sd, f"{p}.self_attn", cfg.heads), _Attention(sd, f"{p}.cross_attn", cfg.heads),
                             _FF(sd, f"{p}.ff"),
                             [(sd[f"{p}.norm{j}.weight"], sd[f"{p}.norm{j}.bias"]) for j in (1, 2, 3)]))
        self.head_w, self.head_b = sd["head.weight"].T, sd["head.bias"]

    def encode(self, tokens) -> np.ndarray:
        x = self.embed[tokens] + self.pos[:len(tokens)]
        for attn, ff, n1, n2 in self.enc:
            k, v = attn.keys(x)
            x = _layer_norm(x + attn.attend(x, k, v), *n1)
            x = _layer_norm(x + ff(x), *n2)
        return x

    def session(self, enc_tokens) -> "DecoderState":
        return DecoderState(self, self.encode(np.asarray(enc_tokens)))


class DecoderState:
    """Decoder with cached self-attention keys/values; positions are fed in order."""

    def __init__(self, engine: TransformerEngine, memory: np.ndarray):
        self.e = engine
        self.cross = [cross.keys(memory) for _, cross, _, _ in engine.dec]
        self.cache = [None] * len(engine.dec)
        self.n = 0

    def feed(self, tokens) -> np.ndarray:
        """Append decoder-input tokens; returns the top-layer states of the new positions."""
        e = self.e
        m = len(tokens)
        x = e.embed[np.asarray(tokens)] + e.pos[self.n:self.n + m]
        # new position i (absolute n+i) may see absolute positions <= n+i
        mask = np.arange(self.n + m)[None, :] > (self.n + np.arange(m))[:, None]
        for li, (sa, ca, ff, (n1, n2, n3)) in enumerate(e.dec):
            k, v = sa.keys(x)
            if self.cache[li] is not None:
                k = np.concatenate([self.cache[li][0], k], axis=1)
                v = np.concatenate([self.cache[li][1], v], axis=1)
            self.cache[li] = (k, v)
            x = _layer_norm(x + sa.attend(x, k, v, mask), *n1)
            x = _layer_norm(x + ca.attend(x, *self.cross[li]), *n2)
            x = _layer_norm(x + ff(x), *n3)
        self.n += m
        return x

    def head(self, h) -> np.ndarray:
        return h @ self.e.head_w + self.e.head_b


class GruEngine:
    """Float64 replica of :class:`BitGru` stepping one bit at a time."""

    def __init__(self, model: BitGru):
        sd = {k: v.detach().double().numpy() for k, v in model.state_dict().items()}
        self.N = model.N
        self.H = model.cfg.hidden
        x = sd["bit_embed.weight"][:, None, :] + sd["pos_embed.weight"][None, :, :]  # (3, N, E)
        self.gi = x @ sd["gru.weight_ih_l0"].T + sd["gru.bias_ih_l0"]              # (3, N, 3H)
        self.whh = sd["gru.weight_hh_l0"].T
        self.bhh = sd["gru.bias_hh_l0"]
        self.head_w = sd["head.weight"][0]
        self.head_b = float(sd["head.bias"][0])

    def step(self, h: np.ndarray, bit: int, pos: int) -> np.ndarray:
        H = self.H
        gi = self.gi[bit, pos]
        gh = h @ self.whh + self.bhh
        r = 1.0 / (1.0 + np.exp(-(gi[:H] + gh[:H])))
        z = 1.0 / (1.0 + np.exp(-(gi[H:2 * H] + gh[H:2 * H])))
        n = np.tanh(gi[2 * H:] + r * gh[2 * H:])
        return (1.0 - z) * n + z * h

    def logit(self, h: np.ndarray) -> float:
        return float(h @ self.head_w + self.head_b)

    def zeros(self) -> np.ndarray:
        return np.zeros(self.H)
