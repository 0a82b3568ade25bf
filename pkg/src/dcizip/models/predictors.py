"""Probability sources for the arithmetic coder.

A predictor hands out a *session* per message.  The coder alternates
``next_probs()`` and ``observe(bits)`` until the message is complete; the
encoder and the decoder make the exact same calls, so they see the exact
same probabilities.
"""
from __future__ import annotations

import numpy as np

from ..schema import DciSchema
from .features import TokenLayout, encoder_feature
from .inference import GruEngine, TransformerEngine, squeezed_sigmoid
from .rnn import BitGru, window_tokens
from .transformer import DciTransformer


class TransformerPredictor:
    method = "transformer"

    def __init__(self, model: DciTransformer, schema: DciSchema):
        self.model = model.eval()
        self.engine = TransformerEngine(self.model)
        self.schema = schema
        self.layout: TokenLayout = model.layout
        self.L = model.cfg.L

    def reset(self):
        pass

    def commit(self, msg):
        pass

    def session(self, history):
        return _TransformerSession(self, history)


class _TransformerSession:
    def __init__(self, pred: TransformerPredictor, history):
        self.pred = pred
        toks = [pred.schema.message_to_integers(m) for m in history[:pred.L]]
        self.state = pred.engine.session(encoder_feature(toks, pred.layout))
        self.dec_in = [pred.layout.start]
        self.k = 0

    def next_probs(self) -> np.ndarray:
        pred, k = self.pred, self.k
        target = pred.layout.field_start[k]
        h = self.state.feed(self.dec_in[self.state.n:target + 1])
        logits = self.state.head(h[-1])
        return squeezed_sigmoid(logits[:pred.schema.widths[k]])

    def observe(self, bits):
        plan = self.pred.schema.plan
        start, pos = plan.field_start[self.k], 0
        for r in range(start, start + plan.field_nseg[self.k]):
            w = plan.seg_width[r]
            v = 0
            for b in bits[pos:pos + w]:
                v = (v << 1) | int(b)
            self.dec_in.append(plan.seg_offset[r] + v)
            pos += w
        self.k += 1


class RnnPredictor:
    method = "rnn"

    def __init__(self, model: BitGru, schema: DciSchema):
        self.model = model.eval()
        self.engine = GruEngine(self.model)
        self.schema = schema
        self.L = model.cfg.L

    def reset(self):
        pass

    def commit(self, msg):
        pass

    def session(self, history):
        return _RnnSession(self, history)


class _RnnSession:
    def __init__(self, pred: RnnPredictor, history):
        eng = self.engine = pred.engine
        self.N = pred.schema.N
        h = eng.zeros()
        for i, b in enumerate(window_tokens(list(history), self.N, pred.L)):
            h = eng.step(h, int(b), i % self.N)
        self.h = h
        self.i = 0

    def next_probs(self) -> np.ndarray:
        return squeezed_sigmoid(np.array([self.engine.logit(self.h)]))

    def observe(self, bits):
        (bit,) = bits
        if self.i < self.N - 1:
            self.h = self.engine.step(self.h, int(bit), self.i)
        self.i += 1


class AdaptiveOrder0:
    """Per-bit-position Laplace counts, updated after every coded message."""

    method = "adaptive"
    L = 0

    def __init__(self, schema: DciSchema):
        self.schema = schema
        self._base = (np.zeros(schema.N, np.int64), 0)
        self.reset()

    def fit(self, messages) -> "AdaptiveOrder0":
        msgs = np.asarray(messages, dtype=np.int64).reshape(-1, self.schema.N)
        self._base = (msgs.sum(axis=0), len(msgs))
        self.reset()
        return self

    def reset(self):
        self.ones = self._base[0].copy()
        self.total = self._base[1]

    def commit(self, msg):
        self.ones += np.asarray(msg, dtype=np.int64)
        self.total += 1

    def probabilities(self, k: int) -> np.ndarray:
        sl = self.schema.field_slice(k)
        return (self.ones[sl] + 1.0) / (self.total + 2.0)

    def session(self, history):
        return _FieldwiseSession(self)


class _FieldwiseSession:
    def __init__(self, pred: AdaptiveOrder0):
        self.pred = pred
        self.k = 0

    def next_probs(self):
        return self.pred.probabilities(self.k)

    def observe(self, bits):
        self.k += 1


class UniformPredictor:
    """P(1) = 0.5 everywhere; useful as an incompressible reference."""

    method = "uniform"
    L = 0

    def __init__(self, schema: DciSchema):
        self.schema = schema

    def reset(self):
        pass

    def commit(self, msg):
        pass

    def probabilities(self, k):
        return np.full(self.schema.widths[k], 0.5)

    def session(self, history):
        return _FieldwiseSession(self)
