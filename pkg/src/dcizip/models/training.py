"""Masked BCE, the Adam training loop and a finite-difference gradient check."""
from __future__ import annotations

import copy
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
import torch

from ..coders.arithmetic import P_MIN
from ..errors import ConfigError, TrainingDivergedError
from ..schema import DciSchema
from . import features, rnn
from .features import TokenLayout
from .outputs import output_probs
from .predictors import RnnPredictor, TransformerPredictor
from .rnn import BitGru, RnnConfig
from .transformer import DciTransformer, TransformerConfig

log = logging.getLogger(__name__)

LN2 = math.log(2.0)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.999)
    batch_size: int = 64
    epochs: int = 30
    patience: int = 5
    val_fraction: float = 0.1
    seed: int = 0

    def to_dict(self):
        return asdict(self)


def bce_loss(y, y_hat, mask=None) -> float:
    """Masked mean binary cross-entropy in nats; ``y_hat`` is clamped to ``[P_MIN, 1-P_MIN]``."""
    y = np.asarray(y, dtype=np.float64)
    p = np.clip(np.asarray(y_hat, dtype=np.float64), P_MIN, 1 - P_MIN)
    terms = -(y * np.log(p) + (1 - y) * np.log1p(-p))
    if mask is None:
        return float(terms.mean())
    mask = np.asarray(mask, dtype=bool)
    return float(terms[mask].sum() / mask.sum())


def masked_bce_from_logits(logits: torch.Tensor, y: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    p = output_probs(logits)
    terms = -(y * torch.log(p) + (1 - y) * torch.log1p(-p))
    return (terms * mask).sum() / mask.sum()


@dataclass
class TrainedModel:
    """A frozen predictor together with everything needed to use it."""

    kind: str
    module: torch.nn.Module
    schema: DciSchema          # original field order
    order: tuple[int, ...]     # field permutation applied before modelling
    metadata: dict = field(default_factory=dict)

    @property
    def coded_schema(self) -> DciSchema:
        return self.schema.permuted(self.order)

    def predictor(self):
        if self.kind == "transformer":
            return TransformerPredictor(self.module, self.coded_schema)
        if self.kind == "rnn":
            return RnnPredictor(self.module, self.coded_schema)
        raise ConfigError(f"unknown model kind {self.kind!r}")

    @property
    def best_val_bce(self) -> float:
        return self.metadata.get("best_val_bce", float("nan"))


def _split(n: int, val_fraction: float) -> int:
    n_val = max(1, int(round(n * val_fraction))) if n > 1 else 0
    return n - n_val


def train_loop(model: torch.nn.Module, inputs: Sequence[np.ndarray], y: np.ndarray, mask: np.ndarray,
               forward: Callable, cfg: TrainConfig, progress: Callable | None = None) -> dict:
    """Adam on masked BCE; keeps the parameters of the best validation epoch.

    The last ``val_fraction`` of the samples (temporal order) are held out.
    Returns a metadata dict with the per-epoch curve in bits per bit.
    """
    n = len(y)
    if n == 0:
        raise ConfigError("no training samples")
    cut = _split(n, cfg.val_fraction)
    tensors = [torch.as_tensor(a) for a in inputs]
    yt = torch.as_tensor(y, dtype=torch.float32)
    mt = torch.as_tensor(mask, dtype=torch.float32)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr, betas=cfg.betas)
    rng = np.random.default_rng(cfg.seed)
    best, best_state, best_epoch, stale = math.inf, copy.deepcopy(model.state_dict()), 0, 0
    curve = []

    def evaluate(idx):
        model.eval()
        total, count = 0.0, 0.0
        with torch.no_grad():
            for s in range(0, len(idx), 512):
                b = idx[s:s + 512]
                logits = forward(model, *[t[b] for t in tensors])
                m = mt[b]
                total += float(masked_bce_from_logits(logits, yt[b], m)) * float(m.sum())
                count += float(m.sum())
        model.train()
        return total / count / LN2

    val_idx = torch.arange(cut, n)
    for epoch in range(1, cfg.epochs + 1):
        model.train()
        perm = rng.permutation(cut)
        run, nb = 0.0, 0
        for s in range(0, cut, cfg.batch_size):
            b = torch.as_tensor(perm[s:s + cfg.batch_size])
            logits = forward(model, *[t[b] for t in tensors])
            loss = masked_bce_from_logits(logits, yt[b], mt[b])
            if not torch.isfinite(loss):
                raise TrainingDivergedError(f"non-finite loss at epoch {epoch}, batch {nb}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            run += loss.item()
            nb += 1
        train_bce = run / max(nb, 1) / LN2
        val_bce = evaluate(val_idx) if len(val_idx) else train_bce
        curve.append({"epoch": epoch, "train_bce": train_bce, "val_bce": val_bce})
        log.info("epoch %d train %.4f val %.4f bits/bit", epoch, train_bce, val_bce)
        if progress:
            progress(curve[-1])
        if val_bce < best:
            best, best_epoch, stale = val_bce, epoch, 0
            best_state = copy.deepcopy(model.state_dict())
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    model.load_state_dict(best_state)
    model.eval()
    return {"best_val_bce": best, "best_epoch": best_epoch, "curve": curve, "train": cfg.to_dict(),
            "n_train": cut, "n_val": n - cut}


def _transformer_forward(model, enc, dec, *_):
    return model(enc, dec)


def _rnn_forward(model, bits, pos, *_):
    L_N = model.window
    logits, _ = model(bits, pos)
    return logits[:, L_N - 1:]


def train_transformer(schema: DciSchema, messages, cfg: TransformerConfig = TransformerConfig(),
                      train_cfg: TrainConfig = TrainConfig(), order: Sequence[int] | None = None,
                      context=None, progress=None) -> TrainedModel:
    """Train one transformer on one UE stream (messages in schema field order).

    ``context`` optionally holds messages that precede ``messages`` and is
    used only as encoder history.
    """
    order = tuple(range(schema.D)) if order is None else tuple(order)
    coded = schema.permuted(order)
    perm = schema.bit_permutation(order)
    msgs = np.asarray(messages, np.uint8)[:, perm]
    ctx = None if context is None or len(context) == 0 else np.asarray(context, np.uint8)[:, perm]
    enc, dec, y, mask = features.stream_arrays(msgs, coded, cfg.L, ctx)
    torch.manual_seed(train_cfg.seed)
    model = DciTransformer(cfg, TokenLayout.from_schema(coded, cfg.L))
    meta = train_loop(model, [enc, dec], y, mask, _transformer_forward, train_cfg, progress)
    meta["model"] = cfg.to_dict()
    return TrainedModel("transformer", model, schema, order, meta)


def train_rnn(schema: DciSchema, messages, cfg: RnnConfig = RnnConfig(), train_cfg: TrainConfig = TrainConfig(),
              context=None, progress=None) -> TrainedModel:
    msgs = np.asarray(messages, np.uint8)
    bits, pos, y = rnn.stream_arrays(msgs, schema.N, cfg.L, context)
    torch.manual_seed(train_cfg.seed)
    model = BitGru(cfg, schema.N)
    meta = train_loop(model, [bits, pos], y, np.ones_like(y), _rnn_forward, train_cfg, progress)
    meta["model"] = cfg.to_dict()
    return TrainedModel("rnn", model, schema, tuple(range(schema.D)), meta)


# -- gradient check ----------------------------------------------------------

def gradient_check(model: torch.nn.Module, loss_fn: Callable[[torch.nn.Module], torch.Tensor],
                   step: float = 1e-5, max_elements: int | None = None, seed: int = 0,
                   atol: float = 1e-6) -> dict[str, float]:
    """Relative error of autograd against central differences, per parameter block.

    Runs on a float64 copy of ``model``.  ``max_elements`` caps the number of
    probed entries per block (sampled without replacement).  The error is
    ``max|a - n| / max(max|a|, max|n|, atol)``; ``atol`` keeps blocks whose
    true gradient is zero (e.g. attention key biases) from dividing
    round-off by round-off.  The small default step keeps probes from
    straddling ReLU kinks; in float64 its truncation error is negligible.
    """
    m = copy.deepcopy(model).double()
    m.eval()
    m.zero_grad()
    loss_fn(m).backward()
    rng = np.random.default_rng(seed)
    errors = {}
    for name, p in m.named_parameters():
        analytic = p.grad.detach().clone().reshape(-1) if p.grad is not None else torch.zeros(p.numel(), dtype=p.dtype)
        flat = p.data.reshape(-1)
        idx = np.arange(flat.numel())
        if max_elements is not None and len(idx) > max_elements:
            idx = rng.choice(idx, max_elements, replace=False)
        numeric = torch.zeros(len(idx), dtype=torch.float64)
        with torch.no_grad():
            for j, i in enumerate(idx):
                orig = float(flat[i])
                flat[i] = orig + step
                up = float(loss_fn(m))
                flat[i] = orig - step
                down = float(loss_fn(m))
                flat[i] = orig
                numeric[j] = (up - down) / (2 * step)
        a = analytic[torch.as_tensor(idx)]
        scale = max(float(a.abs().max()), float(numeric.abs().max()), atol)
        errors[name] = float((a - numeric).abs().max()) / scale
    return errors
