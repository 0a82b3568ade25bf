"""Per-message compression: field ordering, codecs for every method, evaluation."""
from __future__ import annotations

import csv
import math
import struct
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .coders.arithmetic import ArithmeticDecoder, ArithmeticEncoder
from .coders.frame import METHODS, CompressedFrame
from .coders.huffman import HuffmanCoder
from .errors import ConfigError, CorruptInputError, DciZipError
from .schema import DciSchema
from .tracegen import DciTrace, UeTrace


# -- field ordering ------------------------------------------------------------

def field_entropy(messages, schema: DciSchema, k: int) -> float:
    """Histogram entropy (bits) of field ``k`` over ``messages``."""
    msgs = np.asarray(messages)
    if len(msgs) == 0:
        raise ConfigError("entropy of an empty training set")
    sl = schema.field_slice(k)
    w = 1 << np.arange(sl.stop - sl.start - 1, -1, -1, dtype=np.int64)
    counts = np.array(list(Counter((msgs[:, sl].astype(np.int64) @ w).tolist()).values()), dtype=np.float64)
    p = counts / counts.sum()
    return float(max(-(p * np.log2(p)).sum(), 0.0))


def field_entropies(messages, schema: DciSchema) -> list[float]:
    return [field_entropy(messages, schema, k) for k in range(schema.D)]


@dataclass(frozen=True)
class FieldOrder:
    order: tuple[int, ...]
    entropies: tuple[float, ...]


def sort_fields(entropies: Sequence[float], descending: bool = True) -> FieldOrder:
    """Field permutation by entropy; ties keep the original field order."""
    idx = sorted(range(len(entropies)), key=lambda k: (-entropies[k] if descending else entropies[k], k))
    return FieldOrder(tuple(idx), tuple(float(e) for e in entropies))


# -- codecs --------------------------------------------------------------------

class Codec:
    """Common surface of every compression method.

    ``history`` is the list of previously coded messages, newest first, in
    schema field order.  Stateful codecs are brought back to their fitted
    state by :meth:`reset` and advanced by :meth:`commit`.
    """

    method = "identity"
    L = 0

    def __init__(self, schema: DciSchema):
        self.schema = schema

    def reset(self):
        pass

    def commit(self, msg):
        pass

    def compress(self, msg, history=()) -> CompressedFrame:
        return CompressedFrame(self.method, self.schema.validate(msg).copy())

    def decompress_bits(self, bits, history=()) -> tuple[np.ndarray, int]:
        """Decode one message from the front of ``bits``; returns ``(msg, consumed)``."""
        bits = np.asarray(bits, dtype=np.uint8)
        if len(bits) < self.schema.N:
            raise CorruptInputError("raw frame shorter than the message")
        return bits[:self.schema.N].copy(), self.schema.N

    def decompress(self, frame: CompressedFrame, history=()) -> np.ndarray:
        msg, used = self.decompress_bits(frame.bits, history)
        if used != frame.K:
            raise CorruptInputError(f"{frame.K - used} unexpected trailing bits in {frame.method} frame")
        return msg


IdentityCodec = Codec


class HuffmanCodec(Codec):
    method = "huffman"

    def __init__(self, coder: HuffmanCoder):
        super().__init__(coder.schema)
        self.coder = coder

    def compress(self, msg, history=()):
        return self.coder.compress(msg)

    def decompress_bits(self, bits, history=()):
        return self.coder.decompress_bits(bits)


class AcCodec(Codec):
    """Arithmetic coding driven by a predictor over the reordered fields."""

    def __init__(self, schema: DciSchema, predictor, order: Sequence[int] | None = None, method: str | None = None):
        super().__init__(schema)
        self.order = tuple(range(schema.D)) if order is None else tuple(order)
        self.coded = schema.permuted(self.order)
        if predictor.schema.hash != self.coded.hash:
            raise ConfigError("predictor was built for a different schema or field order")
        self.predictor = predictor
        self.method = method or predictor.method
        self.L = predictor.L
        self._perm = schema.bit_permutation(self.order)
        self._inv = np.argsort(self._perm)

    def reset(self):
        self.predictor.reset()

    def commit(self, msg):
        self.predictor.commit(np.asarray(msg)[self._perm])

    def _history(self, history):
        return [np.asarray(m)[self._perm] for m in list(history)[:self.L]]

    def compress(self, msg, history=()):
        x = self.schema.validate(msg)[self._perm]
        sess = self.predictor.session(self._history(history))
        enc = ArithmeticEncoder()
        pos = 0
        while pos < self.coded.N:
            p = sess.next_probs()
            chunk = x[pos:pos + len(p)]
            enc.encode(chunk, p)
            sess.observe(chunk)
            pos += len(p)
        return CompressedFrame(self.method, enc.finish())

    def decompress_bits(self, bits, history=()):
        sess = self.predictor.session(self._history(history))
        dec = ArithmeticDecoder(bits)
        out = np.empty(self.coded.N, dtype=np.uint8)
        pos = 0
        while pos < self.coded.N:
            p = sess.next_probs()
            chunk = dec.decode(p)
            out[pos:pos + len(p)] = chunk
            sess.observe(chunk)
            pos += len(p)
        return out[self._inv], dec.consumed


class JointCodec(Codec):
    """One selector bit (0 = AC model, 1 = Huffman) then the shorter payload."""

    method = "joint"

    def __init__(self, model_codec: AcCodec, huffman: HuffmanCodec):
        super().__init__(model_codec.schema)
        if huffman.schema.hash != self.schema.hash:
            raise ConfigError("joint codec parts disagree on the schema")
        self.model_codec = model_codec
        self.huffman = huffman
        self.L = model_codec.L

    def reset(self):
        self.model_codec.reset()
        self.huffman.reset()

    def commit(self, msg):
        self.model_codec.commit(msg)
        self.huffman.commit(msg)

    def compress(self, msg, history=()):
        return self.combine(self.model_codec.compress(msg, history), self.huffman.compress(msg, history))

    def combine(self, model_frame: CompressedFrame, hc_frame: CompressedFrame) -> CompressedFrame:
        if model_frame.K <= hc_frame.K:
            payload = np.concatenate([[0], model_frame.bits])
        else:
            payload = np.concatenate([[1], hc_frame.bits])
        return CompressedFrame(self.method, payload.astype(np.uint8))

    def decompress_bits(self, bits, history=()):
        bits = np.asarray(bits, dtype=np.uint8)
        if len(bits) == 0:
            raise CorruptInputError("empty joint frame")
        inner = self.huffman if bits[0] else self.model_codec
        msg, used = inner.decompress_bits(bits[1:], history)
        return msg, used + 1

    @staticmethod
    def selected(frame: CompressedFrame) -> str:
        return "huffman" if frame.bits[0] else "model"


def compress_message(codec: Codec, history, msg) -> CompressedFrame:
    return codec.compress(msg, history)


def decompress_message(codec: Codec, history, frame: CompressedFrame) -> np.ndarray:
    return codec.decompress(frame, history)


def joint_compress(model_codec: AcCodec, huffman: HuffmanCodec, history, msg) -> CompressedFrame:
    return JointCodec(model_codec, huffman).compress(msg, history)


# -- streams -----------------------------------------------------------------

def _initial_history(context, L: int) -> list:
    ctx = [] if context is None else list(np.asarray(context))
    return ctx[::-1][:L] if L else []


def compress_stream(codec: Codec, messages, context=None) -> list[CompressedFrame]:
    """Compress a UE stream in order; ``context`` are earlier messages, oldest first."""
    codec.reset()
    hist = _initial_history(context, codec.L)
    frames = []
    for msg in messages:
        frames.append(codec.compress(msg, hist))
        codec.commit(msg)
        if codec.L:
            hist = [np.asarray(msg)] + hist[:codec.L - 1]
    return frames


def decompress_stream(codec: Codec, frames: Sequence[CompressedFrame], context=None) -> list[np.ndarray]:
    codec.reset()
    hist = _initial_history(context, codec.L)
    out = []
    for frame in frames:
        msg = codec.decompress(frame, hist)
        out.append(msg)
        codec.commit(msg)
        if codec.L:
            hist = [msg] + hist[:codec.L - 1]
    return out


# -- evaluation ----------------------------------------------------------------

@dataclass
class CompressionReport:
    N: int
    rows: list[tuple] = field(default_factory=list)  # (ue, tti, method, original_bits, compressed_bits, ok)

    def lengths(self, method: str) -> np.ndarray:
        return np.array([r[4] for r in self.rows if r[2] == method], dtype=np.int64)

    @property
    def methods(self) -> list[str]:
        seen = []
        for r in self.rows:
            if r[2] not in seen:
                seen.append(r[2])
        return seen

    def mean_ratio(self, method: str) -> float:
        k = self.lengths(method)
        return self.N / k.mean() if len(k) else math.nan

    def summary(self) -> dict[str, float]:
        return {m: self.mean_ratio(m) for m in self.methods}

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["ue", "tti", "method", "original_bits", "compressed_bits", "lossless_ok"])
            for r in self.rows:
                w.writerow([r[0], r[1], r[2], r[3], r[4], int(r[5])])

    def write_summary_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["method", "mean_ratio"])
            for m, v in self.summary().items():
                w.writerow([m, f"{v:.6f}"])


class LosslessViolation(DciZipError):
    pass


def evaluate(streams: Sequence[tuple[UeTrace, np.ndarray | None]], codecs_per_ue: Sequence[dict[str, Codec]],
             N: int, frames_out: dict | None = None) -> CompressionReport:
    """Compress and decompress every test stream with every codec.

    ``streams[i]`` is ``(test UeTrace, context messages)`` and
    ``codecs_per_ue[i]`` maps method name to codec for that UE.  Any
    mismatch after decompression raises :class:`LosslessViolation`.
    """
    report = CompressionReport(N)
    for (ue_trace, context), codecs in zip(streams, codecs_per_ue):
        for name, codec in codecs.items():
            frames = compress_stream(codec, ue_trace.bits, context)
            decoded = decompress_stream(codec, frames, context)
            for t, msg, frame, back in zip(ue_trace.tti, ue_trace.bits, frames, decoded):
                ok = bool(np.array_equal(msg, back))
                if not ok:
                    raise LosslessViolation(f"{name}: UE {ue_trace.ue} TTI {t} did not round-trip")
                report.rows.append((ue_trace.ue, int(t), name, N, frame.K, ok))
            if frames_out is not None:
                frames_out[(ue_trace.ue, name)] = frames
    return report


def bitmap_matrix(frames: Sequence[CompressedFrame], width: int) -> np.ndarray:
    """Message-by-bit occupancy: 0/1 for payload bits, 2 for the unused tail."""
    out = np.full((len(frames), width), 2, dtype=np.uint8)
    for i, f in enumerate(frames):
        n = min(f.K, width)
        out[i, :n] = f.bits[:n]
    return out


# -- frame files -----------------------------------------------------------------

_FRAME_MAGIC = b"DCIF"
_FRAME_HEAD = struct.Struct(">BHIH")


def save_frames(records: Sequence[tuple[int, int, CompressedFrame]], path: str | Path) -> None:
    """Write ``(ue, tti, frame)`` records as length-prefixed frames with a method tag."""
    chunks = [_FRAME_MAGIC, struct.pack(">HI", 1, len(records))]
    for ue, tti, frame in records:
        chunks.append(_FRAME_HEAD.pack(METHODS.index(frame.method), ue, tti, frame.K))
        chunks.append(np.packbits(frame.bits).tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_frames(path: str | Path) -> list[tuple[int, int, CompressedFrame]]:
    data = Path(path).read_bytes()
    if data[:4] != _FRAME_MAGIC:
        raise CorruptInputError(f"{path}: not a frame file")
    _, count = struct.unpack_from(">HI", data, 4)
    pos, out = 10, []
    for _ in range(count):
        if pos + _FRAME_HEAD.size > len(data):
            raise CorruptInputError(f"{path}: truncated frame header")
        mid, ue, tti, K = _FRAME_HEAD.unpack_from(data, pos)
        pos += _FRAME_HEAD.size
        nb = (K + 7) // 8
        if mid >= len(METHODS) or pos + nb > len(data):
            raise CorruptInputError(f"{path}: corrupt frame record")
        bits = np.unpackbits(np.frombuffer(data, np.uint8, nb, pos))[:K]
        pos += nb
        out.append((ue, tti, CompressedFrame(METHODS[mid], bits)))
    return out


def concat_context(train: DciTrace, test: DciTrace) -> list[tuple[UeTrace, np.ndarray]]:
    """Pair each test stream with the training messages that precede it."""
    return [(te, tr.bits) for tr, te in zip(train.ues, test.ues)]


def build_codecs(schema: DciSchema, train_bits, transformer=None, rnn=None,
                 huffman: HuffmanCoder | None = None) -> dict[str, Codec]:
    """Every method for one UE, fitted on its training split.

    ``transformer`` and ``rnn`` are trained models (or ``None`` to skip them);
    the joint method is included whenever the transformer is.
    """
    from .models import AdaptiveOrder0

    hc = HuffmanCodec(huffman or HuffmanCoder.fit(schema, train_bits))
    codecs: dict[str, Codec] = {
        "identity": Codec(schema),
        "huffman": hc,
        "adaptive": AcCodec(schema, AdaptiveOrder0(schema).fit(train_bits)),
    }
    if rnn is not None:
        codecs["rnn"] = AcCodec(schema, rnn.predictor(), rnn.order)
    if transformer is not None:
        codecs["transformer"] = AcCodec(schema, transformer.predictor(), transformer.order)
        codecs["joint"] = JointCodec(codecs["transformer"], hc)
    return codecs
