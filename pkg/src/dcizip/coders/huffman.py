"""Per-field canonical Huffman baseline.

Each field gets its own code over the values seen in training plus an
ESCAPE symbol; an unseen value is sent as ESCAPE followed by the raw field
bits.
"""
from __future__ import annotations

import heapq
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from ..errors import ConfigError, CorruptInputError, TruncatedStreamError
from ..schema import DciSchema, bits_to_int, int_to_bits
from .frame import CompressedFrame

ESCAPE = -1


def huffman_code_lengths(counts: Mapping[int, int]) -> dict[int, int]:
    """Optimal prefix-code lengths for ``counts``.

    Ties are broken by ``(count, symbol)`` so the result is deterministic.
    A lone symbol gets length 1.
    """
    if not counts:
        raise ConfigError("histogram is empty")
    if len(counts) == 1:
        return {next(iter(counts)): 1}
    heap = [(c, 0, s, (s,)) for s, c in sorted(counts.items(), key=lambda kv: (kv[1], kv[0]))]
    heapq.heapify(heap)
    lengths = dict.fromkeys(counts, 0)
    serial = 0
    while len(heap) > 1:
        c1, _, _, syms1 = heapq.heappop(heap)
        c2, _, _, syms2 = heapq.heappop(heap)
        for s in syms1 + syms2:
            lengths[s] += 1
        serial += 1
        heapq.heappush(heap, (c1 + c2, 1, serial, syms1 + syms2))
    return lengths


def canonical_codes(lengths: Mapping[int, int]) -> dict[int, tuple[int, int]]:
    """Assign canonical codewords; returns ``symbol -> (code, length)``."""
    code, prev_len, out = 0, 0, {}
    for sym, ln in sorted(lengths.items(), key=lambda kv: (kv[1], kv[0])):
        code <<= ln - prev_len
        out[sym] = (code, ln)
        code += 1
        prev_len = ln
    return out


@dataclass(frozen=True)
class HuffmanCodebook:
    """Canonical code for one field; symbol ``ESCAPE`` marks raw values."""

    width: int
    lengths: tuple[tuple[int, int], ...]  # sorted (symbol, length)

    def __post_init__(self):
        codes = canonical_codes(dict(self.lengths))
        object.__setattr__(self, "_codes", codes)
        object.__setattr__(self, "_decode", {(ln, c): s for s, (c, ln) in codes.items()})
        if ESCAPE not in codes:
            raise ConfigError("codebook lacks an ESCAPE symbol")

    @property
    def codes(self) -> dict[int, tuple[int, int]]:
        return self._codes

    def kraft_sum(self) -> float:
        return sum(2.0 ** -ln for _, ln in self.lengths)

    def code_length(self, value: int) -> int:
        if value in self._codes:
            return self._codes[value][1]
        return self._codes[ESCAPE][1] + self.width

    def encode(self, value: int) -> list[int]:
        if value in self._codes:
            code, ln = self._codes[value]
            return int_to_bits(code, ln).tolist()
        code, ln = self._codes[ESCAPE]
        return int_to_bits(code, ln).tolist() + int_to_bits(value, self.width).tolist()

    def decode(self, bits: Sequence[int], pos: int) -> tuple[int, int]:
        """Decode one value starting at ``pos``; returns ``(value, new_pos)``."""
        code, ln, n = 0, 0, len(bits)
        max_len = max(ln for _, ln in self.lengths)
        while True:
            if pos >= n:
                raise TruncatedStreamError("huffman frame ended inside a codeword")
            code = (code << 1) | int(bits[pos])
            pos += 1
            ln += 1
            sym = self._decode.get((ln, code))
            if sym is not None:
                break
            if ln >= max_len:
                raise CorruptInputError("bit pattern is not a codeword")
        if sym == ESCAPE:
            if pos + self.width > n:
                raise TruncatedStreamError("huffman frame ended inside an escaped value")
            return bits_to_int(bits[pos:pos + self.width]), pos + self.width
        return sym, pos

    def expected_length(self, counts: Mapping[int, int]) -> float:
        total = sum(counts.values())
        return sum(c * self.code_length(v) for v, c in counts.items()) / total


def huffman_build(histogram: Mapping[int, int], width: int) -> HuffmanCodebook:
    """Build the codebook of one field from its training histogram."""
    if not histogram:
        raise ConfigError("histogram is empty")
    counts = {int(v): int(c) for v, c in histogram.items()}
    if any(v < 0 or v >= (1 << width) for v in counts):
        raise ConfigError(f"histogram values do not fit {width} bits")
    counts[ESCAPE] = 0
    lengths = huffman_code_lengths(counts)
    return HuffmanCodebook(width, tuple(sorted(lengths.items())))


class HuffmanCoder:
    """One codebook per schema field, applied in schema order."""

    method = "huffman"

    def __init__(self, schema: DciSchema, books: Sequence[HuffmanCodebook]):
        if len(books) != schema.D or any(b.width != w for b, w in zip(books, schema.widths)):
            raise ConfigError("codebooks do not match the schema")
        self.schema = schema
        self.books = list(books)

    @classmethod
    def fit(cls, schema: DciSchema, messages) -> "HuffmanCoder":
        hists = [Counter() for _ in range(schema.D)]
        for msg in messages:
            for k, v in enumerate(schema.field_values(msg)):
                hists[k][v] += 1
        if not hists[0]:
            raise ConfigError("no training messages")
        return cls(schema, [huffman_build(h, w) for h, w in zip(hists, schema.widths)])

    def message_length(self, msg) -> int:
        return sum(b.code_length(v) for b, v in zip(self.books, self.schema.field_values(msg)))

    def compress(self, msg) -> CompressedFrame:
        bits: list[int] = []
        for book, v in zip(self.books, self.schema.field_values(msg)):
            bits.extend(book.encode(v))
        return CompressedFrame(self.method, np.array(bits, dtype=np.uint8))

    def decompress_bits(self, bits) -> tuple[np.ndarray, int]:
        """Decode one message from the front of ``bits``; returns ``(msg, consumed)``."""
        bits = np.asarray(bits, dtype=np.uint8).tolist()
        pos, values = 0, []
        for book in self.books:
            v, pos = book.decode(bits, pos)
            values.append(v)
        try:
            return self.schema.from_values(values), pos
        except ConfigError as exc:
            raise CorruptInputError(str(exc)) from None

    def decompress(self, frame: CompressedFrame) -> np.ndarray:
        msg, used = self.decompress_bits(frame.bits)
        if used != frame.K:
            raise CorruptInputError(f"frame has {frame.K - used} trailing bits")
        return msg

    # -- persistence --------------------------------------------------------
    def to_text(self) -> str:
        lines = ["# dcizip canonical huffman codebooks", f"schema {self.schema.hash.hex()}"]
        for f, book in zip(self.schema.fields, self.books):
            lines.append(f"field {f.name} {f.width} {len(book.lengths)}")
            for sym, ln in book.lengths:
                lines.append(f"{'escape' if sym == ESCAPE else sym} {ln}")
        return "\n".join(lines) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def from_text(cls, text: str, schema: DciSchema) -> "HuffmanCoder":
        lines = [ln.split("#", 1)[0].split() for ln in text.splitlines()]
        lines = [ln for ln in lines if ln]
        if not lines or lines[0][0] != "schema" or bytes.fromhex(lines[0][1]) != schema.hash:
            raise ConfigError("codebook file was built for a different schema")
        books, i = [], 1
        try:
            for f in schema.fields:
                tag, name, width, count = lines[i]
                if tag != "field" or name != f.name or int(width) != f.width:
                    raise ConfigError(f"codebook entry {name!r} does not match field {f.name!r}")
                entries = [(ESCAPE if s == "escape" else int(s), int(ln))
                           for s, ln in lines[i + 1:i + 1 + int(count)]]
                if len(entries) != int(count):
                    raise CorruptInputError(f"codebook for {name!r} is truncated")
                books.append(HuffmanCodebook(f.width, tuple(sorted(entries))))
                i += 1 + int(count)
        except (ValueError, IndexError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise CorruptInputError(f"malformed codebook file: {exc}") from None
        return cls(schema, books)

    @classmethod
    def load(cls, path: str | Path, schema: DciSchema) -> "HuffmanCoder":
        return cls.from_text(Path(path).read_text(), schema)

