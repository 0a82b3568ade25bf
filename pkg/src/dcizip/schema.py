"""Bit-field layout of DCI messages and their integer token form.

A message is a flat vector of ``N`` bits made of ``D`` fields.  For the
transformer each field is cut into segments of at most ``eta`` bits; every
segment value is shifted into a flat token dictionary so that different
segments never share a token id.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import CorruptInputError, ConfigError, SchemaError

MAX_FIELD_WIDTH = 32
MAX_ETA = 16
DEFAULT_ETA = 8


@dataclass(frozen=True)
class FieldSpec:
    name: str
    width: int

    def __post_init__(self):
        if not self.name.isidentifier():
            raise SchemaError(f"invalid field name {self.name!r}")
        if not 1 <= self.width <= MAX_FIELD_WIDTH:
            raise SchemaError(f"field {self.name!r}: width {self.width} outside 1..{MAX_FIELD_WIDTH}")


def segment_field(width: int, eta: int) -> tuple[int, int, int]:
    """Return ``(q, eta_hat, s)`` for a field of ``width`` bits.

    ``s`` is the number of token ids the field occupies.  When ``eta``
    divides ``width`` no remainder segment exists and ``s = q * 2**eta``.
    """
    if width < 1 or eta < 1:
        raise ConfigError(f"width and eta must be positive (got {width}, {eta})")
    if width <= eta:
        return 0, width, 1 << width
    q, eta_hat = divmod(width, eta)
    s = q << eta
    if eta_hat:
        s += 1 << eta_hat
    return q, eta_hat, s


def _segment_widths(width: int, eta: int) -> list[int]:
    q, eta_hat, _ = segment_field(width, eta)
    if q == 0:
        return [width]
    return [eta] * q + ([eta_hat] if eta_hat else [])


@dataclass(frozen=True)
class SegmentPlan:
    """Token layout derived from a schema.

    ``seg_field[r]``, ``seg_width[r]`` and ``seg_offset[r]`` describe token
    position ``r`` of a message; ``field_start[k]`` is the first token of
    field ``k`` and ``alphabet[k]`` its dictionary size.
    """

    eta: int
    seg_field: tuple[int, ...]
    seg_width: tuple[int, ...]
    seg_offset: tuple[int, ...]
    field_start: tuple[int, ...]
    field_nseg: tuple[int, ...]
    alphabet: tuple[int, ...]

    @property
    def R(self) -> int:
        return len(self.seg_width)

    @property
    def dictionary_size(self) -> int:
        return sum(self.alphabet)

    @cached_property
    def _bit_weights(self) -> list[np.ndarray]:
        return [1 << np.arange(w - 1, -1, -1, dtype=np.int64) for w in self.seg_width]


@dataclass(frozen=True)
class DciSchema:
    fields: tuple[FieldSpec, ...]
    eta: int = DEFAULT_ETA
    _bounds: tuple[int, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "fields", tuple(self.fields))
        if not self.fields:
            raise SchemaError("schema needs at least one field")
        if not 1 <= self.eta <= MAX_ETA:
            raise SchemaError(f"eta {self.eta} outside 1..{MAX_ETA}")
        names = [f.name for f in self.fields]
        if len(set(names)) != len(names):
            raise SchemaError("field names must be unique")
        bounds = np.cumsum([0] + [f.width for f in self.fields])
        object.__setattr__(self, "_bounds", tuple(int(b) for b in bounds))

    @classmethod
    def from_widths(cls, widths: Sequence[int], eta: int = DEFAULT_ETA, names: Sequence[str] | None = None):
        names = names or [f"f{k}" for k in range(len(widths))]
        return cls(tuple(FieldSpec(n, int(w)) for n, w in zip(names, widths)), eta)

    @property
    def D(self) -> int:
        return len(self.fields)

    @property
    def N(self) -> int:
        return self._bounds[-1]

    def total_bits(self) -> int:
        return self.N

    @property
    def widths(self) -> tuple[int, ...]:
        return tuple(f.width for f in self.fields)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.fields)

    @property
    def max_width(self) -> int:
        return max(self.widths)

    def field_slice(self, k: int) -> slice:
        return slice(self._bounds[k], self._bounds[k + 1])

    def index(self, name: str) -> int:
        return self.names.index(name)

    @cached_property
    def plan(self) -> SegmentPlan:
        seg_field, seg_width, seg_offset = [], [], []
        field_start, field_nseg, alphabet = [], [], []
        offset = 0
        for k, f in enumerate(self.fields):
            field_start.append(len(seg_width))
            widths = _segment_widths(f.width, self.eta)
            field_nseg.append(len(widths))
            alphabet.append(segment_field(f.width, self.eta)[2])
            for w in widths:
                seg_field.append(k)
                seg_width.append(w)
                seg_offset.append(offset)
                offset += 1 << w
        return SegmentPlan(self.eta, tuple(seg_field), tuple(seg_width), tuple(seg_offset),
                           tuple(field_start), tuple(field_nseg), tuple(alphabet))

    @cached_property
    def hash(self) -> bytes:
        """8-byte digest identifying layout and eta; carried by every artifact."""
        text = f"eta={self.eta};" + ";".join(f"{f.name}:{f.width}" for f in self.fields)
        return hashlib.sha256(text.encode()).digest()[:8]

    def permuted(self, order: Sequence[int]) -> "DciSchema":
        """Schema whose field ``i`` is field ``order[i]`` of this schema."""
        order = list(order)
        if sorted(order) != list(range(self.D)):
            raise ConfigError(f"not a permutation of 0..{self.D - 1}: {order}")
        return DciSchema(tuple(self.fields[k] for k in order), self.eta)

    def bit_permutation(self, order: Sequence[int]) -> np.ndarray:
        """Index array mapping a message to the field order ``order``."""
        return np.concatenate([np.arange(self._bounds[k], self._bounds[k + 1]) for k in order])

    # -- message helpers -------------------------------------------------
    def validate(self, msg) -> np.ndarray:
        bits = np.asarray(msg, dtype=np.uint8)
        if bits.shape != (self.N,):
            raise CorruptInputError(f"message has shape {bits.shape}, schema needs ({self.N},)")
        if bits.max(initial=0) > 1:
            raise CorruptInputError("message bits must be 0 or 1")
        return bits

    def zeros(self) -> np.ndarray:
        return np.zeros(self.N, dtype=np.uint8)

    def split_fields(self, msg) -> list[np.ndarray]:
        bits = self.validate(msg)
        return [bits[self.field_slice(k)] for k in range(self.D)]

    def field_values(self, msg) -> list[int]:
        return [bits_to_int(b) for b in self.split_fields(msg)]

    def from_values(self, values: Sequence[int]) -> np.ndarray:
        if len(values) != self.D:
            raise ConfigError(f"need {self.D} field values, got {len(values)}")
        out = np.empty(self.N, dtype=np.uint8)
        for k, (f, v) in enumerate(zip(self.fields, values)):
            if not 0 <= v < (1 << f.width):
                raise ConfigError(f"value {v} does not fit field {f.name!r} ({f.width} bits)")
            out[self.field_slice(k)] = int_to_bits(v, f.width)
        return out

    def message_to_integers(self, msg) -> np.ndarray:
        bits = self.validate(msg)
        plan = self.plan
        out = np.empty(plan.R, dtype=np.int64)
        pos = 0
        for r, (w, off, weights) in enumerate(zip(plan.seg_width, plan.seg_offset, plan._bit_weights)):
            out[r] = off + int(bits[pos:pos + w] @ weights)
            pos += w
        return out

    def integers_to_message(self, tokens) -> np.ndarray:
        plan = self.plan
        tokens = np.asarray(tokens, dtype=np.int64)
        if tokens.shape != (plan.R,):
            raise CorruptInputError(f"expected {plan.R} integers, got shape {tokens.shape}")
        out = np.empty(self.N, dtype=np.uint8)
        pos = 0
        for r, (w, off) in enumerate(zip(plan.seg_width, plan.seg_offset)):
            v = int(tokens[r]) - off
            if not 0 <= v < (1 << w):
                raise CorruptInputError(f"integer {int(tokens[r])} outside segment {r} range "
                                        f"[{off}, {off + (1 << w)})")
            out[pos:pos + w] = int_to_bits(v, w)
            pos += w
        return out

    def to_text(self) -> str:
        lines = [f"eta {self.eta}"] + [f"{f.name} {f.width}" for f in self.fields]
        return "\n".join(lines) + "\n"


def bits_to_int(bits: Iterable[int]) -> int:
    v = 0
    for b in bits:
        v = (v << 1) | int(b)
    return v


def int_to_bits(value: int, width: int) -> np.ndarray:
    return ((value >> np.arange(width - 1, -1, -1)) & 1).astype(np.uint8)


def parse_schema(text: str, source: str = "<schema>") -> DciSchema:
    eta = DEFAULT_ETA
    fields = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise SchemaError(f"{source}:{lineno}: expected '<name> <width>', got {raw.strip()!r}")
        name, value = parts
        try:
            num = int(value)
        except ValueError:
            raise SchemaError(f"{source}:{lineno}: {value!r} is not an integer") from None
        if name == "eta":
            if fields:
                raise SchemaError(f"{source}:{lineno}: 'eta' must precede the fields")
            eta = num
            continue
        try:
            fields.append(FieldSpec(name, num))
        except SchemaError as exc:
            raise SchemaError(f"{source}:{lineno}: {exc}") from None
    try:
        return DciSchema(tuple(fields), eta)
    except SchemaError as exc:
        raise SchemaError(f"{source}: {exc}") from None


def load_schema(path: str | Path) -> DciSchema:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise SchemaError(f"cannot read schema {path}: {exc.strerror}") from None
    return parse_schema(text, str(path))


def default_schema() -> DciSchema:
    """The 39-bit experiment layout shipped with the package."""
    text = resources.files("dcizip").joinpath("data", "dci39.schema").read_text()
    return parse_schema(text, "dci39.schema")
