import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dcizip.coders import ESCAPE, HuffmanCoder, canonical_codes, huffman_build, huffman_code_lengths
from dcizip.errors import ConfigError, CorruptInputError, TruncatedStreamError


def _optimal_cost(counts):
    """Exhaustive oracle: minimum sum(count * length) over all Kraft-feasible length vectors."""
    syms = list(counts)
    n = len(syms)
    best = None
    for lens in itertools.product(range(1, n + 1), repeat=n):
        if sum(2.0 ** -ln for ln in lens) <= 1.0:
            cost = sum(counts[s] * ln for s, ln in zip(syms, lens))
            best = cost if best is None else min(best, cost)
    return best


def test_small_histogram_example():
    assert huffman_code_lengths({0: 2, 1: 1, 2: 1}) == {0: 1, 1: 2, 2: 2}


def test_single_symbol_gets_one_bit():
    assert huffman_code_lengths({7: 10}) == {7: 1}


@settings(max_examples=60, deadline=None)
@given(st.dictionaries(st.integers(0, 50), st.integers(0, 40), min_size=2, max_size=6))
def test_lengths_are_optimal_and_complete(counts):
    lengths = huffman_code_lengths(counts)
    assert sum(counts[s] * lengths[s] for s in counts) == _optimal_cost(counts)
    assert sum(2.0 ** -ln for ln in lengths.values()) == pytest.approx(1.0)


@given(st.dictionaries(st.integers(0, 200), st.integers(1, 100), min_size=2, max_size=30))
def test_canonical_codes_are_prefix_free(counts):
    codes = canonical_codes(huffman_code_lengths(counts))
    words = [format(c, f"0{ln}b") for c, ln in codes.values()]
    for a, b in itertools.permutations(words, 2):
        assert not b.startswith(a)


def test_deterministic_tie_breaking():
    counts = {5: 3, 1: 3, 9: 3, 2: 3}
    assert huffman_code_lengths(counts) == huffman_code_lengths(dict(reversed(list(counts.items()))))


def test_escape_roundtrip_for_unseen_values():
    book = huffman_build({3: 10, 4: 5}, width=4)
    assert ESCAPE in book.codes
    bits = book.encode(11)
    assert len(bits) == book.codes[ESCAPE][1] + 4
    assert book.decode(bits, 0) == (11, len(bits))
    with pytest.raises(TruncatedStreamError):
        book.decode(bits[:-1], 0)


def test_build_rejects_bad_histograms():
    with pytest.raises(ConfigError):
        huffman_build({}, 3)
    with pytest.raises(ConfigError):
        huffman_build({8: 1}, 3)


def test_coder_roundtrip_and_length(schema, small_split, rng):
    train, test = small_split
    coder = HuffmanCoder.fit(schema, train.ues[0].bits)
    msgs = list(test.ues[0].bits) + [rng.integers(0, 2, schema.N).astype(np.uint8) for _ in range(20)]
    for msg in msgs:
        frame = coder.compress(msg)
        assert frame.K == coder.message_length(msg)
        assert np.array_equal(coder.decompress(frame), msg)


def test_skewed_trace_compresses(schema, small_split):
    train, test = small_split
    coder = HuffmanCoder.fit(schema, train.ues[0].bits)
    mean_k = np.mean([coder.message_length(m) for m in test.ues[0].bits])
    assert schema.N / mean_k > 1.0


def test_serialization(schema, small_split, tmp_path):
    coder = HuffmanCoder.fit(schema, small_split[0].ues[1].bits)
    path = tmp_path / "hc.txt"
    coder.save(path)
    again = HuffmanCoder.load(path, schema)
    assert again.books == coder.books
    with pytest.raises(ConfigError):
        HuffmanCoder.from_text(coder.to_text(), schema.permuted(list(reversed(range(schema.D)))))
    with pytest.raises(CorruptInputError):
        HuffmanCoder.from_text("\n".join(coder.to_text().splitlines()[:6]), schema)


def test_trailing_bits_rejected(schema, small_split):
    from dcizip.coders import CompressedFrame

    coder = HuffmanCoder.fit(schema, small_split[0].ues[0].bits)
    frame = coder.compress(small_split[1].ues[0].bits[0])
    with pytest.raises(CorruptInputError):
        coder.decompress(CompressedFrame("huffman", np.concatenate([frame.bits, [0]])))
