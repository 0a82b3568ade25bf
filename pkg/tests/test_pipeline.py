import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dcizip.coders import CompressedFrame, HuffmanCoder
from dcizip.errors import ConfigError, CorruptInputError
from dcizip.models import AdaptiveOrder0, UniformPredictor
from dcizip.pipeline import (AcCodec, Codec, HuffmanCodec, JointCodec, LosslessViolation, bitmap_matrix,
                             build_codecs, compress_message, compress_stream, concat_context, decompress_message,
                             decompress_stream, evaluate, field_entropies, field_entropy, load_frames, save_frames,
                             sort_fields)


def test_field_entropy_oracle(schema, small_split):
    msgs = small_split[0].ues[0].bits
    for k in range(schema.D):
        vals = [tuple(m[schema.field_slice(k)]) for m in msgs]
        n = len(vals)
        ref = -sum(c / n * math.log2(c / n) for c in Counter(vals).values())
        assert field_entropy(msgs, schema, k) == pytest.approx(ref, abs=1e-12)


def test_entropy_of_constant_field_is_zero(schema):
    assert field_entropy(np.zeros((10, schema.N), np.uint8), schema, 0) == 0.0
    with pytest.raises(ConfigError):
        field_entropy(np.zeros((0, schema.N), np.uint8), schema, 0)


def test_sort_fields_descending_with_index_ties():
    fo = sort_fields([1.0, 3.0, 1.0, 2.0, 3.0])
    assert fo.order == (1, 4, 3, 0, 2)
    assert sort_fields([1.0, 3.0, 1.0, 2.0, 3.0], descending=False).order == (0, 2, 3, 1, 4)


def test_identity_codec(schema, small_split):
    c = Codec(schema)
    msg = small_split[1].ues[0].bits[0]
    f = c.compress(msg)
    assert f.K == schema.N and np.array_equal(c.decompress(f), msg)


def _ac_codecs(schema, bits, tiny_models):
    tr, rnn = tiny_models
    return {
        "adaptive": AcCodec(schema, AdaptiveOrder0(schema).fit(bits)),
        "uniform": AcCodec(schema, UniformPredictor(schema)),
        "transformer": AcCodec(schema, tr.predictor(), tr.order),
        "rnn": AcCodec(schema, rnn.predictor(), rnn.order),
    }


def test_all_methods_roundtrip_on_trace(schema, small_split, tiny_models):
    train, test = small_split
    codecs = build_codecs(schema, train.ues[0].bits, *tiny_models)
    report = evaluate(concat_context(train, test)[:1], [codecs], schema.N)
    assert set(report.methods) == {"identity", "huffman", "adaptive", "rnn", "transformer", "joint"}
    assert report.mean_ratio("identity") == 1.0
    assert all(r[5] for r in report.rows)


@settings(max_examples=25, deadline=None)
@given(st.data())
def test_random_messages_roundtrip(schema, small_split, tiny_models, data):
    bits = small_split[0].ues[0].bits
    codecs = _ac_codecs(schema, bits, tiny_models)
    codecs["huffman"] = HuffmanCodec(HuffmanCoder.fit(schema, bits))
    n = data.draw(st.integers(1, 4))
    msgs = np.array(data.draw(st.lists(st.lists(st.integers(0, 1), min_size=schema.N, max_size=schema.N),
                                       min_size=n, max_size=n)), dtype=np.uint8)
    for c in codecs.values():
        frames = compress_stream(c, msgs, context=bits[-5:])
        assert np.array_equal(np.array(decompress_stream(c, frames, context=bits[-5:])), msgs)


@pytest.mark.parametrize("seed", range(3))
def test_any_field_order_is_lossless(schema, small_split, seed):
    rng = np.random.default_rng(seed)
    order = rng.permutation(schema.D)
    bits = small_split[0].ues[1].bits
    codec = AcCodec(schema, AdaptiveOrder0(schema.permuted(order)).fit(bits[:, schema.bit_permutation(order)]),
                    order)
    msgs = small_split[1].ues[1].bits
    frames = compress_stream(codec, msgs)
    assert np.array_equal(np.array(decompress_stream(codec, frames)), msgs)


def test_predictor_order_mismatch(schema, tiny_models):
    tr, _ = tiny_models
    with pytest.raises(ConfigError):
        AcCodec(schema, tr.predictor(), order=tuple(range(schema.D))[::-1] if tr.order == tuple(range(schema.D))
                else tuple(range(schema.D)))


def test_joint_selector_accounting(schema, small_split, tiny_models):
    train, test = small_split
    codecs = build_codecs(schema, train.ues[0].bits, *tiny_models)
    tr, hc, jc = codecs["transformer"], codecs["huffman"], codecs["joint"]
    ctx = list(train.ues[0].bits[::-1][:8])
    for msg in test.ues[0].bits[:30]:
        a, b, j = tr.compress(msg, ctx), hc.compress(msg), jc.compress(msg, ctx)
        assert j.K == 1 + min(a.K, b.K)
        assert JointCodec.selected(j) == ("model" if a.K <= b.K else "huffman")
        assert np.array_equal(decompress_message(jc, ctx, j), msg)
        ctx = [msg] + ctx[:7]


def test_history_causality(schema, small_split, tiny_models):
    """Only the L most recent messages may influence a frame."""
    tr, _ = tiny_models
    codec = AcCodec(schema, tr.predictor(), tr.order)
    msgs = small_split[0].ues[0].bits
    hist = list(msgs[20:10:-1])
    msg = msgs[21]
    base = compress_message(codec, hist, msg)
    assert compress_message(codec, hist[:codec.L] + [np.zeros(schema.N, np.uint8)] * 5, msg) == base
    # the frame for message t is fixed before message t+1 exists
    frames = compress_stream(codec, msgs[:10])
    frames2 = compress_stream(codec, np.concatenate([msgs[:9], 1 - msgs[9:10]]))
    assert frames[:9] == frames2[:9]


def test_corrupt_frames(schema, small_split, tiny_models):
    tr, _ = tiny_models
    codec = AcCodec(schema, tr.predictor(), tr.order)
    f = codec.compress(small_split[1].ues[0].bits[0])
    with pytest.raises(CorruptInputError):
        codec.decompress(CompressedFrame("transformer", f.bits[:1]))
    with pytest.raises(CorruptInputError):
        codec.decompress(CompressedFrame("transformer", np.concatenate([f.bits, [1, 0, 1]])))
    jc = JointCodec(codec, HuffmanCodec(HuffmanCoder.fit(schema, small_split[0].ues[0].bits)))
    with pytest.raises(CorruptInputError):
        jc.decompress(CompressedFrame("joint", np.zeros(0, np.uint8)))


def test_lossy_result_is_a_hard_error(schema, small_split):
    class Broken(Codec):
        method = "identity"

        def decompress_bits(self, bits, history=()):
            out = np.asarray(bits[:schema.N], np.uint8).copy()
            out[0] ^= 1
            return out, schema.N

    train, test = small_split
    with pytest.raises(LosslessViolation):
        evaluate(concat_context(train, test)[:1], [{"identity": Broken(schema)}], schema.N)


def test_report_files(schema, small_split, tmp_path):
    train, test = small_split
    codecs = [build_codecs(schema, u.bits) for u in train.ues]
    frames = {}
    report = evaluate(concat_context(train, test), codecs, schema.N, frames)
    report.write_csv(tmp_path / "r.csv")
    report.write_summary_csv(tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "method,mean_ratio" and len(lines) == 1 + len(report.methods)
    assert (tmp_path / "r.csv").read_text().splitlines()[0] == \
        "ue,tti,method,original_bits,compressed_bits,lossless_ok"
    records = [(u.ue, int(t), f) for u in test.ues for t, f in zip(u.tti, frames[(u.ue, "huffman")])]
    save_frames(records, tmp_path / "f.dcif")
    assert load_frames(tmp_path / "f.dcif") == records
    (tmp_path / "bad.dcif").write_bytes((tmp_path / "f.dcif").read_bytes()[:-1])
    with pytest.raises(CorruptInputError):
        load_frames(tmp_path / "bad.dcif")


def test_bitmap_matrix():
    frames = [CompressedFrame("huffman", np.array([1, 0, 1], np.uint8)),
              CompressedFrame("huffman", np.array([0] * 5, np.uint8))]
    m = bitmap_matrix(frames, 4)
    assert m.tolist() == [[1, 0, 1, 2], [0, 0, 0, 0]]
