import math

import numpy as np
import pytest
import torch

from dcizip.errors import ConfigError, CorruptInputError, TrainingDivergedError
from dcizip.models import (AdaptiveOrder0, BitGru, DciTransformer, RnnConfig, TokenLayout, TrainConfig,
                           TransformerConfig, bce_loss, build_features, decoder_feature, encoder_feature,
                           field_labels, gradient_check, rnn_forward, train_loop, train_rnn, train_transformer,
                           transformer_forward)
from dcizip.models import features, io, rnn
from dcizip.models.inference import GruEngine, TransformerEngine
from dcizip.schema import DciSchema


@pytest.fixture
def toy():
    # R = 3 tokens: fields of 2, 3 and 1 bits at eta 4
    return DciSchema.from_widths([2, 3, 1], eta=4)


def test_first_field_decoder_feature_is_all_padding(schema):
    lay = TokenLayout.from_schema(schema, 4)
    toks = schema.message_to_integers(schema.zeros())
    assert np.all(decoder_feature(toks, 0, lay) == lay.pad)


def test_warmup_history_is_padding(schema):
    lay = TokenLayout.from_schema(schema, 4)
    enc = encoder_feature([], lay)
    assert enc.shape == (4 * lay.R,) and np.all(enc == lay.pad)


def test_toy_features_by_hand(toy):
    lay = TokenLayout.from_schema(toy, 2)
    # offsets: field0 at 0 (4 ids), field1 at 4 (8 ids), field2 at 12 (2 ids); pad = 14
    x1 = np.array([1, 0, 1, 1, 0, 1], np.uint8)  # values 2, 6, 1 -> tokens 2, 10, 13
    x2 = np.array([0, 1, 0, 0, 1, 0], np.uint8)  # values 1, 1, 0 -> tokens 1, 5, 12
    t1, t2 = toy.message_to_integers(x1), toy.message_to_integers(x2)
    assert t1.tolist() == [2, 10, 13] and t2.tolist() == [1, 5, 12]
    fp = build_features([t2, t1], t1, 2, lay)  # history newest first
    assert fp.encoder.tolist() == [1, 5, 12, 2, 10, 13]
    assert fp.decoder.tolist() == [2, 10, 14]
    assert lay.s_encoder == 6 and lay.s_decoder == 3 and lay.s_output == 3


def test_labels_and_mask(schema, rng):
    msg = rng.integers(0, 2, schema.N).astype(np.uint8)
    y, mask = field_labels(msg, schema)
    assert y.shape == mask.shape == (schema.D, schema.max_width)
    for k, w in enumerate(schema.widths):
        assert np.array_equal(y[k, :w], msg[schema.field_slice(k)])
        assert mask[k].sum() == w and not y[k, w:].any()


def test_stream_arrays_match_single_features(schema, small_split):
    msgs = small_split[0].ues[0].bits[:12]
    L = 3
    enc, dec_in, y, mask = features.stream_arrays(msgs[5:], schema, L, history=msgs[:5])
    lay = TokenLayout.from_schema(schema, L)
    toks = [schema.message_to_integers(m) for m in msgs]
    for i in range(len(msgs) - 5):
        t = i + 5
        assert np.array_equal(enc[i], encoder_feature([toks[t - 1], toks[t - 2], toks[t - 3]], lay))
        assert dec_in[i, 0] == lay.start and np.array_equal(dec_in[i, 1:], toks[t][:-1])


def _small_transformer(schema, L=3, seed=0):
    torch.manual_seed(seed)
    cfg = TransformerConfig(L=L, d_model=16, heads=2, encoder_layers=1, decoder_layers=1, d_ff=32)
    return DciTransformer(cfg, TokenLayout.from_schema(schema, L)).eval()


def test_config_validation():
    with pytest.raises(ValueError):
        TransformerConfig(d_model=30, heads=4)
    with pytest.raises(ValueError):
        TransformerConfig(L=0)


def test_transformer_forward_range_and_determinism(schema, small_split):
    model = _small_transformer(schema)
    lay = model.layout
    msgs = small_split[0].ues[0].bits[:4]
    toks = [schema.message_to_integers(m) for m in msgs]
    enc = encoder_feature(toks[:3][::-1], lay)
    for k in range(schema.D):
        p = transformer_forward(model, enc, decoder_feature(toks[3], k, lay), k)
        assert p.shape == (lay.s_output,) and np.all((p > 0) & (p < 1))
        assert np.array_equal(p, transformer_forward(model, enc, decoder_feature(toks[3], k, lay), k))


def test_decoder_prediction_is_causal(schema):
    """Changing field k or later must not change the prediction for field k."""
    model = _small_transformer(schema)
    lay = model.layout
    rng = np.random.default_rng(0)
    a = schema.message_to_integers(rng.integers(0, 2, schema.N).astype(np.uint8))
    b = schema.message_to_integers(rng.integers(0, 2, schema.N).astype(np.uint8))
    enc = torch.as_tensor(encoder_feature([a], lay))[None]
    for k in range(schema.D):
        mixed = a.copy()
        mixed[lay.field_start[k]:] = b[lay.field_start[k]:]
        d1 = torch.as_tensor(features.decoder_input(a, lay))[None]
        d2 = torch.as_tensor(features.decoder_input(mixed, lay))[None]
        with torch.no_grad():
            assert torch.allclose(model(enc, d1)[0, k], model(enc, d2)[0, k], atol=1e-6)


def test_numpy_engine_matches_torch(schema, small_split):
    model = _small_transformer(schema, seed=4)
    eng = TransformerEngine(model)
    lay = model.layout
    msgs = small_split[0].ues[0].bits[:4]
    toks = [schema.message_to_integers(m) for m in msgs]
    enc = encoder_feature(toks[:3][::-1], lay)
    state = eng.session(enc)
    dec_in = features.decoder_input(toks[3], lay)
    for k in range(schema.D):
        h = state.feed(dec_in[state.n:lay.field_start[k] + 1])
        got = 1 / (1 + np.exp(-state.head(h[-1])))
        with torch.no_grad():
            ref = torch.sigmoid(model.field_logits(model.encode(torch.as_tensor(enc)[None]),
                                                   torch.as_tensor(dec_in)[None], k))[0].numpy()
        assert np.allclose(got, ref, atol=1e-5)


def test_gru_engine_matches_torch(schema, small_split):
    torch.manual_seed(2)
    model = BitGru(RnnConfig(L=2, hidden=16, embed=8), schema.N).eval()
    eng = GruEngine(model)
    msgs = small_split[0].ues[0].bits[:3]
    win = rnn.window_tokens([msgs[1], msgs[0]], schema.N, 2)
    seq = np.concatenate([win, msgs[2][:10]])
    pos = np.arange(len(seq)) % schema.N
    pos[len(win):] = np.arange(10)
    h = eng.zeros()
    for b, p in zip(seq, pos):
        h = eng.step(h, int(b), int(p))
    ref = rnn_forward(model, seq, pos)
    got = P = 1 / (1 + np.exp(-eng.logit(h)))
    from dcizip.coders.arithmetic import P_MIN
    assert got == pytest.approx((ref - P_MIN) / (1 - 2 * P_MIN), abs=1e-6)
    assert 0 < P < 1


def test_bce_loss_oracle():
    y = np.array([1, 0, 1, 0])
    p = np.array([0.9, 0.2, 0.6, 0.5])
    ref = -np.mean([math.log(0.9), math.log(0.8), math.log(0.6), math.log(0.5)])
    assert bce_loss(y, p) == pytest.approx(ref)
    assert bce_loss(y, p, mask=[1, 1, 0, 0]) == pytest.approx(-(math.log(0.9) + math.log(0.8)) / 2)
    assert math.isfinite(bce_loss([1], [0.0]))


def test_constant_trace_is_learned(schema):
    msg = schema.from_values([0b0000011110000, 0, 9, 1, 0, 3, 1, 1, 2, 4])
    msgs = np.tile(msg, (2000, 1))
    cfg = TransformerConfig(L=2, d_model=32, heads=4, encoder_layers=1, decoder_layers=1, d_ff=64)
    model = train_transformer(schema, msgs, cfg, TrainConfig(epochs=5, lr=3e-3, seed=0))
    assert model.best_val_bce < 0.01


def test_training_is_deterministic(schema, small_split):
    bits = small_split[0].ues[2].bits[:150]
    cfg = TransformerConfig(L=2, d_model=16, heads=2, encoder_layers=1, decoder_layers=1, d_ff=32)
    a = train_transformer(schema, bits, cfg, TrainConfig(epochs=2, seed=5))
    b = train_transformer(schema, bits, cfg, TrainConfig(epochs=2, seed=5))
    assert io.dumps(a) == io.dumps(b)
    assert a.metadata["curve"] == b.metadata["curve"]


def test_absent_tokens_get_no_embedding_gradient(schema, small_split):
    model = _small_transformer(schema).train()
    msgs = small_split[0].ues[0].bits[:20]
    enc, dec, y, mask = features.stream_arrays(msgs, schema, 3)
    logits = model(torch.as_tensor(enc), torch.as_tensor(dec))
    from dcizip.models.training import masked_bce_from_logits
    masked_bce_from_logits(logits, torch.as_tensor(y), torch.as_tensor(mask, dtype=torch.float32)).backward()
    grad = model.embed.weight.grad
    used = np.zeros(model.layout.vocab, bool)
    used[np.unique(np.concatenate([enc.ravel(), dec.ravel()]))] = True
    assert torch.all(grad[torch.as_tensor(~used)] == 0)
    assert torch.any(grad[torch.as_tensor(used)] != 0)


def test_gradient_check_toy_transformer(toy):
    torch.manual_seed(0)
    cfg = TransformerConfig(L=2, d_model=8, heads=2, encoder_layers=1, decoder_layers=1, d_ff=16)
    model = DciTransformer(cfg, TokenLayout.from_schema(toy, 2))
    rng = np.random.default_rng(0)
    msgs = rng.integers(0, 2, (6, toy.N)).astype(np.uint8)
    enc, dec, y, mask = features.stream_arrays(msgs, toy, 2)
    from dcizip.models.training import masked_bce_from_logits

    def loss(m):
        return masked_bce_from_logits(m(torch.as_tensor(enc), torch.as_tensor(dec)),
                                      torch.as_tensor(y, dtype=torch.float64), torch.as_tensor(mask, dtype=torch.float64))

    errs = gradient_check(model, loss, max_elements=20)
    assert max(errs.values()) < 1e-3


def test_divergence_is_reported():
    model = torch.nn.Linear(1, 1)
    x = np.zeros((8, 1), np.float32)
    with pytest.raises(TrainingDivergedError):
        train_loop(model, [x], np.zeros((8, 1), np.float32), np.ones((8, 1), np.float32),
                   lambda m, a: m(a) * float("nan"), TrainConfig(epochs=1))


def test_rnn_training_runs(schema, small_split):
    bits = small_split[0].ues[0].bits[:80]
    model = train_rnn(schema, bits, RnnConfig(L=2, hidden=8, embed=4), TrainConfig(epochs=1))
    assert model.kind == "rnn" and math.isfinite(model.best_val_bce)


def test_serialization_bit_exact(schema, tiny_models, tmp_path):
    for model in tiny_models:
        data = io.dumps(model)
        back = io.loads(data, schema)
        assert io.dumps(back) == data
        assert back.order == model.order and back.kind == model.kind
        path = tmp_path / f"{model.kind}.dcim"
        io.save_model(model, path)
        assert io.load_model(path, schema).metadata == back.metadata


def test_serialization_errors(schema, tiny_models):
    data = bytearray(io.dumps(tiny_models[0]))
    data[-5] ^= 0xFF
    with pytest.raises(CorruptInputError):
        io.loads(bytes(data), schema)
    with pytest.raises(CorruptInputError):
        io.loads(b"nope" + bytes(data[4:]), schema)
    with pytest.raises(ConfigError):
        io.loads(io.dumps(tiny_models[0]), DciSchema(schema.fields, eta=4))


def test_adaptive_counts(schema):
    m = AdaptiveOrder0(schema).fit(np.zeros((8, schema.N), np.uint8))
    assert m.probabilities(0)[0] == pytest.approx(1 / 10)
    m.commit(np.ones(schema.N, np.uint8))
    assert m.probabilities(0)[0] == pytest.approx(2 / 11)
    m.reset()
    assert m.probabilities(0)[0] == pytest.approx(1 / 10)
