"""Decoder unit tests: vocabulary, loss, gradients, causality, generation.

The conditioning contract under test: a learned prefix projected from the
embedding is prepended to BOS + tokens, and logits at each position may
depend only on the prefix and strictly earlier tokens.
"""

import math

import numpy as np
import pytest

from ftda.decoder import (
    BOS,
    EOS,
    PAD,
    UNK,
    DecoderConfig,
    DecoderTrainConfig,
    Vocabulary,
    _batch_loss_and_grads,
    _pad_batch,
    build_vocab,
    cross_entropy_loss,
    decoder_forward,
    generate,
    generate_batch,
    init_decoder,
    load_decoder,
    load_vocab,
    save_decoder,
    save_vocab,
    train_decoder,
)
from ftda.errors import (
    DimensionMismatch,
    EmptyBatch,
    EmptyCorpus,
    MalformedHeader,
    TextTooLong,
    TruncatedPayload,
)
from ftda.textproc import normalize

TWO_STRINGS = ["grasper retract gallbladder", "hook dissect cystic plate"]


def tiny_params(seed: int = 0, vocab_size: int = 6) -> "DecoderParams":
    cfg = DecoderConfig(
        d_cond=3,
        vocab_size=vocab_size,
        max_len=5,
        prefix_len=2,
        model_dim=8,
        n_layers=1,
        n_heads=2,
        ffn_dim=8,
        seed=seed,
    )
    return init_decoder(cfg)


def batch_loss(params, cond, tokens, targets) -> float:
    """Loss via the public forward: slice prediction positions, mask PAD."""
    logits = decoder_forward(params, cond, tokens)
    pfx = params.config.prefix_len
    sel = logits[:, pfx:, :].reshape(-1, params.config.vocab_size)
    return cross_entropy_loss(sel, targets.reshape(-1))


def test_build_vocab_counts():
    vocab = build_vocab(["grasper retract gallbladder"])
    assert len(vocab.tokens) == 3
    assert vocab.size == 7


def test_build_vocab_duplicates_collapse():
    once = build_vocab(TWO_STRINGS)
    doubled = build_vocab(TWO_STRINGS * 3)
    assert once == doubled


def test_vocab_ids_dense_and_sorted():
    vocab = build_vocab(["b a", "c a"])
    assert vocab.tokens == ("a", "b", "c")
    assert [vocab.token_id(t) for t in vocab.tokens] == [4, 5, 6]


def test_vocab_unseen_token_is_unk():
    vocab = build_vocab(["alpha beta"])
    assert vocab.encode("alpha qwerty") == [vocab.token_id("alpha"), UNK]


def test_vocab_encode_decode_roundtrip():
    vocab = build_vocab(TWO_STRINGS)
    for text in TWO_STRINGS:
        assert vocab.decode(vocab.encode(text)) == normalize(text)


def test_vocab_empty_corpus():
    with pytest.raises(EmptyCorpus):
        build_vocab([])


def test_vocab_file_roundtrip(tmp_path):
    vocab = build_vocab(TWO_STRINGS)
    path = tmp_path / "vocab.txt"
    save_vocab(vocab, path)
    assert load_vocab(path) == vocab
    # line i carries the token with id i + 4
    lines = path.read_text().splitlines()
    assert lines[0] == vocab.tokens[0]


def test_cross_entropy_uniform_logits():
    logits = np.zeros((3, 8))
    targets = np.array([1, 5, 7])
    assert cross_entropy_loss(logits, targets) == pytest.approx(math.log(8), abs=1e-12)


def test_cross_entropy_decreases_with_margin():
    targets = np.array([2])
    losses = []
    for margin in (1.0, 5.0, 30.0):
        logits = np.zeros((1, 6))
        logits[0, 2] = margin
        losses.append(cross_entropy_loss(logits, targets))
    assert losses[0] > losses[1] > losses[2]
    assert losses[2] < 1e-8


def test_cross_entropy_matches_logsumexp_oracle():
    rng = np.random.default_rng(3)
    logits = rng.normal(size=(12, 9))
    targets = rng.integers(1, 9, size=12)
    want = 0.0
    for row, t in zip(logits, targets):
        want += math.log(np.exp(row).sum()) - row[t]
    want /= len(targets)
    assert cross_entropy_loss(logits, targets) == pytest.approx(want, abs=1e-5)


def test_cross_entropy_masks_pad():
    rng = np.random.default_rng(4)
    logits = rng.normal(size=(4, 6))
    targets = np.array([2, PAD, 3, PAD])
    kept = cross_entropy_loss(logits[[0, 2]], targets[[0, 2]])
    assert cross_entropy_loss(logits, targets) == pytest.approx(kept, abs=1e-12)


def test_cross_entropy_all_pad_rejected():
    with pytest.raises(EmptyBatch):
        cross_entropy_loss(np.zeros((2, 5)), np.array([PAD, PAD]))


def test_cross_entropy_shape_guard():
    with pytest.raises(DimensionMismatch):
        cross_entropy_loss(np.zeros((2, 5)), np.zeros((3,), dtype=np.int64))


def test_train_two_strings_reconstructs_each_condition():
    # two distinct label strings, orthogonal condition embeddings
    emb = np.tile(np.array([[1.0, 0.0], [0.0, 1.0]]), (17, 1))
    texts = TWO_STRINGS * 17
    vocab = build_vocab(texts)
    cfg = DecoderTrainConfig(
        epochs=120,
        learning_rate=3e-3,
        batch_size=4,
        max_len=8,
        model_dim=32,
        ffn_dim=64,
        n_layers=2,
        n_heads=4,
        init_seed=0,
        shuffle_seed=0,
    )
    params, history = train_decoder(emb, texts, vocab, cfg)
    assert history[-1] < 0.05
    out0 = generate(params, vocab, np.array([1.0, 0.0]), max_len=8)
    out1 = generate(params, vocab, np.array([0.0, 1.0]), max_len=8)
    assert out0 == TWO_STRINGS[0]
    assert out1 == TWO_STRINGS[1]


def test_train_empty_corpus():
    vocab = build_vocab(["a"])
    with pytest.raises(EmptyCorpus):
        train_decoder(np.zeros((0, 2)), [], vocab, DecoderTrainConfig())


def test_train_text_too_long():
    vocab = build_vocab(["a b c d e"])
    with pytest.raises(TextTooLong):
        train_decoder(
            np.zeros((1, 2)), ["a b c d e"], vocab, DecoderTrainConfig(max_len=4)
        )


def test_train_defaults_match_presets():
    cfg = DecoderTrainConfig()
    assert cfg.epochs == 10
    assert cfg.learning_rate == pytest.approx(2e-5)
    assert cfg.batch_size == 34
    assert cfg.weight_decay == pytest.approx(0.01)


def test_train_deterministic_bitwise():
    emb = np.tile(np.eye(2), (3, 1))
    texts = TWO_STRINGS * 3
    vocab = build_vocab(texts)
    cfg = DecoderTrainConfig(
        epochs=2, learning_rate=1e-3, batch_size=2, max_len=8,
        model_dim=16, ffn_dim=16, n_layers=1, n_heads=2,
    )
    p1, h1 = train_decoder(emb, texts, vocab, cfg)
    p2, h2 = train_decoder(emb, texts, vocab, cfg)
    assert h1 == h2
    for key in p1.tensors:
        assert np.array_equal(p1.tensors[key], p2.tensors[key])


def test_generate_deterministic():
    params = tiny_params(seed=5)
    vocab = Vocabulary(tokens=("x", "y"))
    emb = np.array([0.3, -0.2, 0.9])
    assert generate(params, vocab, emb, 5) == generate(params, vocab, emb, 5)


def test_generate_max_len_one_empty():
    params = tiny_params(seed=1)
    vocab = Vocabulary(tokens=("x", "y"))
    assert generate(params, vocab, np.zeros(3), max_len=1) == ""


def test_generate_respects_budget():
    for seed in range(5):
        params = tiny_params(seed=seed)
        vocab = Vocabulary(tokens=("x", "y"))
        out = generate(params, vocab, np.ones(3), max_len=4)
        # budget counts BOS, so at most 3 generated words
        assert len(out.split()) <= 3


def test_generate_batch_equals_per_row():
    rng = np.random.default_rng(7)
    params = tiny_params(seed=3)
    vocab = Vocabulary(tokens=("x", "y"))
    conds = rng.normal(size=(6, 3))
    batch = generate_batch(params, vocab, conds, 5)
    single = [generate(params, vocab, c, 5) for c in conds]
    assert batch == single


def test_generate_batch_empty():
    params = tiny_params()
    vocab = Vocabulary(tokens=("x",))
    assert generate_batch(params, vocab, np.zeros((0, 3)), 5) == []


def test_generate_dim_guard():
    params = tiny_params()
    vocab = Vocabulary(tokens=("x",))
    with pytest.raises(DimensionMismatch):
        generate(params, vocab, np.zeros(4), 5)


def test_causality_exact():
    rng = np.random.default_rng(11)
    for draw in range(5):
        params = tiny_params(seed=draw, vocab_size=6)
        cond = rng.normal(size=(2, 3))
        tokens = rng.integers(0, 6, size=(2, 3))
        base = decoder_forward(params, cond, tokens)
        mutated = tokens.copy()
        mutated[:, 2] = (mutated[:, 2] + 1) % 6
        out = decoder_forward(params, cond, mutated)
        pfx = params.config.prefix_len
        cut = pfx + 2  # positions strictly before the mutated token
        assert np.array_equal(base[:, :cut, :], out[:, :cut, :])
        assert not np.array_equal(base[:, cut:, :], out[:, cut:, :])


def test_pad_append_loss_invariance():
    rng = np.random.default_rng(13)
    params = tiny_params(seed=2)
    cond = rng.normal(size=(3, 3))
    tokens = np.array([[BOS, 4, 5], [BOS, 5, PAD], [BOS, 4, 4]])
    targets = np.array([[4, 5, EOS], [5, EOS, PAD], [4, 4, EOS]])
    base = batch_loss(params, cond, tokens, targets)
    pad_col = np.full((3, 2), PAD)
    wider = batch_loss(
        params,
        cond,
        np.concatenate([tokens, pad_col], axis=1),
        np.concatenate([targets, pad_col], axis=1),
    )
    assert abs(base - wider) <= 1e-6


def test_gradient_matches_finite_differences_miniature():
    rng = np.random.default_rng(29)
    params = tiny_params(seed=8, vocab_size=6)
    cond = rng.normal(size=(2, 3))
    tokens = np.array([[BOS, 4, 5], [BOS, 5, 4]])
    targets = np.array([[4, 5, EOS], [5, 4, EOS]])
    loss, grads = _batch_loss_and_grads(params, cond, tokens, targets)
    names = sorted(grads)
    h = 1e-5
    checked = 0
    for name in names:
        flat = params.tensors[name].reshape(-1)
        i = int(rng.integers(0, flat.size))
        orig = flat[i]
        flat[i] = orig + h
        up, _ = _batch_loss_and_grads(params, cond, tokens, targets)
        flat[i] = orig - h
        down, _ = _batch_loss_and_grads(params, cond, tokens, targets)
        flat[i] = orig
        fd = (up - down) / (2 * h)
        an = grads[name].reshape(-1)[i]
        assert abs(an - fd) / max(1.0, abs(fd)) <= 1e-3, name
        checked += 1
    assert checked >= 10


def test_decoder_forward_all_finite():
    rng = np.random.default_rng(17)
    params = tiny_params(seed=6)
    logits = decoder_forward(params, rng.normal(size=(4, 3)), rng.integers(0, 6, (4, 3)))
    assert np.isfinite(logits).all()


def test_pad_batch_layout():
    tokens, targets = _pad_batch([[4, 5], [6]])
    assert tokens.tolist() == [[BOS, 4, 5], [BOS, 6, PAD]]
    assert targets.tolist() == [[4, 5, EOS], [6, EOS, PAD]]


def test_save_load_roundtrip_bitwise(tmp_path):
    params = tiny_params(seed=21)
    # float32 storage: round-trip params through the boundary dtype first
    to_disk = {k: v.astype(np.float32).astype(np.float64) for k, v in params.tensors.items()}
    params = type(params)(config=params.config, tensors=to_disk)
    path = tmp_path / "d.dec1"
    save_decoder(params, path)
    back = load_decoder(path)
    assert back.config == params.config
    assert set(back.tensors) == set(params.tensors)
    for key in params.tensors:
        assert np.array_equal(back.tensors[key], params.tensors[key]), key


def test_load_decoder_bad_magic(tmp_path):
    path = tmp_path / "bad.dec1"
    path.write_bytes(b"XXXX" + b"\x00" * 64)
    with pytest.raises(MalformedHeader):
        load_decoder(path)


def test_load_decoder_truncated(tmp_path):
    params = tiny_params(seed=1)
    path = tmp_path / "cut.dec1"
    save_decoder(params, path)
    raw = path.read_bytes()
    path.write_bytes(raw[:-8])
    with pytest.raises(TruncatedPayload):
        load_decoder(path)
