"""Compact autoregressive text decoder conditioned on a single embedding.

The conditioning vector enters through a learned projection that produces a
fixed number of prefix positions; the token stream follows behind a causal
self-attention stack (pre-layernorm, ReLU feed-forward). Training is
teacher-forced with PAD-masked cross entropy and AdamW; decoding is greedy
only, so identical inputs always produce identical strings.

All math runs in float64; the DEC1 file format stores float32.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyBatch,
    EmptyCorpus,
    IoFailure,
    MalformedHeader,
    NonFiniteLoss,
    TextTooLong,
    TruncatedPayload,
)
from .textproc import detokenize, tokenize

PAD, BOS, EOS, UNK = 0, 1, 2, 3
RESERVED_TOKENS = ("<pad>", "<bos>", "<eos>", "<unk>")

MAGIC = b"DEC1"
VERSION = 1
LN_EPS = 1e-5
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

# desk-scale learning rate for from-scratch training on tiny corpora; the
# default config below keeps the reference preset (10 epochs, lr 2e-5, batch 34)
DESK_LEARNING_RATE = 1e-3


@dataclass(frozen=True)
class Vocabulary:
    """Dense token inventory: 4 reserved ids then sorted content tokens."""

    tokens: tuple[str, ...]
    _index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("duplicate tokens in vocabulary")
        object.__setattr__(
            self,
            "_index",
            {t: i + len(RESERVED_TOKENS) for i, t in enumerate(self.tokens)},
        )

    @property
    def size(self) -> int:
        return len(self.tokens) + len(RESERVED_TOKENS)

    def token_id(self, token: str) -> int:
        return self._index.get(token, UNK)

    def encode(self, text: str) -> list[int]:
        return [self._index.get(t, UNK) for t in tokenize(text)]

    def decode(self, ids: list[int]) -> str:
        words = []
        for i in ids:
            if i < len(RESERVED_TOKENS):
                words.append(RESERVED_TOKENS[i])
            elif i - len(RESERVED_TOKENS) < len(self.tokens):
                words.append(self.tokens[i - len(RESERVED_TOKENS)])
            else:
                raise ValueError(f"token id {i} out of range")
        return detokenize(words)


def build_vocab(texts: list[str]) -> Vocabulary:
    if not texts:
        raise EmptyCorpus("cannot build a vocabulary from zero texts")
    seen: set[str] = set()
    for t in texts:
        seen.update(tokenize(t))
    return Vocabulary(tokens=tuple(sorted(seen)))


def save_vocab(vocab: Vocabulary, path) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("".join(f"{t}\n" for t in vocab.tokens), encoding="utf-8")
    except OSError as e:
        raise IoFailure(f"cannot write {path}: {e}") from e


def load_vocab(path) -> Vocabulary:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise IoFailure(f"cannot read {path}: {e}") from e
    return Vocabulary(tokens=tuple(lines))


@dataclass(frozen=True)
class DecoderConfig:
    d_cond: int
    vocab_size: int
    max_len: int = 16
    prefix_len: int = 4
    model_dim: int = 128
    n_layers: int = 2
    n_heads: int = 4
    ffn_dim: int = 256
    seed: int = 0

    def __post_init__(self):
        if self.model_dim % self.n_heads != 0:
            raise ValueError("model_dim must be divisible by n_heads")
        if self.max_len < 2:
            raise ValueError("max_len must be >= 2")

    @property
    def max_positions(self) -> int:
        return self.prefix_len + self.max_len


@dataclass(frozen=True)
class DecoderParams:
    config: DecoderConfig
    tensors: dict[str, np.ndarray]


@dataclass(frozen=True)
class DecoderTrainConfig:
    epochs: int = 10
    learning_rate: float = 2e-5
    batch_size: int = 34
    max_len: int = 16
    weight_decay: float = 0.01
    init_seed: int = 0
    shuffle_seed: int = 0
    prefix_len: int = 4
    model_dim: int = 128
    n_layers: int = 2
    n_heads: int = 4
    ffn_dim: int = 256

    def __post_init__(self):
        if self.epochs < 1 or self.learning_rate <= 0 or self.batch_size < 1:
            raise ValueError("epochs, learning_rate, batch_size must be positive")
        if self.max_len < 2:
            raise ValueError("max_len must be >= 2")


def _tensor_specs(cfg: DecoderConfig) -> list[tuple[str, tuple[int, ...]]]:
    d, f, v = cfg.model_dim, cfg.ffn_dim, cfg.vocab_size
    specs: list[tuple[str, tuple[int, ...]]] = [
        ("prefix_w", (cfg.d_cond, cfg.prefix_len * d)),
        ("prefix_b", (cfg.prefix_len * d,)),
        ("tok_emb", (v, d)),
        ("pos_emb", (cfg.max_positions, d)),
    ]
    for layer in range(cfg.n_layers):
        p = f"l{layer}."
        specs += [
            (p + "ln1_g", (d,)),
            (p + "ln1_b", (d,)),
            (p + "q_w", (d, d)),
            (p + "q_b", (d,)),
            (p + "k_w", (d, d)),
            (p + "k_b", (d,)),
            (p + "v_w", (d, d)),
            (p + "v_b", (d,)),
            (p + "o_w", (d, d)),
            (p + "o_b", (d,)),
            (p + "ln2_g", (d,)),
            (p + "ln2_b", (d,)),
            (p + "ff1_w", (d, f)),
            (p + "ff1_b", (f,)),
            (p + "ff2_w", (f, d)),
            (p + "ff2_b", (d,)),
        ]
    specs += [("lnf_g", (d,)), ("lnf_b", (d,)), ("out_w", (d, v)), ("out_b", (v,))]
    return specs


def init_decoder(cfg: DecoderConfig) -> DecoderParams:
    rng = np.random.default_rng(cfg.seed)
    tensors: dict[str, np.ndarray] = {}
    for name, shape in _tensor_specs(cfg):
        if name.endswith("_g"):
            tensors[name] = np.ones(shape)
        elif name.endswith("_b"):
            tensors[name] = np.zeros(shape)
        else:
            tensors[name] = rng.normal(0.0, 0.02, size=shape)
    return DecoderParams(config=cfg, tensors=tensors)


def _layer_norm(x: np.ndarray, g: np.ndarray, b: np.ndarray):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = xc * inv
    return g * xhat + b, (xhat, inv)


def _layer_norm_backward(dy: np.ndarray, g: np.ndarray, cache) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    xhat, inv = cache
    dg = (dy * xhat).reshape(-1, xhat.shape[-1]).sum(axis=0)
    db = dy.reshape(-1, xhat.shape[-1]).sum(axis=0)
    dxhat = dy * g
    dx = inv * (
        dxhat
        - dxhat.mean(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
    )
    return dx, dg, db


def _split_heads(x: np.ndarray, n_heads: int) -> np.ndarray:
    b, l, d = x.shape
    return x.reshape(b, l, n_heads, d // n_heads).transpose(0, 2, 1, 3)


def _merge_heads(x: np.ndarray) -> np.ndarray:
    b, h, l, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, l, h * dh)


def _forward_full(params: DecoderParams, cond: np.ndarray, tokens: np.ndarray):
    """Teacher-forced forward over [prefix | token embeddings]; caches for backprop."""
    cfg = params.config
    t = params.tensors
    batch, t_in = tokens.shape
    length = cfg.prefix_len + t_in
    if cond.shape != (batch, cfg.d_cond):
        raise DimensionMismatch(f"conditioning shape {cond.shape} != ({batch}, {cfg.d_cond})")
    if length > cfg.max_positions:
        raise DimensionMismatch(
            f"sequence length {length} exceeds trained positions {cfg.max_positions}"
        )

    prefix_flat = cond @ t["prefix_w"] + t["prefix_b"]
    prefix = prefix_flat.reshape(batch, cfg.prefix_len, cfg.model_dim)
    tok = t["tok_emb"][tokens]
    x = np.concatenate([prefix, tok], axis=1) + t["pos_emb"][:length]

    mask = np.triu(np.full((length, length), -np.inf), k=1)
    scale = 1.0 / math.sqrt(cfg.model_dim // cfg.n_heads)
    cache: dict = {"x0": x, "tokens": tokens, "cond": cond, "layers": []}
    for layer in range(cfg.n_layers):
        p = f"l{layer}."
        lc: dict = {"x_in": x}
        a, lc["ln1"] = _layer_norm(x, t[p + "ln1_g"], t[p + "ln1_b"])
        lc["a"] = a
        q = _split_heads(a @ t[p + "q_w"] + t[p + "q_b"], cfg.n_heads)
        k = _split_heads(a @ t[p + "k_w"] + t[p + "k_b"], cfg.n_heads)
        v = _split_heads(a @ t[p + "v_w"] + t[p + "v_b"], cfg.n_heads)
        scores = q @ k.transpose(0, 1, 3, 2) * scale + mask
        scores -= scores.max(axis=-1, keepdims=True)
        probs = np.exp(scores)
        probs /= probs.sum(axis=-1, keepdims=True)
        ctx = _merge_heads(probs @ v)
        attn = ctx @ t[p + "o_w"] + t[p + "o_b"]
        x = x + attn
        lc.update(q=q, k=k, v=v, probs=probs, ctx=ctx)

        lc["x_mid"] = x
        h_in, lc["ln2"] = _layer_norm(x, t[p + "ln2_g"], t[p + "ln2_b"])
        lc["h_in"] = h_in
        z = h_in @ t[p + "ff1_w"] + t[p + "ff1_b"]
        h = np.maximum(z, 0.0)
        lc["z"] = z
        lc["h"] = h
        x = x + h @ t[p + "ff2_w"] + t[p + "ff2_b"]
        cache["layers"].append(lc)

    cache["x_final"] = x
    hf, cache["lnf"] = _layer_norm(x, t["lnf_g"], t["lnf_b"])
    cache["hf"] = hf
    logits = hf @ t["out_w"] + t["out_b"]
    return logits, cache


def decoder_forward(params: DecoderParams, cond: np.ndarray, tokens: np.ndarray) -> np.ndarray:
    """Logits over the full [prefix | tokens] sequence, (B, P+T, |V|)."""
    cond = np.asarray(cond, dtype=np.float64)
    tokens = np.asarray(tokens, dtype=np.int64)
    logits, _ = _forward_full(params, cond, tokens)
    return logits


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    m = logits.max(axis=-1, keepdims=True)
    shifted = logits - m
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def cross_entropy_loss(logits: np.ndarray, targets: np.ndarray) -> float:
    """Mean negative log-softmax of target ids; PAD targets are masked out."""
    logits = np.asarray(logits, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.int64)
    if logits.ndim != 2 or targets.ndim != 1 or logits.shape[0] != targets.shape[0]:
        raise DimensionMismatch(f"logits {logits.shape} vs targets {targets.shape}")
    if targets.size and (targets.max() >= logits.shape[1] or targets.min() < 0):
        raise DimensionMismatch("target id out of vocabulary range")
    valid = targets != PAD
    if not valid.any():
        raise EmptyBatch("all targets are PAD")
    ls = _log_softmax(logits[valid])
    return float(-ls[np.arange(valid.sum()), targets[valid]].mean())


def _batch_loss_and_grads(params: DecoderParams, cond, tokens, targets):
    """Masked mean token cross entropy and gradients for every parameter."""
    cfg = params.config
    t = params.tensors
    logits, cache = _forward_full(params, cond, tokens)
    pfx = cfg.prefix_len
    sel = logits[:, pfx:, :]
    valid = targets != PAD
    n_valid = int(valid.sum())
    if n_valid == 0:
        raise EmptyBatch("all targets are PAD")

    ls = _log_softmax(sel)
    batch_idx, pos_idx = np.nonzero(valid)
    loss = float(-ls[batch_idx, pos_idx, targets[batch_idx, pos_idx]].mean())

    dsel = np.exp(ls)
    onehot_rows = (batch_idx, pos_idx, targets[batch_idx, pos_idx])
    dsel[onehot_rows] -= 1.0
    dsel *= valid[:, :, None] / n_valid

    dlogits = np.zeros_like(logits)
    dlogits[:, pfx:, :] = dsel

    grads: dict[str, np.ndarray] = {}
    dhf = dlogits @ t["out_w"].T
    grads["out_w"] = cache["hf"].reshape(-1, cfg.model_dim).T @ dlogits.reshape(-1, cfg.vocab_size)
    grads["out_b"] = dlogits.reshape(-1, cfg.vocab_size).sum(axis=0)
    dx, grads["lnf_g"], grads["lnf_b"] = _layer_norm_backward(dhf, t["lnf_g"], cache["lnf"])

    scale = 1.0 / math.sqrt(cfg.model_dim // cfg.n_heads)
    for layer in reversed(range(cfg.n_layers)):
        p = f"l{layer}."
        lc = cache["layers"][layer]
        d = cfg.model_dim

        # feed-forward branch
        dffn_out = dx
        dh = dffn_out @ t[p + "ff2_w"].T
        grads[p + "ff2_w"] = lc["h"].reshape(-1, cfg.ffn_dim).T @ dffn_out.reshape(-1, d)
        grads[p + "ff2_b"] = dffn_out.reshape(-1, d).sum(axis=0)
        dz = dh * (lc["z"] > 0.0)
        grads[p + "ff1_w"] = lc["h_in"].reshape(-1, d).T @ dz.reshape(-1, cfg.ffn_dim)
        grads[p + "ff1_b"] = dz.reshape(-1, cfg.ffn_dim).sum(axis=0)
        dh_in = dz @ t[p + "ff1_w"].T
        dx_mid, grads[p + "ln2_g"], grads[p + "ln2_b"] = _layer_norm_backward(
            dh_in, t[p + "ln2_g"], lc["ln2"]
        )
        dx = dx + dx_mid  # residual

        # attention branch
        dattn = dx
        dctx = (dattn @ t[p + "o_w"].T).reshape(*lc["x_in"].shape[:2], cfg.n_heads, -1).transpose(0, 2, 1, 3)
        grads[p + "o_w"] = lc["ctx"].reshape(-1, d).T @ dattn.reshape(-1, d)
        grads[p + "o_b"] = dattn.reshape(-1, d).sum(axis=0)
        dprobs = dctx @ lc["v"].transpose(0, 1, 3, 2)
        dv = lc["probs"].transpose(0, 1, 3, 2) @ dctx
        dscores = lc["probs"] * (dprobs - (dprobs * lc["probs"]).sum(axis=-1, keepdims=True))
        dq = dscores @ lc["k"] * scale
        dk = dscores.transpose(0, 1, 3, 2) @ lc["q"] * scale
        da = np.zeros_like(lc["a"])
        for name, dmat in (("q", dq), ("k", dk), ("v", dv)):
            flat = _merge_heads(dmat)
            grads[p + name + "_w"] = lc["a"].reshape(-1, d).T @ flat.reshape(-1, d)
            grads[p + name + "_b"] = flat.reshape(-1, d).sum(axis=0)
            da += flat @ t[p + name + "_w"].T
        dx_in, grads[p + "ln1_g"], grads[p + "ln1_b"] = _layer_norm_backward(
            da, t[p + "ln1_g"], lc["ln1"]
        )
        dx = dx + dx_in  # residual

    # embeddings and prefix projection
    length = dx.shape[1]
    grads["pos_emb"] = np.zeros_like(t["pos_emb"])
    grads["pos_emb"][:length] = dx.sum(axis=0)
    dtok = dx[:, cfg.prefix_len :, :]
    grads["tok_emb"] = np.zeros_like(t["tok_emb"])
    np.add.at(
        grads["tok_emb"],
        cache["tokens"].reshape(-1),
        dtok.reshape(-1, cfg.model_dim),
    )
    dprefix = dx[:, : cfg.prefix_len, :].reshape(dx.shape[0], -1)
    grads["prefix_w"] = cache["cond"].T @ dprefix
    grads["prefix_b"] = dprefix.sum(axis=0)
    return loss, grads


def _encode_corpus(texts: list[str], vocab: Vocabulary, max_len: int) -> list[list[int]]:
    encoded = []
    for i, text in enumerate(texts):
        ids = vocab.encode(text)
        if len(ids) > max_len - 2:
            raise TextTooLong(i, len(ids) + 2, max_len)
        encoded.append(ids)
    return encoded


def _pad_batch(seqs: list[list[int]]) -> tuple[np.ndarray, np.ndarray]:
    """tokens_in = BOS + words (PAD-padded); targets = words + EOS (PAD-padded)."""
    t_in = max(len(s) for s in seqs) + 1
    tokens = np.full((len(seqs), t_in), PAD, dtype=np.int64)
    targets = np.full((len(seqs), t_in), PAD, dtype=np.int64)
    for r, s in enumerate(seqs):
        tokens[r, 0] = BOS
        tokens[r, 1 : 1 + len(s)] = s
        targets[r, : len(s)] = s
        targets[r, len(s)] = EOS
    return tokens, targets


def train_decoder(
    cond_embeddings: np.ndarray,
    texts: list[str],
    vocab: Vocabulary,
    cfg: DecoderTrainConfig,
) -> tuple[DecoderParams, list[float]]:
    """Teacher-forced AdamW training on (embedding, text) pairs.

    Weight decay applies to matrices and embedding tables only, not to
    biases or layernorm parameters. Deterministic per (init_seed, shuffle_seed).
    """
    cond = np.asarray(cond_embeddings, dtype=np.float64)
    if cond.ndim != 2:
        raise DimensionMismatch("conditioning embeddings must be 2-D")
    if len(texts) != cond.shape[0]:
        raise DimensionMismatch(f"{cond.shape[0]} embeddings vs {len(texts)} texts")
    if not texts:
        raise EmptyCorpus("no texts to train on")
    encoded = _encode_corpus(texts, vocab, cfg.max_len)

    dconfig = DecoderConfig(
        d_cond=cond.shape[1],
        vocab_size=vocab.size,
        max_len=cfg.max_len,
        prefix_len=cfg.prefix_len,
        model_dim=cfg.model_dim,
        n_layers=cfg.n_layers,
        n_heads=cfg.n_heads,
        ffn_dim=cfg.ffn_dim,
        seed=cfg.init_seed,
    )
    params = init_decoder(dconfig)
    state = dict(params.tensors)
    m = {k: np.zeros_like(val) for k, val in state.items()}
    v = {k: np.zeros_like(val) for k, val in state.items()}
    rng = np.random.default_rng(cfg.shuffle_seed)
    n = len(texts)
    step = 0
    history: list[float] = []
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n)
        token_total = 0
        loss_total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            tokens, targets = _pad_batch([encoded[i] for i in idx])
            cur = DecoderParams(config=dconfig, tensors=state)
            loss, grads = _batch_loss_and_grads(cur, cond[idx], tokens, targets)
            if not math.isfinite(loss):
                raise NonFiniteLoss(f"epoch {epoch}, batch at {start}: loss={loss}")
            n_tok = int((targets != PAD).sum())
            loss_total += loss * n_tok
            token_total += n_tok
            step += 1
            bc1 = 1.0 - ADAM_BETA1**step
            bc2 = 1.0 - ADAM_BETA2**step
            for key, g in grads.items():
                m[key] = ADAM_BETA1 * m[key] + (1.0 - ADAM_BETA1) * g
                v[key] = ADAM_BETA2 * v[key] + (1.0 - ADAM_BETA2) * g * g
                update = (m[key] / bc1) / (np.sqrt(v[key] / bc2) + ADAM_EPS)
                if state[key].ndim >= 2:
                    update = update + cfg.weight_decay * state[key]
                state[key] = state[key] - cfg.learning_rate * update
        history.append(loss_total / token_total)
        for val in state.values():
            if not np.isfinite(val).all():
                raise NonFiniteLoss(f"non-finite parameters after epoch {epoch}")
    return DecoderParams(config=dconfig, tensors=state), history


def generate(params: DecoderParams, vocab: Vocabulary, embedding: np.ndarray, max_len: int) -> str:
    """Greedy decode from BOS until EOS or the length budget is exhausted.

    max_len bounds the token sequence including BOS; the trained position
    capacity caps it further. Argmax ties resolve to the lowest token id.
    """
    return generate_batch(params, vocab, np.asarray(embedding)[None, :], max_len)[0]


def generate_batch(
    params: DecoderParams, vocab: Vocabulary, embeddings: np.ndarray, max_len: int
) -> list[str]:
    """Row-independent lockstep greedy decoding; equals per-row generate()."""
    cfg = params.config
    cond = np.asarray(embeddings, dtype=np.float64)
    if cond.ndim != 2 or cond.shape[1] != cfg.d_cond:
        raise DimensionMismatch(f"embeddings shape {cond.shape}, conditioning dim {cfg.d_cond}")
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    budget = min(max_len, cfg.max_positions - cfg.prefix_len)
    batch = cond.shape[0]
    if batch == 0:
        return []
    seqs = np.full((batch, 1), BOS, dtype=np.int64)
    done = np.zeros(batch, dtype=bool)
    generated: list[list[int]] = [[] for _ in range(batch)]
    while seqs.shape[1] < budget and not done.all():
        logits, _ = _forward_full(params, cond, seqs)
        nxt = logits[:, -1, :].argmax(axis=1)
        for r in range(batch):
            if done[r]:
                continue
            if nxt[r] == EOS:
                done[r] = True
            else:
                generated[r].append(int(nxt[r]))
        # finished rows advance on PAD filler; their logits are never read
        seqs = np.concatenate([seqs, np.where(done, PAD, nxt)[:, None]], axis=1)
    return [vocab.decode(ids) for ids in generated]


def save_decoder(params: DecoderParams, path) -> None:
    cfg = params.config
    head = MAGIC + struct.pack(
        "<IIIIIIIII",
        VERSION,
        cfg.d_cond,
        cfg.vocab_size,
        cfg.max_len,
        cfg.prefix_len,
        cfg.model_dim,
        cfg.n_layers,
        cfg.n_heads,
        cfg.ffn_dim,
    ) + struct.pack("<Q", cfg.seed)
    specs = _tensor_specs(cfg)
    shape_table = struct.pack("<I", len(specs))
    for name, shape in specs:
        shape_table += struct.pack("<I", len(shape)) + b"".join(
            struct.pack("<I", s) for s in shape
        )
    payload = b"".join(
        np.ascontiguousarray(params.tensors[name], dtype="<f4").tobytes()
        for name, _ in specs
    )
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(head + shape_table + payload)
    except OSError as e:
        raise IoFailure(f"cannot write {path}: {e}") from e


def load_decoder(path) -> DecoderParams:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as e:
        raise IoFailure(f"cannot read {path}: {e}") from e
    if len(blob) < 48 or blob[:4] != MAGIC:
        raise MalformedHeader(f"{path}: not a DEC1 file")
    (version, d_cond, vocab_size, max_len, prefix_len, model_dim, n_layers, n_heads, ffn_dim) = (
        struct.unpack_from("<IIIIIIIII", blob, 4)
    )
    if version != VERSION:
        raise MalformedHeader(f"{path}: unsupported version {version}")
    (seed,) = struct.unpack_from("<Q", blob, 40)
    cfg = DecoderConfig(
        d_cond=d_cond,
        vocab_size=vocab_size,
        max_len=max_len,
        prefix_len=prefix_len,
        model_dim=model_dim,
        n_layers=n_layers,
        n_heads=n_heads,
        ffn_dim=ffn_dim,
        seed=seed,
    )
    specs = _tensor_specs(cfg)
    pos = 48
    (n_tensors,) = struct.unpack_from("<I", blob, pos)
    pos += 4
    if n_tensors != len(specs):
        raise MalformedHeader(f"{path}: {n_tensors} tensors, expected {len(specs)}")
    for name, shape in specs:
        (ndim,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        dims = struct.unpack_from(f"<{ndim}I", blob, pos)
        pos += 4 * ndim
        if dims != shape:
            raise MalformedHeader(f"{path}: tensor {name} has shape {dims}, expected {shape}")
    tensors: dict[str, np.ndarray] = {}
    for name, shape in specs:
        size = int(np.prod(shape))
        end = pos + 4 * size
        if end > len(blob):
            raise TruncatedPayload(f"{path}: payload ends inside tensor {name}")
        tensors[name] = (
            np.frombuffer(blob, dtype="<f4", count=size, offset=pos)
            .astype(np.float64)
            .reshape(shape)
        )
        pos = end
    if pos != len(blob):
        raise TruncatedPayload(f"{path}: {len(blob) - pos} trailing bytes")
    return DecoderParams(config=cfg, tensors=tensors)
