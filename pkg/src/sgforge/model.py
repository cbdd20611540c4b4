"""Transformer tagger with an attention-based parent head.

Backbone: token + position embeddings, then decoder-style blocks of causal
multi-head self-attention and a GELU feed-forward, each followed by a residual
add and layer norm. Head: per-position class logits over the six node types,
and parent logits from a scaled query/key dot product over all final hidden
states including ROOT. The parent head is bidirectional on purpose: attribute
arcs routinely point rightward at their object.

All gradients are computed analytically; tests check them against central
finite differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import LengthMismatchError, SequenceTooLongError
from .graph import canonical_words
from .tags import N_NODE_TYPES, NodeType, TaggedSentence, TaggedToken
from .tokenizer import TokenSequence, Tokenizer

Params = dict[str, np.ndarray]


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    d_ff: int = 256
    max_len: int = 32
    d_qk: int = 64  # parent-head query/key width
    n_classes: int = N_NODE_TYPES
    loss_weight: float = 1.0  # parent-loss weight; trainer may recalibrate
    tokenizer_mode: str = "word"

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ValueError("d_model must be divisible by n_heads")
        if self.n_classes != N_NODE_TYPES:
            raise ValueError(f"n_classes is fixed at {N_NODE_TYPES}")

    def to_dict(self) -> dict:
        return {
            "vocab_size": self.vocab_size,
            "d_model": self.d_model,
            "n_layers": self.n_layers,
            "n_heads": self.n_heads,
            "d_ff": self.d_ff,
            "max_len": self.max_len,
            "d_qk": self.d_qk,
            "n_classes": self.n_classes,
            "loss_weight": self.loss_weight,
            "tokenizer_mode": self.tokenizer_mode,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


@dataclass(frozen=True)
class ModelOutputs:
    class_logits: np.ndarray  # (T, n_classes)
    parent_logits: np.ndarray  # (T, T+1), column 0 is ROOT


def init_params(cfg: ModelConfig, seed: int = 0, dtype=np.float32) -> Params:
    """Normal(0, 0.02) projections and embeddings; layer-norm gain 1, bias 0."""
    rng = np.random.default_rng(seed)

    def normal(*shape):
        return rng.normal(0.0, 0.02, size=shape).astype(dtype)

    d, h, f = cfg.d_model, cfg.n_heads, cfg.d_ff
    p: Params = {
        "tok_emb": normal(cfg.vocab_size, d),
        "pos_emb": normal(cfg.max_len + 1, d),
        "head.w_q": normal(d, cfg.d_qk),
        "head.w_k": normal(d, cfg.d_qk),
        "head.w_c": normal(d, cfg.n_classes),
    }
    for l in range(cfg.n_layers):
        p[f"layer{l}.attn.w_qkv"] = normal(d, 3 * d)
        p[f"layer{l}.attn.b_qkv"] = np.zeros(3 * d, dtype=dtype)
        p[f"layer{l}.attn.w_o"] = normal(d, d)
        p[f"layer{l}.attn.b_o"] = np.zeros(d, dtype=dtype)
        p[f"layer{l}.ln1.g"] = np.ones(d, dtype=dtype)
        p[f"layer{l}.ln1.b"] = np.zeros(d, dtype=dtype)
        p[f"layer{l}.ffn.w1"] = normal(d, f)
        p[f"layer{l}.ffn.b1"] = np.zeros(f, dtype=dtype)
        p[f"layer{l}.ffn.w2"] = normal(f, d)
        p[f"layer{l}.ffn.b2"] = np.zeros(d, dtype=dtype)
        p[f"layer{l}.ln2.g"] = np.ones(d, dtype=dtype)
        p[f"layer{l}.ln2.b"] = np.zeros(d, dtype=dtype)
    return p


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715


def gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + np.tanh(_GELU_C * (x + _GELU_A * x**3)))


def gelu_grad(x: np.ndarray) -> np.ndarray:
    t = np.tanh(_GELU_C * (x + _GELU_A * x**3))
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t**2) * _GELU_C * (1.0 + 3.0 * _GELU_A * x**2)


_LN_EPS = 1e-5


def _layer_norm(x: np.ndarray, g: np.ndarray, b: np.ndarray):
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + _LN_EPS)
    y = (x - mu) * inv
    return g * y + b, (y, inv)


def _layer_norm_backward(dout: np.ndarray, cache, g: np.ndarray):
    y, inv = cache
    d = y.shape[-1]
    dg = (dout * y).sum(axis=tuple(range(dout.ndim - 1)))
    db = dout.sum(axis=tuple(range(dout.ndim - 1)))
    dy = dout * g
    dx = inv * (dy - dy.mean(axis=-1, keepdims=True) - y * (dy * y).mean(axis=-1, keepdims=True))
    return dx, dg, db


def _forward_cached(params: Params, cfg: ModelConfig, ids: np.ndarray):
    """Run the backbone and head, returning outputs plus caches for backprop."""
    L = len(ids)  # T + 1 including ROOT
    d, nh = cfg.d_model, cfg.n_heads
    dh = d // nh
    x = params["tok_emb"][ids] + params["pos_emb"][:L]
    layer_caches = []
    for l in range(cfg.n_layers):
        pre = f"layer{l}."
        a_in = x
        qkv = a_in @ params[pre + "attn.w_qkv"] + params[pre + "attn.b_qkv"]
        q, k, v = np.split(qkv, 3, axis=-1)
        # (heads, L, dh)
        qh = q.reshape(L, nh, dh).transpose(1, 0, 2)
        kh = k.reshape(L, nh, dh).transpose(1, 0, 2)
        vh = v.reshape(L, nh, dh).transpose(1, 0, 2)
        scores = qh @ kh.transpose(0, 2, 1) / math.sqrt(dh)
        causal = np.tril(np.ones((L, L), dtype=bool))
        scores = np.where(causal, scores, -np.inf)
        probs = softmax(scores, axis=-1)
        ctx = probs @ vh  # (nh, L, dh)
        ctx_cat = ctx.transpose(1, 0, 2).reshape(L, d)
        attn = ctx_cat @ params[pre + "attn.w_o"] + params[pre + "attn.b_o"]
        r1 = a_in + attn
        x_mid, ln1_cache = _layer_norm(r1, params[pre + "ln1.g"], params[pre + "ln1.b"])
        u = x_mid @ params[pre + "ffn.w1"] + params[pre + "ffn.b1"]
        gu = gelu(u)
        ff = gu @ params[pre + "ffn.w2"] + params[pre + "ffn.b2"]
        r2 = x_mid + ff
        x, ln2_cache = _layer_norm(r2, params[pre + "ln2.g"], params[pre + "ln2.b"])
        layer_caches.append(
            dict(a_in=a_in, qh=qh, kh=kh, vh=vh, probs=probs, ctx_cat=ctx_cat,
                 ln1=ln1_cache, x_mid=x_mid, u=u, gu=gu, ln2=ln2_cache)
        )
    hidden = x  # (L, d)
    class_logits = hidden[1:] @ params["head.w_c"]
    q_head = hidden[1:] @ params["head.w_q"]
    k_head = hidden @ params["head.w_k"]
    parent_logits = q_head @ k_head.T / math.sqrt(cfg.d_qk)
    cache = dict(ids=ids, hidden=hidden, q_head=q_head, k_head=k_head, layers=layer_caches)
    return ModelOutputs(class_logits, parent_logits), cache


def forward(params: Params, cfg: ModelConfig, seq: TokenSequence) -> ModelOutputs:
    """Class logits C and parent logits P for one sequence (T rows each)."""
    if len(seq) > cfg.max_len + 1:
        raise SequenceTooLongError(f"sequence length {len(seq)} exceeds {cfg.max_len + 1}")
    outputs, _ = _forward_cached(params, cfg, np.asarray(seq.ids))
    return outputs


def target_arrays(seq: TokenSequence, target: TaggedSentence) -> tuple[np.ndarray, np.ndarray]:
    """Map word-level tags onto token positions.

    In bpe mode a word's label sits on its last subword; non-final subwords
    become SAME pointing at that head. Word-level parents are translated to
    head positions (0 stays ROOT).
    """
    if len(seq.word_heads) != len(target):
        raise LengthMismatchError(
            f"sequence has {len(seq.word_heads)} words, target has {len(target)}"
        )
    t = len(seq.ids) - 1
    types = np.full(t, int(NodeType.SAME), dtype=np.int64)
    parents = np.zeros(t, dtype=np.int64)
    prev_head = 0
    for word_i, head in enumerate(seq.word_heads):
        tok = target.tokens[word_i]
        types[head - 1] = int(tok.node_type)
        parents[head - 1] = 0 if tok.parent == 0 else seq.word_heads[tok.parent - 1]
        for pos in range(prev_head + 1, head):  # non-final subwords
            parents[pos - 1] = head
        prev_head = head
    return types, parents


def loss_from_outputs(
    outputs: ModelOutputs, types: np.ndarray, parents: np.ndarray, loss_weight: float
) -> float:
    """Mean class cross-entropy plus weighted mean parent cross-entropy.

    Parent terms are restricted to positions whose target type is not NONE;
    with no such position the parent term is exactly zero.
    """
    t = outputs.class_logits.shape[0]
    if len(types) != t or len(parents) != t:
        raise LengthMismatchError(f"outputs have {t} positions, targets {len(types)}")
    if t == 0:
        return 0.0
    log_c = outputs.class_logits - _logsumexp(outputs.class_logits)
    class_term = -log_c[np.arange(t), types].mean()
    mask = types != int(NodeType.NONE)
    if not mask.any():
        return float(class_term)
    log_p = outputs.parent_logits - _logsumexp(outputs.parent_logits)
    parent_term = -log_p[np.arange(t), parents][mask].mean()
    return float(class_term + loss_weight * parent_term)


def _logsumexp(x: np.ndarray) -> np.ndarray:
    m = np.max(x, axis=-1, keepdims=True)
    return m + np.log(np.sum(np.exp(x - m), axis=-1, keepdims=True))


def loss_output_grads(
    outputs: ModelOutputs, types: np.ndarray, parents: np.ndarray, loss_weight: float
):
    """Gradients of the loss with respect to the two logit blocks.

    Parent-logit rows at NONE positions are exactly zero.
    """
    t = outputs.class_logits.shape[0]
    d_class = softmax(outputs.class_logits)
    d_class[np.arange(t), types] -= 1.0
    d_class /= t
    d_parent = np.zeros_like(outputs.parent_logits)
    mask = types != int(NodeType.NONE)
    n_arcs = int(mask.sum())
    if n_arcs:
        rows = np.where(mask)[0]
        sm = softmax(outputs.parent_logits[rows])
        sm[np.arange(n_arcs), parents[rows]] -= 1.0
        d_parent[rows] = loss_weight * sm / n_arcs
    return d_class, d_parent


def loss_and_grads(
    params: Params,
    cfg: ModelConfig,
    seq: TokenSequence,
    types: np.ndarray,
    parents: np.ndarray,
    loss_weight: float,
) -> tuple[float, Params]:
    """Loss and exact gradients for every parameter tensor."""
    if len(seq) > cfg.max_len + 1:
        raise SequenceTooLongError(f"sequence length {len(seq)} exceeds {cfg.max_len + 1}")
    ids = np.asarray(seq.ids)
    outputs, cache = _forward_cached(params, cfg, ids)
    loss = loss_from_outputs(outputs, types, parents, loss_weight)
    d_class, d_parent = loss_output_grads(outputs, types, parents, loss_weight)

    grads: Params = {name: np.zeros_like(tensor) for name, tensor in params.items()}
    hidden = cache["hidden"]
    L = hidden.shape[0]
    d, nh = cfg.d_model, cfg.n_heads
    dh = d // nh
    d_hidden = np.zeros_like(hidden)

    # head
    grads["head.w_c"] += hidden[1:].T @ d_class
    d_hidden[1:] += d_class @ params["head.w_c"].T
    s = 1.0 / math.sqrt(cfg.d_qk)
    dq_head = s * (d_parent @ cache["k_head"])
    dk_head = s * (d_parent.T @ cache["q_head"])
    grads["head.w_q"] += hidden[1:].T @ dq_head
    grads["head.w_k"] += hidden.T @ dk_head
    d_hidden[1:] += dq_head @ params["head.w_q"].T
    d_hidden += dk_head @ params["head.w_k"].T

    dx = d_hidden
    for l in reversed(range(cfg.n_layers)):
        pre = f"layer{l}."
        c = cache["layers"][l]
        dr2, dg2, db2 = _layer_norm_backward(dx, c["ln2"], params[pre + "ln2.g"])
        grads[pre + "ln2.g"] += dg2
        grads[pre + "ln2.b"] += db2
        dff = dr2
        dx_mid = dr2.copy()  # residual branch
        grads[pre + "ffn.w2"] += c["gu"].T @ dff
        grads[pre + "ffn.b2"] += dff.sum(axis=0)
        dgu = dff @ params[pre + "ffn.w2"].T
        du = dgu * gelu_grad(c["u"])
        grads[pre + "ffn.w1"] += c["x_mid"].T @ du
        grads[pre + "ffn.b1"] += du.sum(axis=0)
        dx_mid += du @ params[pre + "ffn.w1"].T
        dr1, dg1, db1 = _layer_norm_backward(dx_mid, c["ln1"], params[pre + "ln1.g"])
        grads[pre + "ln1.g"] += dg1
        grads[pre + "ln1.b"] += db1
        dattn = dr1
        da_in = dr1.copy()  # residual branch
        grads[pre + "attn.w_o"] += c["ctx_cat"].T @ dattn
        grads[pre + "attn.b_o"] += dattn.sum(axis=0)
        dctx_cat = dattn @ params[pre + "attn.w_o"].T
        dctx = dctx_cat.reshape(L, nh, dh).transpose(1, 0, 2)
        dprobs = dctx @ c["vh"].transpose(0, 2, 1)
        dvh = c["probs"].transpose(0, 2, 1) @ dctx
        probs = c["probs"]
        dscores = probs * (dprobs - np.sum(dprobs * probs, axis=-1, keepdims=True))
        dscores /= math.sqrt(dh)
        dqh = dscores @ c["kh"]
        dkh = dscores.transpose(0, 2, 1) @ c["qh"]
        dq = dqh.transpose(1, 0, 2).reshape(L, d)
        dk = dkh.transpose(1, 0, 2).reshape(L, d)
        dv = dvh.transpose(1, 0, 2).reshape(L, d)
        dqkv = np.concatenate([dq, dk, dv], axis=-1)
        grads[pre + "attn.w_qkv"] += c["a_in"].T @ dqkv
        grads[pre + "attn.b_qkv"] += dqkv.sum(axis=0)
        da_in += dqkv @ params[pre + "attn.w_qkv"].T
        dx = da_in

    np.add.at(grads["tok_emb"], ids, dx)
    grads["pos_emb"][:L] += dx
    return loss, grads


def read_tags(
    outputs: ModelOutputs, words: list[str], word_heads: tuple[int, ...]
) -> TaggedSentence:
    """Greedy readout: argmax node type per word head, argmax parent over
    word-head positions and ROOT. Ties break toward the lowest index; parents
    are reported as word indices, not subword positions."""
    candidates = [0] + list(word_heads)
    pos_to_word = {h: w + 1 for w, h in enumerate(word_heads)}
    pos_to_word[0] = 0
    tokens = []
    for word_i, head in enumerate(word_heads, start=1):
        row = head - 1
        node_type = NodeType(int(np.argmax(outputs.class_logits[row])))
        parent_scores = outputs.parent_logits[row][candidates]
        parent_pos = candidates[int(np.argmax(parent_scores))]
        tokens.append(TaggedToken(word_i, words[word_i - 1], node_type, pos_to_word[parent_pos]))
    return TaggedSentence(tuple(tokens))


def predict(
    params: Params, cfg: ModelConfig, tokenizer: Tokenizer, text: str
) -> TaggedSentence:
    seq = tokenizer.encode(text)
    words = canonical_words(text)
    if not words:
        return TaggedSentence(())
    return read_tags(forward(params, cfg, seq), words, seq.word_heads)
