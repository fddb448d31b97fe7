"""Inference-only BERT-style encoder in numpy.

Tensor names in a weight archive (projection matrices are stored
``(in_features, out_features)`` so that ``y = x @ W + b``; checkpoints that
store ``(out, in)`` must be transposed by the converter)::

    embeddings.word            (V, D)
    embeddings.position        (P, D)
    embeddings.segment         (T, D)
    embeddings.ln.gamma / .beta                 (D,)
    layers.{i}.attn.{q,k,v,out}.weight          (D, D)
    layers.{i}.attn.{q,k,v,out}.bias            (D,)
    layers.{i}.attn.ln.gamma / .beta            (D,)
    layers.{i}.ffn.in.weight   (D, F)   layers.{i}.ffn.in.bias   (F,)
    layers.{i}.ffn.out.weight  (F, D)   layers.{i}.ffn.out.bias  (D,)
    layers.{i}.ffn.ln.gamma / .beta             (D,)
"""

from __future__ import annotations

import json
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.special import erf

from .archive import ArchiveError, load_archive, read_manifest, save_archive
from .tokenization import EncodedSequence

MASK_VALUE = -1e9


@dataclass(frozen=True)
class EncoderConfig:
    num_layers: int = 12
    hidden: int = 768
    num_heads: int = 12
    ffn_dim: int = 3072
    max_positions: int = 512
    vocab_size: int = 30522
    type_vocab_size: int = 2
    layernorm_eps: float = 1e-12

    def __post_init__(self):
        if self.hidden % self.num_heads:
            raise ValueError(f"hidden={self.hidden} not divisible by num_heads={self.num_heads}")
        if min(self.hidden, self.num_heads, self.ffn_dim, self.max_positions,
               self.vocab_size, self.type_vocab_size) < 1 or self.num_layers < 0:
            raise ValueError("encoder dimensions must be positive")

    @property
    def head_dim(self) -> int:
        return self.hidden // self.num_heads

    def save(self, path):
        Path(path).write_text(json.dumps(asdict(self), indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> EncoderConfig:
        return cls(**json.loads(Path(path).read_text(encoding="utf-8")))

    @classmethod
    def infer(cls, archive_path, num_heads: int = 12, layernorm_eps: float = 1e-12) -> EncoderConfig:
        """Read geometry off the archive's tensor shapes; head count is not recoverable."""
        manifest = read_manifest(archive_path)
        try:
            vocab_size, hidden = manifest["embeddings.word"]["shape"]
            max_positions = manifest["embeddings.position"]["shape"][0]
            type_vocab = manifest["embeddings.segment"]["shape"][0]
        except KeyError as exc:
            raise ArchiveError(f"{archive_path}: missing tensor {exc}") from None
        layer_ids = {int(m.group(1)) for name in manifest
                     if (m := re.match(r"layers\.(\d+)\.", name))}
        num_layers = max(layer_ids) + 1 if layer_ids else 0
        ffn_dim = manifest["layers.0.ffn.in.weight"]["shape"][1] if num_layers else 4 * hidden
        return cls(num_layers, hidden, num_heads, ffn_dim, max_positions, vocab_size,
                   type_vocab, layernorm_eps)


def tensor_shapes(config: EncoderConfig) -> dict[str, tuple[int, ...]]:
    d, f = config.hidden, config.ffn_dim
    shapes = {
        "embeddings.word": (config.vocab_size, d),
        "embeddings.position": (config.max_positions, d),
        "embeddings.segment": (config.type_vocab_size, d),
        "embeddings.ln.gamma": (d,),
        "embeddings.ln.beta": (d,),
    }
    for i in range(config.num_layers):
        p = f"layers.{i}."
        for proj in ("q", "k", "v", "out"):
            shapes[p + f"attn.{proj}.weight"] = (d, d)
            shapes[p + f"attn.{proj}.bias"] = (d,)
        shapes[p + "attn.ln.gamma"] = (d,)
        shapes[p + "attn.ln.beta"] = (d,)
        shapes[p + "ffn.in.weight"] = (d, f)
        shapes[p + "ffn.in.bias"] = (f,)
        shapes[p + "ffn.out.weight"] = (f, d)
        shapes[p + "ffn.out.bias"] = (d,)
        shapes[p + "ffn.ln.gamma"] = (d,)
        shapes[p + "ffn.ln.beta"] = (d,)
    return shapes


@dataclass(frozen=True)
class LayerWeights:
    wq: np.ndarray
    bq: np.ndarray
    wk: np.ndarray
    bk: np.ndarray
    wv: np.ndarray
    bv: np.ndarray
    wo: np.ndarray
    bo: np.ndarray
    attn_gamma: np.ndarray
    attn_beta: np.ndarray
    w_in: np.ndarray
    b_in: np.ndarray
    w_out: np.ndarray
    b_out: np.ndarray
    ffn_gamma: np.ndarray
    ffn_beta: np.ndarray


@dataclass(frozen=True)
class EncoderWeights:
    config: EncoderConfig
    word: np.ndarray
    position: np.ndarray
    segment: np.ndarray
    emb_gamma: np.ndarray
    emb_beta: np.ndarray
    layers: tuple[LayerWeights, ...]

    @classmethod
    def from_tensors(cls, tensors: dict[str, np.ndarray], config: EncoderConfig,
                     dtype=np.float64) -> EncoderWeights:
        for name, shape in tensor_shapes(config).items():
            if name not in tensors:
                raise ArchiveError(f"missing tensor {name!r}")
            arr = tensors[name]
            if tuple(arr.shape) != shape:
                raise ArchiveError(f"tensor {name!r} has shape {tuple(arr.shape)}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise ArchiveError(f"tensor {name!r} contains non-finite values")

        def get(name):
            return np.asarray(tensors[name], dtype=dtype)

        layers = []
        for i in range(config.num_layers):
            p = f"layers.{i}."
            layers.append(LayerWeights(
                get(p + "attn.q.weight"), get(p + "attn.q.bias"),
                get(p + "attn.k.weight"), get(p + "attn.k.bias"),
                get(p + "attn.v.weight"), get(p + "attn.v.bias"),
                get(p + "attn.out.weight"), get(p + "attn.out.bias"),
                get(p + "attn.ln.gamma"), get(p + "attn.ln.beta"),
                get(p + "ffn.in.weight"), get(p + "ffn.in.bias"),
                get(p + "ffn.out.weight"), get(p + "ffn.out.bias"),
                get(p + "ffn.ln.gamma"), get(p + "ffn.ln.beta"),
            ))
        return cls(config, get("embeddings.word"), get("embeddings.position"),
                   get("embeddings.segment"), get("embeddings.ln.gamma"),
                   get("embeddings.ln.beta"), tuple(layers))

    def to_tensors(self) -> dict[str, np.ndarray]:
        t = {
            "embeddings.word": self.word,
            "embeddings.position": self.position,
            "embeddings.segment": self.segment,
            "embeddings.ln.gamma": self.emb_gamma,
            "embeddings.ln.beta": self.emb_beta,
        }
        for i, lw in enumerate(self.layers):
            p = f"layers.{i}."
            t.update({
                p + "attn.q.weight": lw.wq, p + "attn.q.bias": lw.bq,
                p + "attn.k.weight": lw.wk, p + "attn.k.bias": lw.bk,
                p + "attn.v.weight": lw.wv, p + "attn.v.bias": lw.bv,
                p + "attn.out.weight": lw.wo, p + "attn.out.bias": lw.bo,
                p + "attn.ln.gamma": lw.attn_gamma, p + "attn.ln.beta": lw.attn_beta,
                p + "ffn.in.weight": lw.w_in, p + "ffn.in.bias": lw.b_in,
                p + "ffn.out.weight": lw.w_out, p + "ffn.out.bias": lw.b_out,
                p + "ffn.ln.gamma": lw.ffn_gamma, p + "ffn.ln.beta": lw.ffn_beta,
            })
        return t


def load_weights(path, config: EncoderConfig, dtype=np.float64) -> EncoderWeights:
    tensors = load_archive(path, list(tensor_shapes(config)))
    return EncoderWeights.from_tensors(tensors, config, dtype=dtype)


def save_weights(path, weights: EncoderWeights):
    save_archive(path, weights.to_tensors())


def random_weights(config: EncoderConfig, seed: int = 0, scale: float = 0.02) -> EncoderWeights:
    """Gaussian weights, unit LayerNorm gains, zero biases; float32-representable."""
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in tensor_shapes(config).items():
        if name.endswith(".gamma"):
            tensors[name] = np.ones(shape)
        elif name.endswith(".bias") or name.endswith(".beta"):
            tensors[name] = np.zeros(shape)
        else:
            tensors[name] = rng.normal(0.0, scale, size=shape)
    # round through float32 so a saved archive reloads bit-identically
    tensors = {k: v.astype(np.float32) for k, v in tensors.items()}
    return EncoderWeights.from_tensors(tensors, config)


@dataclass(frozen=True)
class ContextualMatrix:
    """Encoder output rows (L x D) with the attention mask they were computed under."""

    rows: np.ndarray
    mask: np.ndarray
    tokens: tuple[str, ...] = ()


def layer_norm(x, gamma, beta, eps):
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * gamma + beta


def gelu(x):
    return 0.5 * x * (1.0 + erf(x / np.sqrt(2.0)))


def softmax(x, axis=-1):
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def embed(encoded: EncodedSequence, weights: EncoderWeights) -> ContextualMatrix:
    cfg = weights.config
    ids = np.asarray(encoded.input_ids, dtype=np.int64)
    seg = np.asarray(encoded.segment_ids, dtype=np.int64)
    n = len(ids)
    if n > cfg.max_positions:
        raise ValueError(f"sequence length {n} exceeds max_positions {cfg.max_positions}")
    if n and (ids.min() < 0 or ids.max() >= cfg.vocab_size):
        raise ValueError(f"token id out of range [0, {cfg.vocab_size})")
    if n and (seg.min() < 0 or seg.max() >= cfg.type_vocab_size):
        raise ValueError(f"segment id out of range [0, {cfg.type_vocab_size})")
    x = weights.word[ids] + weights.position[:n] + weights.segment[seg]
    x = layer_norm(x, weights.emb_gamma, weights.emb_beta, cfg.layernorm_eps)
    return ContextualMatrix(x, np.asarray(encoded.attention_mask, dtype=np.int8))


def attention_probs(x, layer: LayerWeights, mask, num_heads: int) -> np.ndarray:
    """Softmax attention weights, shape (heads, L_query, L_key)."""
    n, d = x.shape
    dh = d // num_heads
    q = (x @ layer.wq + layer.bq).reshape(n, num_heads, dh).transpose(1, 0, 2)
    k = (x @ layer.wk + layer.bk).reshape(n, num_heads, dh).transpose(1, 0, 2)
    scores = q @ k.transpose(0, 2, 1) / np.sqrt(dh)
    scores = scores + np.where(np.asarray(mask, dtype=bool), 0.0, MASK_VALUE)[None, None, :]
    return softmax(scores, axis=-1)


def attention_layer(x: ContextualMatrix, layer: LayerWeights, config: EncoderConfig) -> ContextualMatrix:
    """One post-LN transformer block: self-attention then a GELU feed-forward."""
    h = x.rows
    n, d = h.shape
    heads = config.num_heads
    probs = attention_probs(h, layer, x.mask, heads)
    v = (h @ layer.wv + layer.bv).reshape(n, heads, d // heads).transpose(1, 0, 2)
    ctx = (probs @ v).transpose(1, 0, 2).reshape(n, d)
    h = layer_norm(h + ctx @ layer.wo + layer.bo, layer.attn_gamma, layer.attn_beta,
                   config.layernorm_eps)
    ff = gelu(h @ layer.w_in + layer.b_in) @ layer.w_out + layer.b_out
    h = layer_norm(h + ff, layer.ffn_gamma, layer.ffn_beta, config.layernorm_eps)
    return ContextualMatrix(h, x.mask, x.tokens)


def forward(encoded: EncodedSequence, weights: EncoderWeights) -> ContextualMatrix:
    x = embed(encoded, weights)
    for layer in weights.layers:
        x = attention_layer(x, layer, weights.config)
    return x


def forward_many(sequences, weights: EncoderWeights, workers: int = 1) -> list[ContextualMatrix]:
    """``forward`` over many sequences; output order matches input order."""
    if workers <= 1:
        return [forward(s, weights) for s in sequences]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda s: forward(s, weights), sequences))
