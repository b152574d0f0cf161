"""Dependency-Transformer encoder.

Each layer blends scaled dot-product scores with per-head relation scores
through a learned gate before the softmax, then applies the usual
attention / feed-forward sublayers with post-norm residuals. The sentence
representation is the output at the ROOT position.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import asdict, dataclass, fields
from typing import Any

import numpy as np

from . import tensor as T
from .tensor import Tensor

VARIANTS = {
    "transformer": dict(use_relations=False, use_gate=False, use_level_embeddings=False),
    "dt_lr": dict(use_relations=True, use_gate=False, use_level_embeddings=False),
    "dt_rg": dict(use_relations=True, use_gate=True, use_level_embeddings=False),
    "dt_full": dict(use_relations=True, use_gate=True, use_level_embeddings=True),
}


@dataclass(frozen=True)
class ModelConfig:
    n_layers: int = 3
    n_heads: int = 6
    d_model: int = 300
    d_r: int = 30
    d_ff: int = 300
    max_level: int = 16
    max_position: int = 256
    tau: int = 2
    dropout: float = 0.0
    ln_eps: float = 1e-9
    use_level_embeddings: bool = True
    use_gate: bool = True
    use_relations: bool = True
    none_forces_zero_gate: bool = False
    gate_activation: str = "sigmoid"  # or "tanh"
    gate_head_sliced: bool = False
    init_std: float = 0.4

    def __post_init__(self):
        dims = (self.n_layers, self.n_heads, self.d_model, self.d_r, self.d_ff,
                self.max_level, self.max_position)
        if min(dims) < 1:
            raise ValueError(f"all model dimensions must be >= 1: {self}")
        if self.d_model % self.n_heads:
            raise ValueError(f"d_model={self.d_model} not divisible by n_heads={self.n_heads}")
        if self.tau < 2:
            raise ValueError(f"tau must be >= 2, got {self.tau}")
        if self.gate_activation not in ("sigmoid", "tanh"):
            raise ValueError(f"unknown gate activation {self.gate_activation!r}")
        if self.use_gate and not self.use_relations:
            raise ValueError("use_gate requires use_relations")

    @property
    def d_head(self) -> int:
        return self.d_model // self.n_heads

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "ModelConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(obj) - names
        if unknown:
            raise ValueError(f"unknown model config fields: {sorted(unknown)}")
        return cls(**obj)

    @classmethod
    def variant(cls, name: str, **overrides) -> "ModelConfig":
        """Config for one ablation row: transformer, dt_lr, dt_rg or dt_full."""
        try:
            flags = VARIANTS[name]
        except KeyError:
            raise ValueError(f"unknown variant {name!r}; expected one of {sorted(VARIANTS)}") from None
        return cls(**{**overrides, **flags})


def parameter_shapes(config: ModelConfig, n_words: int, n_relations: int) -> dict[str, tuple[int, ...]]:
    c = config
    d, h, dr = c.d_model, c.n_heads, c.d_r
    shapes: dict[str, tuple[int, ...]] = {
        "embed.word": (n_words, d),
        "embed.position": (c.max_position, d),
    }
    if c.use_level_embeddings:
        shapes["embed.level"] = (c.max_level, d)
    if c.use_relations:
        shapes["embed.relation"] = (n_relations, dr)
    for k in range(c.n_layers):
        p = f"layers.{k}."
        for w in ("q", "k", "v", "o"):
            shapes[p + f"attn.w{w}"] = (d, d)
            shapes[p + f"attn.b{w}"] = (d,)
        if c.use_relations:
            shapes[p + "rel.v_r"] = (h, dr)
        if c.use_gate:
            shapes[p + "gate.w_ge"] = (h, c.d_head if c.gate_head_sliced else d, dr)
            shapes[p + "gate.w_gr"] = (h, dr, dr)
            shapes[p + "gate.v_g"] = (h, dr)
        shapes[p + "ln1.gain"] = (d,)
        shapes[p + "ln1.bias"] = (d,)
        shapes[p + "ffn.w1"] = (d, c.d_ff)
        shapes[p + "ffn.b1"] = (c.d_ff,)
        shapes[p + "ffn.w2"] = (c.d_ff, d)
        shapes[p + "ffn.b2"] = (d,)
        shapes[p + "ln2.gain"] = (d,)
        shapes[p + "ln2.bias"] = (d,)
    return shapes


def name_rng(seed: int, name: str) -> np.random.Generator:
    """Generator keyed on (seed, parameter name) so adding a tensor never shifts another's init."""
    return np.random.default_rng([seed, zlib.crc32(name.encode())])


def init_array(name: str, shape: tuple[int, ...], seed: int, std: float = 0.1) -> np.ndarray:
    rng = name_rng(seed, name)
    leaf = name.rsplit(".", 1)[-1]
    if leaf.startswith("b"):
        return np.zeros(shape)
    if leaf == "gain":
        return np.ones(shape)
    if name.startswith("embed."):
        arr = rng.normal(0.0, std, size=shape)
        if name == "embed.word":
            arr[0] = 0.0  # PAD
        return arr
    fan_in, fan_out = shape[-2] if len(shape) > 1 else shape[-1], shape[-1]
    if leaf in ("v_r", "v_g"):
        fan_in, fan_out = shape[-1], 1
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


class ParameterSet(dict):
    """Ordered name -> Tensor map; every tensor requires grad."""

    @classmethod
    def from_shapes(cls, shapes: dict[str, tuple[int, ...]], seed: int, std: float = 0.1) -> "ParameterSet":
        return cls((n, Tensor(init_array(n, s, seed, std), requires_grad=True, name=n))
                   for n, s in shapes.items())

    @classmethod
    def from_arrays(cls, arrays: dict[str, np.ndarray]) -> "ParameterSet":
        return cls((n, Tensor(a, requires_grad=True, name=n)) for n, a in arrays.items())

    def count(self) -> int:
        return sum(t.size for t in self.values())

    def arrays(self) -> dict[str, np.ndarray]:
        return {n: t.data for n, t in self.items()}

    def zero_grad(self) -> None:
        for t in self.values():
            t.grad = None

    def checksum(self) -> str:
        import hashlib

        h = hashlib.sha256()
        for n, t in self.items():
            h.update(n.encode())
            h.update(np.ascontiguousarray(t.data, dtype="<f8").tobytes())
        return h.hexdigest()


def init_parameters(config: ModelConfig, n_words: int, n_relations: int, seed: int = 0) -> ParameterSet:
    return ParameterSet.from_shapes(parameter_shapes(config, n_words, n_relations), seed, config.init_std)


@dataclass
class Batch:
    """Padded sentences. Position 0 of every row is ROOT; ``mask`` is False on padding.

    In pair mode the first half of the rows are left sentences and the second
    half their right partners.
    """

    token_ids: np.ndarray   # B x L int
    level_ids: np.ndarray   # B x L int, clamped to max_level - 1
    rel_ids: np.ndarray     # B x L x L int
    mask: np.ndarray        # B x L bool
    lengths: np.ndarray     # B, node counts including ROOT
    targets: Any = None
    pair: bool = False

    @property
    def size(self) -> int:
        return self.token_ids.shape[0] // (2 if self.pair else 1)


# sublayers ------------------------------------------------------------------------


def embed_input(batch: Batch, params: ParameterSet, config: ModelConfig) -> Tensor:
    """H0 = word + position + level embeddings (level term dropped without level embeddings)."""
    _, length = batch.token_ids.shape
    if length > config.max_position:
        raise IndexError(f"sentence length {length} exceeds max_position={config.max_position}")
    h = T.gather(params["embed.word"], batch.token_ids)
    h = h + T.gather(params["embed.position"], np.arange(length))
    if config.use_level_embeddings:
        h = h + T.gather(params["embed.level"], batch.level_ids)
    return h


def _per_head_table(rel_table: Tensor, rel_ids: np.ndarray) -> Tensor:
    """Lookup of an (R x heads) score table into B x heads x L x L."""
    return T.gather(rel_table, rel_ids).transpose(0, 3, 1, 2)


def relation_scores(rel_ids: np.ndarray, rel_embed: Tensor, v_r: Tensor) -> Tensor:
    """Per-head score of each pair's relation vector against that head's V_r."""
    return _per_head_table(T.matmul(rel_embed, v_r.T), rel_ids)


def gate_scores(h: Tensor, rel_ids: np.ndarray, rel_embed: Tensor, w_ge: Tensor, w_gr: Tensor,
                v_g: Tensor, config: ModelConfig) -> Tensor:
    """g_ij from the attending word's state h_i and the relation vector r_ij.

    ``(h_i W_ge + r_ij W_gr) V_g`` is evaluated as ``h_i W_ge V_g + r_ij W_gr V_g``
    so the pair dimension only meets per-head scalars.
    """
    b, length, d = h.shape
    heads = config.n_heads
    if config.gate_head_sliced:
        hin = h.reshape(b, length, heads, config.d_head).transpose(0, 2, 1, 3)
    else:
        hin = h.reshape(b, 1, length, d)
    vg = v_g.reshape(heads, config.d_r, 1)
    word_part = T.matmul(T.matmul(hin, w_ge), vg)                      # B x H x L x 1
    rel_part = T.matmul(T.matmul(rel_embed.reshape(1, -1, config.d_r), w_gr), vg)  # H x R x 1
    rel_part = _per_head_table(rel_part.reshape(heads, -1).T, rel_ids)  # B x H x L x L
    pre = word_part + rel_part
    return T.tanh(pre) if config.gate_activation == "tanh" else T.sigmoid(pre)


def _split_heads(x: Tensor, heads: int) -> Tensor:
    b, length, d = x.shape
    return x.reshape(b, length, heads, d // heads).transpose(0, 2, 1, 3)


def fused_attention(h: Tensor, batch: Batch, params: ParameterSet, config: ModelConfig, layer: int,
                    force_gate: float | None = None, trace: dict | None = None,
                    rng: np.random.Generator | None = None, training: bool = False) -> Tensor:
    """One encoder layer: gated relation-aware attention followed by the FFN sublayer."""
    p = f"layers.{layer}."
    heads = config.n_heads
    b, length, d = h.shape
    q = _split_heads(T.matmul(h, params[p + "attn.wq"]) + params[p + "attn.bq"], heads)
    k = _split_heads(T.matmul(h, params[p + "attn.wk"]) + params[p + "attn.bk"], heads)
    v = _split_heads(T.matmul(h, params[p + "attn.wv"]) + params[p + "attn.bv"], heads)
    s_e = T.matmul(q, k.transpose(0, 1, 3, 2)) * (1.0 / math.sqrt(config.d_head))

    s_r = g = None
    if not config.use_relations:
        scores = s_e
    else:
        rel = params["embed.relation"]
        s_r = relation_scores(batch.rel_ids, rel, params[p + "rel.v_r"])
        if not config.use_gate:
            scores = s_e + s_r
        else:
            if force_gate is not None:
                g = Tensor(np.full(s_e.shape, float(force_gate)))
            else:
                g = gate_scores(h, batch.rel_ids, rel, params[p + "gate.w_ge"],
                                params[p + "gate.w_gr"], params[p + "gate.v_g"], config)
                if config.none_forces_zero_gate:
                    g = g * (batch.rel_ids != 0)[:, None, :, :].astype(np.float64)
            scores = (1.0 - g) * s_e + g * s_r

    attn = T.masked_softmax(scores, batch.mask[:, None, None, :])
    if trace is not None:
        trace.setdefault("self_scores", []).append(s_e.data.copy())
        trace.setdefault("relation_scores", []).append(None if s_r is None else s_r.data.copy())
        trace.setdefault("gate", []).append(None if g is None else g.data.copy())
        trace.setdefault("scores", []).append(scores.data.copy())
        trace.setdefault("attention", []).append(attn.data.copy())

    ctx = T.matmul(attn, v).transpose(0, 2, 1, 3).reshape(b, length, d)
    out = T.matmul(ctx, params[p + "attn.wo"]) + params[p + "attn.bo"]
    out = T.dropout(out, config.dropout, rng, training)
    h1 = T.layer_norm(h + out, params[p + "ln1.gain"], params[p + "ln1.bias"], config.ln_eps)
    ff = T.relu(T.matmul(h1, params[p + "ffn.w1"]) + params[p + "ffn.b1"])
    ff = T.matmul(ff, params[p + "ffn.w2"]) + params[p + "ffn.b2"]
    ff = T.dropout(ff, config.dropout, rng, training)
    return T.layer_norm(h1 + ff, params[p + "ln2.gain"], params[p + "ln2.bias"], config.ln_eps)


def encode(batch: Batch, params: ParameterSet, config: ModelConfig, force_gate: float | None = None,
           trace: dict | None = None, rng: np.random.Generator | None = None,
           training: bool = False) -> tuple[Tensor, Tensor]:
    """Run every layer; returns (all outputs B x L x d, ROOT outputs B x d)."""
    h = embed_input(batch, params, config)
    if trace is not None:
        trace["h0"] = h.data.copy()
    for layer in range(config.n_layers):
        h = fused_attention(h, batch, params, config, layer, force_gate, trace, rng, training)
    return h, h[:, 0]
