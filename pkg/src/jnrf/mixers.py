"""Pluggable token-mixing layers sharing one residual + LayerNorm skeleton.

fnet_block:   h = LN(x + fourier_mix(x));  out = LN(h + FFN(h))
mlp_block:    h = LN(x);                   out = LN(h + FFN(h))
windowed_attention_block: fourier_mix replaced by scaled dot-product
self-attention applied independently per non-overlapping window; no token
attends across a window boundary, and window = n is exactly full attention.

The Fourier sublayer contributes no trainable parameters; each block trains
only its two LayerNorms and the FFN (plus q/k/v/o projections for the
attention kind).
"""

from __future__ import annotations

from dataclasses import dataclass

from . import tensor as T
from .params import Params, add_layer_norm, add_linear, linear_init
from .tensor import ShapeError, Tensor


@dataclass
class MixerConfig:
    kind: str = "fnet"            # fnet | mlp | windowed_attention
    n_blocks: int = 2
    d: int = 64
    ffn_hidden: int = 128
    window: int = 512             # windowed_attention only
    n_attn_heads: int = 1         # windowed_attention only


def init_mixer_params(params: Params, cfg: MixerConfig, rng, prefix: str = "lm"):
    if cfg.kind == "windowed_attention" and cfg.d % cfg.n_attn_heads:
        raise ShapeError(f"d={cfg.d} not divisible by n_attn_heads={cfg.n_attn_heads}")
    for b in range(cfg.n_blocks):
        p = f"{prefix}.{b}"
        add_layer_norm(params, f"{p}.ln1", cfg.d)
        add_linear(params, rng, f"{p}.ffn.1", cfg.d, cfg.ffn_hidden)
        add_linear(params, rng, f"{p}.ffn.2", cfg.ffn_hidden, cfg.d)
        add_layer_norm(params, f"{p}.ln2", cfg.d)
        if cfg.kind == "windowed_attention":
            for name in ("wq", "wk", "wv", "wo"):
                params.add(f"{p}.{name}", linear_init(rng, cfg.d, cfg.d))


def _ffn(h: Tensor, params: Params, p: str) -> Tensor:
    mid = T.gelu(T.add(T.matmul(h, params[f"{p}.ffn.1.w"]), params[f"{p}.ffn.1.b"]))
    return T.add(T.matmul(mid, params[f"{p}.ffn.2.w"]), params[f"{p}.ffn.2.b"])


def _ffn_sublayer(h: Tensor, params: Params, p: str) -> Tensor:
    return T.layer_norm_rows(
        T.add(h, _ffn(h, params, p)), params[f"{p}.ln2.g"], params[f"{p}.ln2.b"]
    )


def fnet_block(x: Tensor, params: Params, prefix: str) -> Tensor:
    h = T.layer_norm_rows(
        T.add(x, T.fourier_mix(x)), params[f"{prefix}.ln1.g"], params[f"{prefix}.ln1.b"]
    )
    return _ffn_sublayer(h, params, prefix)


def mlp_mixer_block(x: Tensor, params: Params, prefix: str) -> Tensor:
    h = T.layer_norm_rows(x, params[f"{prefix}.ln1.g"], params[f"{prefix}.ln1.b"])
    return _ffn_sublayer(h, params, prefix)


def _attention_segment(xs: Tensor, params: Params, p: str, n_heads: int) -> Tensor:
    d = xs.cols
    dk = d // n_heads
    q = T.matmul(xs, params[f"{p}.wq"])
    k = T.matmul(xs, params[f"{p}.wk"])
    v = T.matmul(xs, params[f"{p}.wv"])
    heads = []
    for h in range(n_heads):
        j0, j1 = h * dk, (h + 1) * dk
        qh = T.scale(T.slice_cols(q, j0, j1), dk ** -0.5)
        att = T.softmax_rows(T.matmul(qh, T.transpose(T.slice_cols(k, j0, j1))))
        heads.append(T.matmul(att, T.slice_cols(v, j0, j1)))
    merged = heads[0] if n_heads == 1 else T.concat_cols(heads)
    return T.matmul(merged, params[f"{p}.wo"])


def windowed_attention_block(
    x: Tensor, params: Params, prefix: str, window: int, n_attn_heads: int = 1
) -> Tensor:
    n = x.rows
    parts = []
    for s0 in range(0, n, window):
        xs = T.slice_rows(x, s0, min(s0 + window, n))
        parts.append(_attention_segment(xs, params, prefix, n_attn_heads))
    mixed = parts[0] if len(parts) == 1 else T.concat_rows(parts)
    h = T.layer_norm_rows(
        T.add(x, mixed), params[f"{prefix}.ln1.g"], params[f"{prefix}.ln1.b"]
    )
    return _ffn_sublayer(h, params, prefix)


def shared_lm(x: Tensor, cfg: MixerConfig, params: Params, prefix: str = "lm") -> Tensor:
    """One weight set producing the single contextualized matrix consumed by
    both the entity and the relation heads."""
    for b in range(cfg.n_blocks):
        p = f"{prefix}.{b}"
        if cfg.kind == "fnet":
            x = fnet_block(x, params, p)
        elif cfg.kind == "mlp":
            x = mlp_mixer_block(x, params, p)
        elif cfg.kind == "windowed_attention":
            x = windowed_attention_block(x, params, p, cfg.window, cfg.n_attn_heads)
        else:
            raise ShapeError(f"unknown mixer kind {cfg.kind!r}")
    return x
