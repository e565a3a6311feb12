"""Pre-norm Transformer encoder over a flat state cut into fixed-width tokens."""

from __future__ import annotations

import math

import numpy as np

from .base import QNet

LN_EPS = 1e-5


def _layernorm(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = (x - mu) * inv
    return xhat * g + b, (xhat, inv)


def _layernorm_backward(dy, g, cache):
    xhat, inv = cache
    dxhat = dy * g
    dx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
    red = tuple(range(dy.ndim - 1))
    return dx, (dy * xhat).sum(axis=red), dy.sum(axis=red)


def _softmax(s):
    s = s - s.max(axis=-1, keepdims=True)
    e = np.exp(s)
    return e / e.sum(axis=-1, keepdims=True)


class TransformerQNet(QNet):
    kind = "transformer"

    def __init__(self, input_dim: int, n_actions: int, token_dim: int = 16, d_model: int = 64,
                 n_heads: int = 4, d_ff: int = 128, n_layers: int = 2, seed: int = 0,
                 dtype=np.float32):
        super().__init__(input_dim, n_actions, dtype)
        if d_model % n_heads:
            raise ValueError("d_model must be divisible by n_heads")
        self.token_dim = token_dim
        self.d_model = d_model
        self.n_heads = n_heads
        self.d_ff = d_ff
        self.n_layers = n_layers
        self.n_tokens = math.ceil(self.input_dim / token_dim)
        rng = np.random.default_rng(seed)

        def w(fan_in, *shape):
            return (rng.standard_normal(shape) / np.sqrt(fan_in)).astype(self.dtype)

        def zeros(*shape):
            return np.zeros(shape, dtype=self.dtype)

        def ones(*shape):
            return np.ones(shape, dtype=self.dtype)

        p = self.params
        p["W_in"] = w(token_dim, token_dim, d_model)
        p["b_in"] = zeros(d_model)
        p["pos"] = (rng.standard_normal((self.n_tokens, d_model)) * 0.1).astype(self.dtype)
        for l in range(n_layers):
            p[f"l{l}.ln1_g"], p[f"l{l}.ln1_b"] = ones(d_model), zeros(d_model)
            for name in ("q", "k", "v", "o"):
                p[f"l{l}.W{name}"] = w(d_model, d_model, d_model)
                p[f"l{l}.b{name}"] = zeros(d_model)
            p[f"l{l}.ln2_g"], p[f"l{l}.ln2_b"] = ones(d_model), zeros(d_model)
            p[f"l{l}.W1"] = w(d_model, d_model, d_ff) * np.sqrt(2.0).astype(self.dtype)
            p[f"l{l}.b1"] = zeros(d_ff)
            p[f"l{l}.W2"] = w(d_ff, d_ff, d_model) * np.asarray(0.5, self.dtype)
            p[f"l{l}.b2"] = zeros(d_model)
        p["lnf_g"], p["lnf_b"] = ones(d_model), zeros(d_model)
        p["W_head"] = w(d_model, d_model, n_actions)
        p["b_head"] = zeros(n_actions)

    def descriptor(self) -> dict:
        return {"kind": self.kind, "input_dim": self.input_dim, "n_actions": self.n_actions,
                "token_dim": self.token_dim, "d_model": self.d_model, "n_heads": self.n_heads,
                "d_ff": self.d_ff, "n_layers": self.n_layers}

    def tokens(self, x):
        n = x.shape[0]
        pad = self.n_tokens * self.token_dim - self.input_dim
        if pad:
            x = np.concatenate([x, np.zeros((n, pad), dtype=x.dtype)], axis=1)
        return x.reshape(n, self.n_tokens, self.token_dim)

    def _split(self, t):
        n, T, _ = t.shape
        return t.reshape(n, T, self.n_heads, -1).transpose(0, 2, 1, 3)

    def _merge(self, t):
        n, H, T, dh = t.shape
        return t.transpose(0, 2, 1, 3).reshape(n, T, H * dh)

    def _forward(self, x):
        p = self.params
        tok = self.tokens(x)
        h = tok @ p["W_in"] + p["b_in"] + p["pos"]
        cache = {"tok": tok, "layers": []}
        dh = self.d_model // self.n_heads
        scale = 1.0 / math.sqrt(dh)
        for l in range(self.n_layers):
            c = {}
            a_in, c["ln1"] = _layernorm(h, p[f"l{l}.ln1_g"], p[f"l{l}.ln1_b"])
            q = self._split(a_in @ p[f"l{l}.Wq"] + p[f"l{l}.bq"])
            k = self._split(a_in @ p[f"l{l}.Wk"] + p[f"l{l}.bk"])
            v = self._split(a_in @ p[f"l{l}.Wv"] + p[f"l{l}.bv"])
            attn = _softmax((q @ k.transpose(0, 1, 3, 2)) * scale)
            ctx = self._merge(attn @ v)
            h = h + ctx @ p[f"l{l}.Wo"] + p[f"l{l}.bo"]
            f_in, c["ln2"] = _layernorm(h, p[f"l{l}.ln2_g"], p[f"l{l}.ln2_b"])
            z1 = f_in @ p[f"l{l}.W1"] + p[f"l{l}.b1"]
            r1 = np.maximum(z1, 0)
            h = h + r1 @ p[f"l{l}.W2"] + p[f"l{l}.b2"]
            c.update(a_in=a_in, q=q, k=k, v=v, attn=attn, ctx=ctx, f_in=f_in, r1=r1)
            cache["layers"].append(c)
        hf, cache["lnf"] = _layernorm(h, p["lnf_g"], p["lnf_b"])
        pooled = hf.mean(axis=1)
        cache["pooled"] = pooled
        return pooled @ p["W_head"] + p["b_head"], cache

    def _relu_inputs(self, cache):
        return [c["r1"] for c in cache["layers"]]

    def attention_maps(self, states) -> list[np.ndarray]:
        x, _ = self._as_batch(states)
        _, cache = self._forward(x)
        return [c["attn"] for c in cache["layers"]]

    def _backward(self, dq, cache):
        p = self.params
        g = {}
        g["W_head"] = cache["pooled"].T @ dq
        g["b_head"] = dq.sum(axis=0)
        dpooled = dq @ p["W_head"].T
        T = self.n_tokens
        dhf = np.repeat(dpooled[:, None, :], T, axis=1) / T
        dh, g["lnf_g"], g["lnf_b"] = _layernorm_backward(dhf, p["lnf_g"], cache["lnf"])
        scale = 1.0 / math.sqrt(self.d_model // self.n_heads)
        for l in reversed(range(self.n_layers)):
            c = cache["layers"][l]
            # feed-forward branch
            g[f"l{l}.W2"] = np.einsum("ntf,ntd->fd", c["r1"], dh)
            g[f"l{l}.b2"] = dh.sum(axis=(0, 1))
            dz1 = (dh @ p[f"l{l}.W2"].T) * (c["r1"] > 0)
            g[f"l{l}.W1"] = np.einsum("ntd,ntf->df", c["f_in"], dz1)
            g[f"l{l}.b1"] = dz1.sum(axis=(0, 1))
            df_in = dz1 @ p[f"l{l}.W1"].T
            dx, g[f"l{l}.ln2_g"], g[f"l{l}.ln2_b"] = _layernorm_backward(df_in, p[f"l{l}.ln2_g"], c["ln2"])
            dh = dh + dx
            # attention branch
            g[f"l{l}.Wo"] = np.einsum("nte,ntd->ed", c["ctx"], dh)
            g[f"l{l}.bo"] = dh.sum(axis=(0, 1))
            dctx = self._split(dh @ p[f"l{l}.Wo"].T)
            attn, q, k, v = c["attn"], c["q"], c["k"], c["v"]
            dattn = dctx @ v.transpose(0, 1, 3, 2)
            dv = attn.transpose(0, 1, 3, 2) @ dctx
            ds = attn * (dattn - (dattn * attn).sum(axis=-1, keepdims=True)) * scale
            dq_h = ds @ k
            dk = ds.transpose(0, 1, 3, 2) @ q
            da_in = np.zeros_like(c["a_in"])
            for name, dproj in (("q", dq_h), ("k", dk), ("v", dv)):
                dm = self._merge(dproj)
                g[f"l{l}.W{name}"] = np.einsum("nte,ntd->ed", c["a_in"], dm)
                g[f"l{l}.b{name}"] = dm.sum(axis=(0, 1))
                da_in += dm @ p[f"l{l}.W{name}"].T
            dx, g[f"l{l}.ln1_g"], g[f"l{l}.ln1_b"] = _layernorm_backward(da_in, p[f"l{l}.ln1_g"], c["ln1"])
            dh = dh + dx
        g["pos"] = dh.sum(axis=0)
        g["W_in"] = np.einsum("ntk,ntd->kd", cache["tok"], dh)
        g["b_in"] = dh.sum(axis=(0, 1))
        return g
