"""A one-block transformer encoder classifier in numpy with exact gradients.

Architecture (post-norm, single head, no positional encoding)::

    X   = E[ids]                      (or an explicit embedding matrix)
    R1  = X + softmax(X Wq (X Wk)^T / sqrt(d), masked) (X Wv) Wo
    H1  = LayerNorm1(R1)
    R2  = H1 + gelu(H1 W1 + b1) W2 + b2
    H2  = LayerNorm2(R2)
    logits = meanpool_mask(H2) Wc + bc

Everything is float64. The forward pass accepts an embedding matrix directly
so integrated gradients can interpolate in embedding space.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np
from scipy.special import erf

LN_EPS = 1e-5
_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    d_model: int = 64
    d_hidden: int = 128
    n_labels: int = 4


@dataclass
class ModelParams:
    embedding: np.ndarray
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    ln1_g: np.ndarray
    ln1_b: np.ndarray
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    ln2_g: np.ndarray
    ln2_b: np.ndarray
    wc: np.ndarray
    bc: np.ndarray

    @classmethod
    def names(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def items(self):
        for name in self.names():
            yield name, getattr(self, name)

    def copy(self) -> "ModelParams":
        return ModelParams(**{k: v.copy() for k, v in self.items()})

    def zeros_like(self) -> "ModelParams":
        return ModelParams(**{k: np.zeros_like(v) for k, v in self.items()})

    @property
    def config(self) -> ModelConfig:
        v, d = self.embedding.shape
        return ModelConfig(v, d, self.w1.shape[1], self.wc.shape[1])

    @classmethod
    def init(cls, config: ModelConfig, seed: int) -> "ModelParams":
        """Weights and embeddings ~ N(0, 0.02); biases 0; norm gains 1."""
        rng = np.random.default_rng(seed)
        v, d, h, n = config.vocab_size, config.d_model, config.d_hidden, config.n_labels

        def normal(*shape):
            return rng.normal(0.0, 0.02, size=shape)

        return cls(
            embedding=normal(v, d),
            wq=normal(d, d),
            wk=normal(d, d),
            wv=normal(d, d),
            wo=normal(d, d),
            ln1_g=np.ones(d),
            ln1_b=np.zeros(d),
            w1=normal(d, h),
            b1=np.zeros(h),
            w2=normal(h, d),
            b2=np.zeros(d),
            ln2_g=np.ones(d),
            ln2_b=np.zeros(d),
            wc=normal(d, n),
            bc=np.zeros(n),
        )

    def check_finite(self) -> None:
        for name, arr in self.items():
            if not np.all(np.isfinite(arr)):
                raise FloatingPointError(f"non-finite values in parameter block {name!r}")


# ---------------------------------------------------------------------------
# Layers
# ---------------------------------------------------------------------------


def _layer_norm(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + LN_EPS)
    xhat = xc * inv
    return xhat * g + b, (xhat, inv)


def _layer_norm_backward(dy, g, cache):
    xhat, inv = cache
    dxhat = dy * g
    dx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True) - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
    sum_axes = tuple(range(dy.ndim - 1))
    return dx, (dy * xhat).sum(axis=sum_axes), dy.sum(axis=sum_axes)


def _gelu(x):
    return 0.5 * x * (1.0 + erf(x / _SQRT2))


def _gelu_grad(x):
    return 0.5 * (1.0 + erf(x / _SQRT2)) + x * _INV_SQRT_2PI * np.exp(-0.5 * x * x)


# ---------------------------------------------------------------------------
# Forward / backward
# ---------------------------------------------------------------------------


def embed(params: ModelParams, ids) -> np.ndarray:
    ids = np.asarray(ids)
    v = params.embedding.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= v):
        raise IndexError(f"token id out of range for an embedding table of {v} rows")
    return params.embedding[ids]


def forward(params: ModelParams, ids=None, embeddings=None, mask=None):
    """Logits for a batch.

    Give exactly one of `ids` (shape ``(B, T)`` or ``(T,)``) or `embeddings`
    (``(B, T, d)`` or ``(T, d)``). `mask` marks real tokens with 1 and padding
    with 0; it defaults to all ones. Returns ``(logits, cache)`` where the
    cache feeds :func:`backward`. Unbatched inputs give unbatched logits.
    """
    if (ids is None) == (embeddings is None):
        raise ValueError("pass exactly one of ids or embeddings")
    if ids is not None:
        ids = np.asarray(ids)
        x = embed(params, ids)
    else:
        x = np.asarray(embeddings, dtype=np.float64)
    single = x.ndim == 2
    if single:
        x = x[None]
        ids = None if ids is None else ids[None]
    b, t, d = x.shape
    if t < 1:
        raise ValueError("need at least one token")
    mask = np.ones((b, t)) if mask is None else np.asarray(mask, dtype=np.float64).reshape(b, t)
    if np.any(mask.sum(axis=1) == 0):
        raise ValueError("every sequence needs at least one unmasked token")

    q = x @ params.wq
    k = x @ params.wk
    v = x @ params.wv
    scale = 1.0 / np.sqrt(d)
    s = np.einsum("bid,bjd->bij", q, k) * scale
    keymask = mask[:, None, :] > 0
    s = np.where(keymask, s, -np.inf)
    s = s - s.max(axis=-1, keepdims=True)
    p = np.exp(s)
    p /= p.sum(axis=-1, keepdims=True)
    a = p @ v
    r1 = x + a @ params.wo
    h1, ln1_cache = _layer_norm(r1, params.ln1_g, params.ln1_b)
    z = h1 @ params.w1 + params.b1
    f = _gelu(z)
    r2 = h1 + f @ params.w2 + params.b2
    h2, ln2_cache = _layer_norm(r2, params.ln2_g, params.ln2_b)
    denom = mask.sum(axis=1, keepdims=True)
    pooled = (h2 * mask[:, :, None]).sum(axis=1) / denom
    logits = pooled @ params.wc + params.bc

    cache = dict(
        ids=ids, x=x, mask=mask, q=q, k=k, v=v, p=p, a=a, h1=h1, z=z, f=f,
        ln1=ln1_cache, ln2=ln2_cache, pooled=pooled, denom=denom, scale=scale, single=single,
    )
    return (logits[0] if single else logits), cache


def backward(params: ModelParams, cache: dict, dlogits) -> tuple[ModelParams, np.ndarray]:
    """Gradients of ``sum(dlogits * logits)`` w.r.t. all parameters and inputs.

    Returns ``(param_grads, d_embeddings)``; ``d_embeddings`` has the shape of
    the (possibly unbatched) input embedding matrix. The embedding-table
    gradient is only filled when the forward pass was given ids.
    """
    dlogits = np.asarray(dlogits, dtype=np.float64)
    if cache["single"]:
        dlogits = dlogits[None]
    g = params.zeros_like()
    mask, x = cache["mask"], cache["x"]

    g.wc = cache["pooled"].T @ dlogits
    g.bc = dlogits.sum(axis=0)
    dpooled = dlogits @ params.wc.T
    dh2 = (mask / cache["denom"])[:, :, None] * dpooled[:, None, :]

    dr2, g.ln2_g, g.ln2_b = _layer_norm_backward(dh2, params.ln2_g, cache["ln2"])
    f, z, h1 = cache["f"], cache["z"], cache["h1"]
    g.w2 = np.einsum("bth,btd->hd", f, dr2)
    g.b2 = dr2.sum(axis=(0, 1))
    dz = (dr2 @ params.w2.T) * _gelu_grad(z)
    g.w1 = np.einsum("btd,bth->dh", h1, dz)
    g.b1 = dz.sum(axis=(0, 1))
    dh1 = dr2 + dz @ params.w1.T

    dr1, g.ln1_g, g.ln1_b = _layer_norm_backward(dh1, params.ln1_g, cache["ln1"])
    a, p, q, k, v = cache["a"], cache["p"], cache["q"], cache["k"], cache["v"]
    g.wo = np.einsum("btd,bte->de", a, dr1)
    da = dr1 @ params.wo.T
    dp = da @ v.transpose(0, 2, 1)
    dv = p.transpose(0, 2, 1) @ da
    ds = p * (dp - (dp * p).sum(axis=-1, keepdims=True)) * cache["scale"]
    dq = ds @ k
    dk = ds.transpose(0, 2, 1) @ q
    g.wq = np.einsum("btd,bte->de", x, dq)
    g.wk = np.einsum("btd,bte->de", x, dk)
    g.wv = np.einsum("btd,bte->de", x, dv)
    dx = dr1 + dq @ params.wq.T + dk @ params.wk.T + dv @ params.wv.T

    if cache["ids"] is not None:
        np.add.at(g.embedding, cache["ids"].reshape(-1), dx.reshape(-1, dx.shape[-1]))
    return g, (dx[0] if cache["single"] else dx)


def cross_entropy(logits, labels) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and its gradient w.r.t. the logits."""
    logits = np.atleast_2d(logits)
    labels = np.asarray(labels)
    n_labels = logits.shape[1]
    if labels.size and (labels.min() < 0 or labels.max() >= n_labels):
        raise ValueError(f"labels must lie in [0, {n_labels})")
    shifted = logits - logits.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    n = logits.shape[0]
    loss = -logp[np.arange(n), labels].mean()
    dlogits = np.exp(logp)
    dlogits[np.arange(n), labels] -= 1.0
    return float(loss), dlogits / n


def loss_and_grads(params: ModelParams, labels, ids=None, embeddings=None, mask=None):
    """Cross-entropy loss, parameter gradients and input-embedding gradients."""
    logits, cache = forward(params, ids=ids, embeddings=embeddings, mask=mask)
    labels = np.atleast_1d(labels)
    loss, dlogits = cross_entropy(logits, labels)
    if cache["single"]:
        dlogits = dlogits[0]
    grads, dx = backward(params, cache, dlogits)
    return loss, grads, dx


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

CHECKPOINT_FORMAT = "attrlex-checkpoint"
CHECKPOINT_VERSION = 1


def save_checkpoint(path: str | Path, params: ModelParams, meta: dict | None = None) -> None:
    """JSON container: metadata echo plus every tensor flattened row-major.

    Floats are written with ``repr`` (shortest round-trip), so a reload is
    bit-identical.
    """
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "meta": meta or {},
        "tensors": {
            name: {"shape": list(arr.shape), "data": arr.ravel(order="C").tolist()}
            for name, arr in params.items()
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, separators=(",", ":"), sort_keys=False)
        fh.write("\n")


def load_checkpoint(path: str | Path) -> tuple[ModelParams, dict]:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a model checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {payload.get('version')}")
    tensors = payload["tensors"]
    arrays = {
        name: np.asarray(tensors[name]["data"], dtype=np.float64).reshape(tensors[name]["shape"])
        for name in ModelParams.names()
    }
    return ModelParams(**arrays), payload["meta"]
