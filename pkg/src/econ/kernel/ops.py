"""Scalar/vector helpers, multi-head attention and the gradient-check oracle."""

from __future__ import annotations

import math
import warnings

import numpy as np

from .params import ParamStore
from .tensor import NonFiniteError, Tensor, concat, stable_sigmoid


def sigmoid(x: float) -> float:
    """Stable logistic function for a finite scalar."""
    if not math.isfinite(x):
        raise NonFiniteError("sigmoid requires finite input")
    return float(stable_sigmoid(np.asarray([x]))[0])


def cosine_sim(u, v) -> float:
    """Cosine similarity; a zero-norm input yields 0 with a warning."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"cosine_sim dimension mismatch: {u.shape} vs {v.shape}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        warnings.warn("cosine_sim on a zero-norm vector; returning 0", RuntimeWarning, stacklevel=2)
        return 0.0
    return float(np.clip(u @ v / (nu * nv), -1.0, 1.0))


def cosine_sim_node(u: Tensor, v: Tensor) -> Tensor:
    """Differentiable cosine similarity between 1-D tensors.

    A zero-norm side degrades to a constant 0 (no gradient path), matching
    the scalar helper's convention.
    """
    nu = float(np.linalg.norm(u.value))
    nv = float(np.linalg.norm(v.value))
    if nu == 0.0 or nv == 0.0:
        warnings.warn("cosine_sim on a zero-norm vector; returning 0", RuntimeWarning, stacklevel=2)
        return Tensor(0.0)
    return u.dot(v) / (u.norm() * v.norm())


def softmax(v, scale: float = 1.0) -> np.ndarray:
    """Max-subtraction stabilized softmax of a vector times `scale`."""
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0:
        raise ValueError("softmax of an empty vector")
    if scale <= 0:
        raise ValueError("softmax scale must be > 0")
    if not np.all(np.isfinite(v)):
        raise NonFiniteError("softmax requires finite input")
    z = scale * v
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def attention_params(store: ParamStore, prefix: str, rng: np.random.Generator,
                     in_dim: int, heads: int, model_dim: int):
    """Create per-head Q/K/V projections plus the output projection."""
    if model_dim % heads != 0:
        raise ValueError(f"model dim {model_dim} not divisible by {heads} heads")
    head_dim = model_dim // heads
    for h in range(heads):
        store.create(f"{prefix}.w_q{h}", (in_dim, head_dim), rng, fan_in=in_dim)
        store.create(f"{prefix}.w_k{h}", (in_dim, head_dim), rng, fan_in=in_dim)
        store.create(f"{prefix}.w_v{h}", (in_dim, head_dim), rng, fan_in=in_dim)
    store.create(f"{prefix}.w_o", (model_dim, model_dim), rng, fan_in=model_dim)


def multi_head_attention(queries: Tensor, keys: Tensor, values: Tensor,
                         params: ParamStore, heads: int, prefix: str = "attn",
                         scale: float | None = None) -> Tensor:
    """Scaled dot-product attention with `heads` heads.

    queries: (Nq, d_in); keys/values: (Nk, d_in). Heads are concatenated and
    passed through the output projection, giving (Nq, model_dim).
    """
    if queries.value.ndim != 2 or keys.value.ndim != 2 or values.value.ndim != 2:
        raise ValueError("attention inputs must be rank-2 (slots x features)")
    if keys.value.shape[0] != values.value.shape[0]:
        raise ValueError(
            f"keys ({keys.value.shape}) and values ({values.value.shape}) "
            "disagree on slot count")
    head_outputs = []
    for h in range(heads):
        try:
            w_q = params[f"{prefix}.w_q{h}"]
            w_k = params[f"{prefix}.w_k{h}"]
            w_v = params[f"{prefix}.w_v{h}"]
        except KeyError as exc:
            raise ValueError(f"missing attention parameter {exc} for head {h}") from exc
        if queries.value.shape[1] != w_q.value.shape[0]:
            raise ValueError(
                f"queries ({queries.value.shape}) incompatible with "
                f"{prefix}.w_q{h} ({w_q.value.shape})")
        q = queries @ w_q
        k = keys @ w_k
        v = values @ w_v
        s = scale if scale is not None else 1.0 / math.sqrt(q.value.shape[1])
        scores = (q @ k.T) * s
        weights = scores.softmax(axis=-1)
        head_outputs.append(weights @ v)
    if len(head_outputs) == 1:
        merged = head_outputs[0]
    else:
        merged = _hconcat(head_outputs)
    return merged @ params[f"{prefix}.w_o"]


def _hconcat(blocks: list[Tensor]) -> Tensor:
    """Concatenate rank-2 tensors along the feature axis."""
    sizes = [b.value.shape[1] for b in blocks]
    offsets = np.cumsum([0] + sizes)

    def back(g, bs=blocks, offs=offsets):
        for b, lo, hi in zip(bs, offs[:-1], offs[1:]):
            if b.requires_grad:
                b._accumulate(g[:, lo:hi])

    value = np.concatenate([b.value for b in blocks], axis=1)
    return Tensor(value, _parents=tuple(blocks), _backward=back, name="hconcat")


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    out = x @ w if x.value.ndim > 0 else w * x
    if b is not None:
        out = out + b
    return out


def finite_diff_check(loss_fn, store: ParamStore, h: float = 1e-5,
                      names: list[str] | None = None) -> float:
    """Max relative error between analytic gradients and central differences.

    `loss_fn` must be a deterministic closure over `store` returning a scalar
    Tensor. Returns max over parameter entries of
    |analytic - numeric| / max(|analytic|, |numeric|, 1).
    """
    if not (1e-7 <= h <= 1e-3):
        raise ValueError("h must lie in [1e-7, 1e-3]")
    store.zero_grads()
    loss = loss_fn()
    loss.backward()
    analytic = {
        name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.value))
        for name, p in store.items()
    }
    store.zero_grads()
    max_err = 0.0
    for name, p in store.items():
        if names is not None and name not in names:
            continue
        flat = p.value.ravel()
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + h
            f_plus = float(loss_fn().value)
            flat[idx] = orig - h
            f_minus = float(loss_fn().value)
            flat[idx] = orig
            numeric = (f_plus - f_minus) / (2.0 * h)
            a = analytic[name].ravel()[idx]
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1.0)
            max_err = max(max_err, err)
    return max_err
