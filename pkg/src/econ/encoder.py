"""Shared encoder aggregating all agents' belief states into one
group-level vector via multi-head self-attention over the agent slots."""

from __future__ import annotations

import numpy as np

from .kernel import ParamStore, Tensor, attention_params, multi_head_attention, stack


class BeliefEncoder:
    """Self-attention over N belief slots, heads concatenated, projected,
    then mean-pooled into a single group vector of the model dimension."""

    def __init__(self, belief_dim: int, model_dim: int = 256, heads: int = 4,
                 rng: np.random.Generator | None = None):
        if model_dim % heads != 0:
            raise ValueError("heads must divide the model dimension")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.belief_dim = belief_dim
        self.model_dim = model_dim
        self.heads = heads
        self.params = ParamStore()
        attention_params(self.params, "enc", rng, in_dim=belief_dim,
                         heads=heads, model_dim=model_dim)

    def encode_group(self, beliefs: list, params: ParamStore | None = None) -> Tensor:
        """Aggregate N same-dimension belief vectors into one group vector."""
        if not beliefs:
            raise ValueError("encode_group needs at least one belief")
        params = params if params is not None else self.params
        rows = [b if isinstance(b, Tensor) else Tensor(np.asarray(b, dtype=np.float64))
                for b in beliefs]
        for r in rows:
            if r.value.shape != (self.belief_dim,):
                raise ValueError(
                    f"belief of shape {r.value.shape}, expected ({self.belief_dim},)")
        x = stack(rows)
        attended = multi_head_attention(x, x, x, params, self.heads, prefix="enc")
        return attended.mean_rows()


def encoder_loss(total_td, local_tds: list, lam: float):
    """Regularized encoder objective: total TD plus lam * sum of local TDs."""
    vals = [total_td] + list(local_tds)
    for v in vals:
        x = float(v.value) if isinstance(v, Tensor) else float(v)
        if x < 0:
            raise ValueError("encoder_loss inputs must be non-negative")
    out = total_td
    for ltd in local_tds:
        out = out + lam * ltd
    return out
