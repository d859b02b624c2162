"""Centralized mixing network: local Q-values in, global Q_tot out,
with Q_tot structurally non-decreasing in every local Q.

The Q-value path is a two-layer net whose stored weights are clamped
non-negative after every optimizer step; fused per-agent features enter
only through hypernetwork-generated biases and gains of the form
1 + relu(.), so they can never flip the sign of a Q-path derivative.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .kernel import (
    ParamStore,
    Tensor,
    attention_params,
    cosine_sim_node,
    multi_head_attention,
    stack,
)
from .beliefs import _FrozenView

Q_PATH_NAMES = ("qpath.w1", "qpath.w2")


@dataclass
class MixingBatchItem:
    local_qs: np.ndarray            # (N,) current local Q-values
    embeddings: np.ndarray          # (N, 2) prompt embeddings
    group: np.ndarray               # group representation E
    r_tot: float
    c_embed: np.ndarray             # coordinator final-output embedding
    next_local_q_maxes: np.ndarray | None = None
    next_embeddings: np.ndarray | None = None
    next_group: np.ndarray | None = None
    terminal: bool = False


class MixingNetwork:
    def __init__(self, n_agents: int, group_dim: int, attn_dim: int = 16,
                 feat_dim: int = 64, hidden: int = 32, heads: int = 2,
                 c_dim: int | None = None,
                 rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.n_agents = n_agents
        self.group_dim = group_dim
        self.attn_dim = attn_dim
        self.feat_dim = feat_dim
        self.hidden = hidden
        self.heads = heads
        self.c_dim = c_dim if c_dim is not None else feat_dim
        p = ParamStore()
        attention_params(p, "emb", rng, in_dim=2, heads=heads, model_dim=attn_dim)
        fuse_in = attn_dim + group_dim
        p.create("fuse.w", (fuse_in, feat_dim), rng, fan_in=fuse_in)
        p.add("fuse.b", np.zeros(feat_dim))
        # Q path: stored weights must stay non-negative (projected after steps)
        p.add("qpath.w1", np.abs(np.asarray(
            rng.uniform(-1, 1, size=(n_agents, hidden)))) / np.sqrt(n_agents))
        p.add("qpath.w2", np.abs(np.asarray(
            rng.uniform(-1, 1, size=(hidden,)))) / np.sqrt(hidden))
        p.create("hyp.w_b1", (feat_dim, hidden), rng, fan_in=feat_dim)
        p.add("hyp.b_b1", np.zeros(hidden))
        p.create("hyp.w_g", (feat_dim, hidden), rng, fan_in=feat_dim)
        p.add("hyp.b_g", np.zeros(hidden))
        p.create("hyp.w_b2", (feat_dim,), rng, fan_in=feat_dim)
        p.add("hyp.b_b2", 0.0)
        # projects fused features into the final-output embedding space
        p.create("sd.w", (feat_dim, self.c_dim), rng, fan_in=feat_dim)
        self.params = p
        self.target = p.clone()

    # -- forward pieces -----------------------------------------------------

    def self_attend_embeddings(self, embeddings: np.ndarray, params=None) -> list[Tensor]:
        """Prompt embeddings (N, 2) -> one intermediate vector per agent."""
        params = params if params is not None else self.params
        x = Tensor(np.asarray(embeddings, dtype=np.float64))
        out = multi_head_attention(x, x, x, params, self.heads, prefix="emb")
        return [out[i] for i in range(out.value.shape[0])]

    def fuse_features(self, w_list: list[Tensor], group, params=None) -> list[Tensor]:
        """F_i = relu(linear([w_i; E])); E is shared across agents."""
        from .kernel import concat

        params = params if params is not None else self.params
        e = group if isinstance(group, Tensor) else Tensor(np.asarray(group, dtype=np.float64))
        return [
            (concat([w, e]) @ params["fuse.w"] + params["fuse.b"]).relu()
            for w in w_list
        ]

    def q_tot(self, local_qs, features: list[Tensor], params=None) -> Tensor:
        """Layered non-negative combination of the local Q-values, with the
        pooled features driving biases and 1+relu gains."""
        params = params if params is not None else self.params
        q = local_qs if isinstance(local_qs, Tensor) else Tensor(
            np.asarray(local_qs, dtype=np.float64))
        if q.value.shape != (self.n_agents,):
            raise ValueError(
                f"expected {self.n_agents} local Q-values, got shape {q.value.shape}")
        if len(features) != self.n_agents:
            raise ValueError(
                f"expected {self.n_agents} features, got {len(features)}")
        fbar = stack(features).mean_rows()
        b1 = fbar @ params["hyp.w_b1"] + params["hyp.b_b1"]
        gain = (fbar @ params["hyp.w_g"] + params["hyp.b_g"]).relu() + 1.0
        h1 = (q @ params["qpath.w1"] + b1).relu() * gain
        b2 = fbar.dot(params["hyp.w_b2"]) + params["hyp.b_b2"]
        return h1.dot(params["qpath.w2"]) + b2

    def forward(self, local_qs, embeddings, group, params=None) -> tuple[Tensor, list[Tensor]]:
        w_list = self.self_attend_embeddings(embeddings, params)
        features = self.fuse_features(w_list, group, params)
        return self.q_tot(local_qs, features, params), features

    # -- losses -------------------------------------------------------------

    def sd_loss(self, features: list[Tensor], c_embed: np.ndarray,
                lam_b: float, params=None) -> Tensor:
        """Alignment of per-agent features (projected into the output
        embedding space) with the final-output embedding."""
        params = params if params is not None else self.params
        c = np.asarray(c_embed, dtype=np.float64)
        if c.shape != (self.c_dim,):
            raise ValueError(
                f"final-output embedding of shape {c.shape}, expected ({self.c_dim},)")
        if np.linalg.norm(c) == 0.0:
            warnings.warn("sd_loss against a zero final-output embedding",
                          RuntimeWarning, stacklevel=2)
        c_node = Tensor(c)
        out = None
        for f in features:
            term = (1.0 - cosine_sim_node(f @ params["sd.w"], c_node)).square()
            out = term if out is None else out + term
        return out * lam_b

    def mixing_loss(self, batch: list[MixingBatchItem], gamma: float,
                    lam_m: float, lam_b: float) -> Tensor:
        """TD on Q_tot (target-params bootstrap) + feature alignment +
        local/global consistency, meaned over the batch."""
        if not batch:
            raise ValueError("mixing_loss on an empty batch")
        frozen = _FrozenView(self.target)
        total = None
        for item in batch:
            q_tot, features = self.forward(item.local_qs, item.embeddings, item.group)
            if item.terminal or item.next_local_q_maxes is None:
                bootstrap = 0.0
            else:
                tgt, _ = self.forward(item.next_local_q_maxes, item.next_embeddings,
                                      item.next_group, params=frozen)
                bootstrap = gamma * float(tgt.value)
            td = (item.r_tot + bootstrap - q_tot).square()
            sd = self.sd_loss(features, item.c_embed, lam_b)
            cons = None
            for i in range(self.n_agents):
                term = (float(item.local_qs[i]) - q_tot).square()
                cons = term if cons is None else cons + term
            loss = td + sd + lam_m * cons
            total = loss if total is None else total + loss
        return total * (1.0 / len(batch))

    # -- monotonicity machinery --------------------------------------------

    def project_nonnegative(self):
        """Clamp every Q-path weight to max(0, w); call after each step."""
        for name in Q_PATH_NAMES:
            t = self.params[name]
            np.maximum(t.value, 0.0, out=t.value)

    def check_monotonicity(self, n_samples: int = 100, delta: float = 1e-4,
                           rng: np.random.Generator | None = None) -> dict:
        """Numerically estimate dQ_tot/dQ_i over random states; report the
        minimum directional derivative and any offending weight."""
        if n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        rng = rng if rng is not None else np.random.default_rng(0)
        min_deriv = np.inf
        for _ in range(n_samples):
            qs = rng.normal(size=self.n_agents)
            emb = rng.uniform(0.1, 1.0, size=(self.n_agents, 2))
            group = rng.normal(size=self.group_dim)
            base, _ = self.forward(qs, emb, group)
            base_v = float(base.value)
            for i in range(self.n_agents):
                bumped = qs.copy()
                bumped[i] += delta
                up, _ = self.forward(bumped, emb, group)
                min_deriv = min(min_deriv, (float(up.value) - base_v) / delta)
        neg_weights = any(
            float(self.params[name].value.min()) < 0 for name in Q_PATH_NAMES)
        return {
            "min_directional_derivative": float(min_deriv),
            "negative_q_path_weights": neg_weights,
            "passes": (min_deriv >= -1e-8) and not neg_weights,
        }

    def soft_update_target(self, tau: float):
        from .beliefs import soft_update

        soft_update(self.params, self.target, tau)
