"""Per-agent belief network: trajectory/observation -> belief state,
prompt embedding (the action) and a local Q-value, trained by a TD loss
against a soft-updated target Q head.
"""

from __future__ import annotations

import json
import struct
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .kernel import ParamStore, Tensor, concat
from .kernel.tensor import stable_sigmoid


@dataclass
class PromptBounds:
    t_min: float = 0.1
    t_max: float = 2.0
    p_min: float = 0.1
    p_max: float = 0.9

    def __post_init__(self):
        if not (self.t_min < self.t_max and self.p_min < self.p_max):
            raise ValueError("prompt bounds must satisfy min < max")


@dataclass
class PromptEmbedding:
    temperature: float
    repetition_penalty: float

    def as_array(self) -> np.ndarray:
        return np.array([self.temperature, self.repetition_penalty])

    def clip(self, bounds: PromptBounds) -> "PromptEmbedding":
        return PromptEmbedding(
            float(np.clip(self.temperature, bounds.t_min, bounds.t_max)),
            float(np.clip(self.repetition_penalty, bounds.p_min, bounds.p_max)),
        )


@dataclass
class Observation:
    """Concatenation order is fixed: [task, strategy, prior belief]."""

    task_encoding: np.ndarray
    strategy_encoding: np.ndarray
    prior_belief: np.ndarray

    def as_array(self) -> np.ndarray:
        return np.concatenate([
            np.asarray(self.task_encoding, dtype=np.float64),
            np.asarray(self.strategy_encoding, dtype=np.float64),
            np.asarray(self.prior_belief, dtype=np.float64),
        ])


class Trajectory:
    """Sliding window of (action, observation) pairs; older entries evicted."""

    def __init__(self, window: int = 8, pairs=None):
        if window < 1:
            raise ValueError("window must be >= 1")
        self.window = window
        self._pairs: deque = deque(pairs or [], maxlen=window)

    def append(self, action: np.ndarray, obs: np.ndarray):
        self._pairs.append((np.asarray(action, dtype=np.float64),
                            np.asarray(obs, dtype=np.float64)))

    def pairs(self) -> list:
        return list(self._pairs)

    def snapshot(self) -> "Trajectory":
        return Trajectory(self.window, [(a.copy(), o.copy()) for a, o in self._pairs])

    def __len__(self):
        return len(self._pairs)


@dataclass
class Transition:
    traj: Trajectory
    obs: np.ndarray
    action: np.ndarray  # prompt embedding [T, p]
    reward: float
    next_traj: Trajectory
    next_obs: np.ndarray
    terminal: bool = False


class ReplayBuffer:
    """FIFO-bounded transition store."""

    def __init__(self, capacity: int = 32):
        self.capacity = capacity
        self._items: deque = deque(maxlen=capacity)

    def append(self, item: Transition):
        self._items.append(item)

    def sample_latest(self, n: int) -> list[Transition]:
        items = list(self._items)
        return items[-n:]

    def __len__(self):
        return len(self._items)

    def spill(self, path):
        """Length-prefixed records of transition fields."""
        with open(path, "wb") as fh:
            for t in self._items:
                rec = json.dumps({
                    "traj": [[a.tolist(), o.tolist()] for a, o in t.traj.pairs()],
                    "window": t.traj.window,
                    "obs": t.obs.tolist(),
                    "action": t.action.tolist(),
                    "reward": t.reward,
                    "next_traj": [[a.tolist(), o.tolist()] for a, o in t.next_traj.pairs()],
                    "next_obs": t.next_obs.tolist(),
                    "terminal": t.terminal,
                }).encode()
                fh.write(struct.pack("<I", len(rec)))
                fh.write(rec)

    @classmethod
    def restore(cls, path, capacity: int = 32) -> "ReplayBuffer":
        buf = cls(capacity)
        with open(path, "rb") as fh:
            while True:
                head = fh.read(4)
                if not head:
                    break
                (n,) = struct.unpack("<I", head)
                rec = json.loads(fh.read(n).decode())

                def mk_traj(pairs, window):
                    t = Trajectory(window)
                    for a, o in pairs:
                        t.append(np.asarray(a), np.asarray(o))
                    return t

                buf.append(Transition(
                    traj=mk_traj(rec["traj"], rec["window"]),
                    obs=np.asarray(rec["obs"]),
                    action=np.asarray(rec["action"]),
                    reward=rec["reward"],
                    next_traj=mk_traj(rec["next_traj"], rec["window"]),
                    next_obs=np.asarray(rec["next_obs"]),
                    terminal=rec["terminal"],
                ))
        return buf


class _FrozenView:
    """Read-only constant view of a ParamStore: forwards through this view
    contribute no gradients (used for target-network bootstraps)."""

    def __init__(self, store: ParamStore):
        self._store = store

    def __getitem__(self, name: str) -> Tensor:
        return Tensor(self._store[name].value)


@dataclass
class BeliefNetConfig:
    obs_dim: int  # 2 * entity dim + belief dim after concatenation
    belief_dim: int = 128
    hidden: int = 256
    q_hidden: int = 64
    window: int = 8
    bounds: PromptBounds = field(default_factory=PromptBounds)
    target_grid: int = 5


class BeliefNetwork:
    """One agent's belief network plus its target Q head.

    Parameter layout: `traj.*` trajectory encoder, `mlp.*` belief MLP,
    `head.*` temperature/penalty heads, `q.*` local Q head (target copy in
    a separate store holding only `q.*`).
    """

    def __init__(self, cfg: BeliefNetConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.params = ParamStore()
        pair_dim = 2 + cfg.obs_dim
        p = self.params
        p.create("traj.w_pair", (pair_dim, cfg.belief_dim), rng, fan_in=pair_dim)
        p.add("traj.b_pair", np.zeros(cfg.belief_dim))
        p.add("traj.pos", np.ones(cfg.window))
        mlp_in = cfg.belief_dim + cfg.obs_dim
        p.create("mlp.w1", (mlp_in, cfg.hidden), rng, fan_in=mlp_in)
        p.add("mlp.b1", np.zeros(cfg.hidden))
        p.create("mlp.w2", (cfg.hidden, cfg.belief_dim), rng, fan_in=cfg.hidden)
        p.add("mlp.b2", np.zeros(cfg.belief_dim))
        p.create("head.w_t", (cfg.belief_dim,), rng, fan_in=cfg.belief_dim)
        p.add("head.b_t", 0.0)
        p.create("head.w_p", (cfg.belief_dim,), rng, fan_in=cfg.belief_dim)
        p.add("head.b_p", 0.0)
        q_in = cfg.belief_dim + 2
        p.create("q.w1", (q_in, cfg.q_hidden), rng, fan_in=q_in)
        p.add("q.b1", np.zeros(cfg.q_hidden))
        p.create("q.w2", (cfg.q_hidden,), rng, fan_in=cfg.q_hidden)
        p.add("q.b2", 0.0)

        # frozen copy of everything the local Q head reads
        self.target = ParamStore()
        for name in ("traj.w_pair", "traj.b_pair", "traj.pos",
                     "q.w1", "q.b1", "q.w2", "q.b2"):
            self.target.add(name, p[name].value.copy())

    # -- forward pieces -----------------------------------------------------

    def encode_trajectory(self, traj: Trajectory, params=None) -> Tensor:
        """Window of pairs, each linearly projected, pooled with learned
        per-position scalars. Empty trajectory -> zero vector."""
        params = params if params is not None else self.params
        pairs = traj.pairs()
        if not pairs:
            return Tensor(np.zeros(self.cfg.belief_dim))
        w = params["traj.w_pair"]
        b = params["traj.b_pair"]
        pos = params["traj.pos"]
        acc = None
        for k, (action, obs) in enumerate(pairs):
            x = Tensor(np.concatenate([action, obs]))
            proj = (x @ w + b) * pos[k]
            acc = proj if acc is None else acc + proj
        return acc * (1.0 / len(pairs))

    def compute_belief(self, traj: Trajectory, obs: np.ndarray, params=None) -> Tensor:
        params = params if params is not None else self.params
        h = concat([self.encode_trajectory(traj, params), Tensor(np.asarray(obs, dtype=np.float64))])
        h = (h @ params["mlp.w1"] + params["mlp.b1"]).relu()
        return h @ params["mlp.w2"] + params["mlp.b2"]

    def embed_prompt(self, belief: Tensor, params=None) -> tuple[Tensor, Tensor]:
        """Returns (temperature, penalty) nodes, each squashed into its box."""
        params = params if params is not None else self.params
        b = self.cfg.bounds
        t = belief.dot(params["head.w_t"]) + params["head.b_t"]
        p = belief.dot(params["head.w_p"]) + params["head.b_p"]
        temp = b.t_min + (b.t_max - b.t_min) * t.sigmoid()
        pen = b.p_min + (b.p_max - b.p_min) * p.sigmoid()
        return temp, pen

    def prompt_embedding(self, traj: Trajectory, obs: np.ndarray) -> PromptEmbedding:
        belief = self.compute_belief(traj, obs)
        temp, pen = self.embed_prompt(belief)
        return PromptEmbedding(float(temp.value), float(pen.value))

    def local_q(self, traj: Trajectory, embedding: np.ndarray, params=None) -> Tensor:
        params = params if params is not None else self.params
        enc = self.encode_trajectory(traj, params)
        x = concat([enc, Tensor(np.asarray(embedding, dtype=np.float64))])
        h = (x @ params["q.w1"] + params["q.b1"]).relu()
        return h.dot(params["q.w2"]) + params["q.b2"]

    def _target_params(self):
        return _FrozenView(self.target)

    def action_grid(self, k: int | None = None) -> np.ndarray:
        k = k or self.cfg.target_grid
        if k < 2:
            raise ValueError("target grid needs k >= 2")
        b = self.cfg.bounds
        ts = np.linspace(b.t_min, b.t_max, k)
        ps = np.linspace(b.p_min, b.p_max, k)
        return np.array([(t, p) for t in ts for p in ps])

    def max_target_q(self, next_traj: Trajectory, k: int | None = None) -> float:
        params = self._target_params()
        best = -np.inf
        for e in self.action_grid(k):
            best = max(best, float(self.local_q(next_traj, e, params).value))
        return best

    # -- losses -------------------------------------------------------------

    def td_loss(self, batch: list[Transition], gamma: float) -> Tensor:
        """Mean squared TD residual; terminal transitions drop the bootstrap.
        Gradients flow into live parameters only; the target head is frozen."""
        if not batch:
            raise ValueError("td_loss on an empty batch")
        if not (0.0 <= gamma < 1.0):
            raise ValueError("gamma must lie in [0, 1)")
        total = None
        for tr in batch:
            bootstrap = 0.0 if tr.terminal else gamma * self.max_target_q(tr.next_traj)
            target = tr.reward + bootstrap
            residual = self.local_q(tr.traj, tr.action) - target
            sq = residual.square()
            total = sq if total is None else total + sq
        return total * (1.0 / len(batch))

    def soft_update(self, tau: float):
        soft_update(self.params, self.target, tau)


def soft_update(live: ParamStore, target: ParamStore, tau: float):
    """target <- tau * live + (1 - tau) * target, elementwise by name."""
    if not (0.0 < tau <= 1.0):
        raise ValueError("tau must lie in (0, 1]")
    for name, t in target.items():
        src = live[name].value
        if src.shape != t.value.shape:
            raise ValueError(f"shape mismatch for '{name}' in soft update")
        t.value = tau * src + (1.0 - tau) * t.value


def belief_entropy(beliefs: list[np.ndarray]) -> float:
    """Shannon entropy of softmax-normalized belief vectors, summed over
    agents. Lies in [0, N * log(d)]."""
    if not beliefs:
        raise ValueError("belief_entropy needs at least one belief")
    total = 0.0
    for b in beliefs:
        b = np.asarray(b, dtype=np.float64)
        z = b - b.max()
        q = np.exp(z)
        q /= q.sum()
        nz = q > 0
        total += float(-(q[nz] * np.log(q[nz])).sum())
    return total
