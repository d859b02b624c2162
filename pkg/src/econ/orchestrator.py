"""Training loop wiring: coordinator strategy -> parallel execution ->
final-output aggregation, reward assignment, the three optimizer families
and early stopping.

The inference phase is read-only with respect to every parameter store;
all mutation happens in the optimization phase, which runs every
`update_interval` episodes over the newest buffered transitions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .backends import (
    GenerationRequest,
    ROLE_COORD_FINAL,
    ROLE_COORD_STRATEGY,
    ROLE_EXECUTION,
    Utterance,
    VirtualClock,
    run_jobs,
    truncate_strategy,
)
from .beliefs import (
    BeliefNetConfig,
    BeliefNetwork,
    Observation,
    PromptBounds,
    PromptEmbedding,
    ReplayBuffer,
    Trajectory,
    Transition,
    _FrozenView,
)
from .config import MetricsRow, RunConfig, subsystem_seed
from .encoder import BeliefEncoder, encoder_loss
from .kernel import OptimizerConfig, Tensor, adam_step
from .mixing import MixingBatchItem, MixingNetwork
from .rewards import (
    Evaluator,
    ExactMatchEvaluator,
    RewardWeights,
    compute_breakdown,
    update_reward_weights,
)


@dataclass
class EpisodeRecord:
    question: str
    strategy: str
    strategy_notes: list
    utterances: list
    prompt_embeddings: list
    beliefs: list
    observations: list
    breakdowns: list
    rewards: list
    group: np.ndarray
    final_text: str
    final_embedding: np.ndarray
    degenerate: bool = False

    def __post_init__(self):
        n = len(self.utterances)
        if not (len(self.rewards) == len(self.beliefs)
                == len(self.prompt_embeddings) == n):
            raise ValueError("per-agent fields must have one entry per agent")


@dataclass
class EarlyStopConfig:
    eps_c: float = 0.01
    r_threshold: float = 0.7
    eps_l: float = 1e-4
    patience: int = 5

    def __post_init__(self):
        if min(self.eps_c, self.r_threshold, self.eps_l) <= 0 or self.patience < 1:
            raise ValueError("early-stop thresholds must be positive")

    @classmethod
    def from_run_config(cls, cfg: RunConfig) -> "EarlyStopConfig":
        return cls(cfg.eps_c, cfg.r_threshold, cfg.eps_l, cfg.patience)


@dataclass
class TrainState:
    """Everything mutable across episodes."""

    trajectories: list
    buffers: list
    prev_beliefs: list
    reward_weights: RewardWeights
    expected_rewards: np.ndarray        # per-agent EMA of blended rewards
    prev_c_embed: np.ndarray | None = None
    prev_l_tot: float | None = None
    last_delta_c: float | None = None
    last_mean_r: float | None = None
    last_delta_l: float | None = None
    stop_streak: int = 0
    episode: int = 0
    cached_episodes: list = field(default_factory=list)


class Orchestrator:
    """Owns the networks, the backends and the training state."""

    EXPECTED_REWARD_DECAY = 0.9

    def __init__(self, cfg: RunConfig, coordinator, agents: list,
                 evaluator: Evaluator | None = None, clock=None):
        if not agents:
            raise ValueError("need at least one execution agent")
        self.cfg = cfg
        self.coordinator = coordinator
        self.agents = agents
        self.evaluator = evaluator if evaluator is not None else ExactMatchEvaluator({})
        self.clock = clock if clock is not None else VirtualClock()
        self.embed_dim = coordinator.embed_dim

        bounds = PromptBounds(cfg.t_min, cfg.t_max, cfg.p_min, cfg.p_max)
        obs_dim = 2 * self.embed_dim + cfg.d_b
        net_cfg = BeliefNetConfig(
            obs_dim=obs_dim, belief_dim=cfg.d_b, hidden=cfg.mlp_width,
            q_hidden=max(cfg.mlp_width // 4, 8), window=cfg.window,
            bounds=bounds, target_grid=cfg.grid_k)
        self.belief_nets = []
        for i in range(len(agents)):
            rng = np.random.default_rng(subsystem_seed(cfg.seed, "init") + i)
            self.belief_nets.append(BeliefNetwork(net_cfg, rng))
        enc_rng = np.random.default_rng(subsystem_seed(cfg.seed, "init") + 1000)
        self.encoder = BeliefEncoder(cfg.d_b, model_dim=cfg.d, heads=cfg.heads,
                                     rng=enc_rng)
        mix_rng = np.random.default_rng(subsystem_seed(cfg.seed, "init") + 2000)
        self.mixing = MixingNetwork(len(agents), group_dim=cfg.d,
                                    c_dim=self.embed_dim, rng=mix_rng)
        self.opt = OptimizerConfig(learning_rate=cfg.eta)

        self.state = TrainState(
            trajectories=[Trajectory(cfg.window) for _ in agents],
            buffers=[ReplayBuffer(cfg.buffer) for _ in agents],
            prev_beliefs=[np.zeros(cfg.d_b) for _ in agents],
            reward_weights=RewardWeights(np.asarray(cfg.alpha)),
            expected_rewards=np.zeros(len(agents)),
        )

    def param_stores(self) -> dict:
        stores = {"encoder": self.encoder.params, "mixing": self.mixing.params,
                  "mixing_target": self.mixing.target}
        for i, net in enumerate(self.belief_nets):
            stores[f"belief_{i}"] = net.params
            stores[f"belief_target_{i}"] = net.target
        return stores

    def checksums(self) -> dict:
        return {name: store.checksum() for name, store in self.param_stores().items()}

    # -- inference phase ----------------------------------------------------

    def run_inference(self, question: str, strategy: str | None = None) -> EpisodeRecord:
        """One full episode forward pass. Mutates nothing. A caller may
        inject a ready-made strategy (hierarchical mode does)."""
        if strategy is None:
            strat_req = GenerationRequest(ROLE_COORD_STRATEGY, question)
            strat_u = self.coordinator.generate(strat_req)
            strategy, notes = truncate_strategy(
                strat_u.text,
                regenerate=lambda: self.coordinator.generate(strat_req).text)
        else:
            strategy, notes = truncate_strategy(strategy)

        e_t = self.coordinator.embed(question)
        e_s = self.coordinator.embed(strategy)

        beliefs, embeddings, observations, requests = [], [], [], []
        for i, net in enumerate(self.belief_nets):
            obs = Observation(e_t, e_s, self.state.prev_beliefs[i]).as_array()
            belief = net.compute_belief(self.state.trajectories[i], obs)
            temp, pen = net.embed_prompt(belief)
            pe = PromptEmbedding(float(temp.value), float(pen.value))
            beliefs.append(belief.value.copy())
            embeddings.append(pe)
            observations.append(obs)
            requests.append(GenerationRequest(
                ROLE_EXECUTION, question, strategy, prompt_embedding=pe))

        utterances = run_jobs(requests, self.agents[0]) if len(
            set(map(id, self.agents))) == 1 else [
            self.agents[i].generate(requests[i]) for i in range(len(requests))]

        group = self.encoder.encode_group(beliefs).value.copy()

        valid = [u for u in utterances if u.valid]
        if not valid:
            final = Utterance.invalid(self.embed_dim)
            degenerate = True
        else:
            summary = "\n".join(u.text for u in valid)
            final = self.coordinator.generate(
                GenerationRequest(ROLE_COORD_FINAL, question, summary))
            degenerate = False

        breakdowns, rewards = [], []
        for i, u in enumerate(utterances):
            if not u.valid or degenerate:
                breakdowns.append(None)
                rewards.append(0.0)
                continue
            peers = [v.text for j, v in enumerate(utterances) if j != i and v.valid]
            bd = compute_breakdown(
                u.embedding, final.embedding, u.text, question, peers,
                self.evaluator, self.state.reward_weights, self.cfg.r_max)
            breakdowns.append(bd)
            rewards.append(bd.blended)

        return EpisodeRecord(
            question=question, strategy=strategy, strategy_notes=notes,
            utterances=utterances, prompt_embeddings=embeddings,
            beliefs=beliefs, observations=observations,
            breakdowns=breakdowns, rewards=rewards, group=group,
            final_text=final.text, final_embedding=final.embedding.copy(),
            degenerate=degenerate)

    # -- state transitions between episodes ----------------------------------

    def absorb_episode(self, record: EpisodeRecord):
        """Append transitions, update trajectories/EMAs. Run after inference."""
        st = self.state
        for i in range(len(self.agents)):
            action = record.prompt_embeddings[i].as_array()
            before = st.trajectories[i].snapshot()
            st.trajectories[i].append(action, record.observations[i])
            st.buffers[i].append(Transition(
                traj=before, obs=record.observations[i], action=action,
                reward=record.rewards[i],
                next_traj=st.trajectories[i].snapshot(),
                next_obs=record.observations[i],
                terminal=True))
            st.prev_beliefs[i] = record.beliefs[i]
            st.expected_rewards[i] = (
                self.EXPECTED_REWARD_DECAY * st.expected_rewards[i]
                + (1.0 - self.EXPECTED_REWARD_DECAY) * record.rewards[i])
        st.cached_episodes.append(record)
        if len(st.cached_episodes) > self.cfg.buffer:
            st.cached_episodes.pop(0)
        st.episode += 1

    # -- optimization phase --------------------------------------------------

    def run_optimization(self) -> dict:
        """One optimizer step per parameter family over the newest batch.

        Returns a loss report; if any buffer is short the step is skipped
        and the report says so.
        """
        st = self.state
        batch_size = self.cfg.batch
        if any(len(b) < batch_size for b in st.buffers):
            return {"skipped": True,
                    "reason": f"buffer below batch size {batch_size}"}
        order = []

        # local belief-net TD steps
        l_tds = []
        for i, net in enumerate(self.belief_nets):
            batch = st.buffers[i].sample_latest(batch_size)
            loss = net.td_loss(batch, self.cfg.gamma)
            net.params.zero_grads()
            loss.backward()
            adam_step(net.params, self.opt)
            net.soft_update(self.cfg.tau_soft)
            l_tds.append(float(loss.value))
            order.append(f"belief_{i}")

        episodes = st.cached_episodes[-batch_size:]
        trans = [st.buffers[i].sample_latest(batch_size)
                 for i in range(len(self.agents))]
        mix_items = self._mixing_batch(episodes, trans)

        # encoder step: total TD recomputed with the group vector on the
        # encoder graph and mixing parameters frozen
        l_e = self._encoder_step(episodes, trans, l_tds)
        order.append("encoder")

        # mixing step with projection and target soft update
        mix_loss = self.mixing.mixing_loss(
            mix_items, self.cfg.gamma, self.cfg.lambda_m, self.cfg.lambda_b)
        self.mixing.params.zero_grads()
        mix_loss.backward()
        adam_step(self.mixing.params, self.opt)
        self.mixing.project_nonnegative()
        self.mixing.soft_update_target(self.cfg.tau_soft)
        order.append("mixing")

        # adaptive reward weights
        comps, expected = [], []
        for rec in episodes:
            for i, bd in enumerate(rec.breakdowns):
                if bd is not None:
                    comps.append((bd.r_al, bd.r_ts, bd.r_cc))
                    expected.append(float(st.expected_rewards[i]))
        if comps:
            st.reward_weights = update_reward_weights(
                st.reward_weights, comps, expected, self.cfg.eta_coord)
        order.append("reward_weights")

        l_mix = float(mix_loss.value)
        l_tot = sum(l_tds) + l_e + l_mix
        return {"skipped": False, "l_td": l_tds, "l_e": l_e, "l_mix": l_mix,
                "l_tot": l_tot, "order": order}

    def _local_qs(self, rec, trans, k: int) -> np.ndarray:
        return np.array([
            float(self.belief_nets[i].local_q(
                trans[i][k].traj, rec.prompt_embeddings[i].as_array()).value)
            for i in range(len(self.agents))])

    def _mixing_batch(self, episodes: list, trans: list) -> list:
        items = []
        for k, rec in enumerate(episodes):
            emb = np.stack([pe.as_array() for pe in rec.prompt_embeddings])
            items.append(MixingBatchItem(
                local_qs=self._local_qs(rec, trans, k), embeddings=emb,
                group=rec.group, r_tot=float(np.mean(rec.rewards)),
                c_embed=rec.final_embedding, terminal=True))
        return items

    def _encoder_step(self, episodes: list, trans: list, l_tds: list) -> float:
        frozen_mix = _FrozenView(self.mixing.params)
        total = None
        for k, rec in enumerate(episodes):
            group_node = self.encoder.encode_group(rec.beliefs)
            local_qs = self._local_qs(rec, trans, k)
            emb = np.stack([pe.as_array() for pe in rec.prompt_embeddings])
            w_list = self.mixing.self_attend_embeddings(emb, frozen_mix)
            features = self.mixing.fuse_features(w_list, group_node, frozen_mix)
            q_tot = self.mixing.q_tot(local_qs, features, frozen_mix)
            td = (float(np.mean(rec.rewards)) - q_tot).square()
            total = td if total is None else total + td
        total = total * (1.0 / len(episodes))
        loss = encoder_loss(total, [float(x) for x in l_tds], self.cfg.lambda_e)
        self.encoder.params.zero_grads()
        loss.backward()
        adam_step(self.encoder.params, self.opt)
        return float(loss.value)

    # -- early stopping ------------------------------------------------------

    def check_early_stop(self, record: EpisodeRecord, report: dict,
                         stop_cfg: EarlyStopConfig) -> tuple[bool, dict]:
        """Stop iff output shift, mean reward and loss shift all satisfy
        their thresholds for `patience` consecutive episodes."""
        st = self.state
        delta_c = (np.inf if st.prev_c_embed is None
                   else float(np.linalg.norm(record.final_embedding - st.prev_c_embed)))
        mean_r = float(np.mean(record.rewards))
        l_tot = report.get("l_tot") if not report.get("skipped", True) else None
        if l_tot is None:
            delta_l = np.inf if st.prev_l_tot is None else st.last_delta_l
            delta_l = np.inf if delta_l is None else delta_l
        else:
            delta_l = (np.inf if st.prev_l_tot is None
                       else abs(l_tot - st.prev_l_tot))
            st.prev_l_tot = l_tot
        st.prev_c_embed = record.final_embedding.copy()
        st.last_delta_c, st.last_mean_r, st.last_delta_l = delta_c, mean_r, delta_l

        ok_c = delta_c <= stop_cfg.eps_c
        ok_r = mean_r >= stop_cfg.r_threshold
        ok_l = delta_l <= stop_cfg.eps_l
        st.stop_streak = st.stop_streak + 1 if (ok_c and ok_r and ok_l) else 0
        stop = st.stop_streak >= stop_cfg.patience
        return stop, {
            "delta_c": delta_c, "mean_r": mean_r, "delta_l": delta_l,
            "output_stable": ok_c, "reward_met": ok_r, "loss_stable": ok_l,
            "streak": st.stop_streak, "stop": stop,
        }

    # -- training loop -------------------------------------------------------

    def train(self, questions: list, episode_log_path=None) -> tuple[list, list]:
        """Runs up to cfg.episodes episodes; returns (metrics rows, reports)."""
        if not questions:
            raise ValueError("need at least one question")
        stop_cfg = EarlyStopConfig.from_run_config(self.cfg)
        rows, reports = [], []
        log_fh = open(episode_log_path, "w") if episode_log_path else None
        try:
            start = self.clock.now()
            for ep in range(1, self.cfg.episodes + 1):
                question = questions[(ep - 1) % len(questions)]
                record = self.run_inference(question)
                self.absorb_episode(record)
                if ep % self.cfg.update_interval == 0:
                    report = self.run_optimization()
                else:
                    report = {"skipped": True, "reason": "off-interval episode"}
                stop, stop_info = self.check_early_stop(record, report, stop_cfg)
                self.clock.sleep(1.0)
                row = MetricsRow(
                    episode=ep,
                    l_td=float(np.mean(report["l_td"])) if not report["skipped"] else 0.0,
                    l_e=report.get("l_e", 0.0) if not report["skipped"] else 0.0,
                    l_mix=report.get("l_mix", 0.0) if not report["skipped"] else 0.0,
                    l_tot=report.get("l_tot", 0.0) if not report["skipped"] else 0.0,
                    mean_r=stop_info["mean_r"],
                    delta_c=stop_info["delta_c"] if np.isfinite(stop_info["delta_c"]) else -1.0,
                    stopped=int(stop),
                    wall_time=self.clock.now() - start,
                    tokens=sum(u.token_count for u in record.utterances))
                rows.append(row)
                reports.append(report)
                if log_fh:
                    log_fh.write(json.dumps({
                        "episode": ep, "question": question,
                        "strategy": record.strategy,
                        "rewards": [float(r) for r in record.rewards],
                        "degenerate": record.degenerate,
                        "stop": stop_info}) + "\n")
                if stop:
                    break
        finally:
            if log_fh:
                log_fh.close()
        return rows, reports
