import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from econ.beliefs import (
    BeliefNetConfig,
    BeliefNetwork,
    Observation,
    PromptBounds,
    PromptEmbedding,
    ReplayBuffer,
    Trajectory,
    Transition,
    belief_entropy,
    soft_update,
)
from econ.kernel import ParamStore, finite_diff_check


OBS_DIM = 10


def make_net(seed=0, **kw):
    cfg = BeliefNetConfig(obs_dim=OBS_DIM, belief_dim=6, hidden=8, q_hidden=5,
                          window=4, **kw)
    return BeliefNetwork(cfg, np.random.default_rng(seed))


def make_traj(n, seed=0, window=4):
    rng = np.random.default_rng(seed)
    t = Trajectory(window)
    for _ in range(n):
        t.append(rng.normal(size=2), rng.normal(size=OBS_DIM))
    return t


def make_transition(seed=0, reward=0.5, terminal=False):
    rng = np.random.default_rng(seed)
    return Transition(
        traj=make_traj(2, seed), obs=rng.normal(size=OBS_DIM),
        action=np.array([0.7, 0.4]), reward=reward,
        next_traj=make_traj(3, seed + 1), next_obs=rng.normal(size=OBS_DIM),
        terminal=terminal)


class TestPromptTypes:
    def test_bounds_validated(self):
        with pytest.raises(ValueError):
            PromptBounds(t_min=1.0, t_max=0.5)
        with pytest.raises(ValueError):
            PromptBounds(p_min=0.9, p_max=0.9)

    def test_clip(self):
        b = PromptBounds()
        pe = PromptEmbedding(5.0, 0.0).clip(b)
        assert pe.temperature == b.t_max
        assert pe.repetition_penalty == b.p_min

    def test_observation_concat_order(self):
        obs = Observation(np.array([1.0]), np.array([2.0]), np.array([3.0, 4.0]))
        np.testing.assert_allclose(obs.as_array(), [1, 2, 3, 4])


class TestTrajectory:
    def test_window_eviction(self):
        t = Trajectory(window=3)
        for i in range(5):
            t.append(np.array([float(i), 0.0]), np.zeros(OBS_DIM))
        assert len(t) == 3
        assert t.pairs()[0][0][0] == 2.0

    def test_snapshot_isolated(self):
        t = make_traj(2)
        snap = t.snapshot()
        t.append(np.zeros(2), np.zeros(OBS_DIM))
        assert len(snap) == 2
        assert len(t) == 3

    def test_window_must_be_positive(self):
        with pytest.raises(ValueError):
            Trajectory(window=0)


class TestReplayBuffer:
    def test_fifo_bound(self):
        buf = ReplayBuffer(capacity=3)
        for i in range(5):
            buf.append(make_transition(seed=i, reward=float(i)))
        assert len(buf) == 3
        assert [t.reward for t in buf.sample_latest(3)] == [2.0, 3.0, 4.0]

    def test_spill_restore_round_trip(self, tmp_path):
        buf = ReplayBuffer(capacity=4)
        for i in range(3):
            buf.append(make_transition(seed=i, terminal=(i == 2)))
        path = tmp_path / "replay.bin"
        buf.spill(path)
        restored = ReplayBuffer.restore(path, capacity=4)
        assert len(restored) == 3
        a, b = buf.sample_latest(3)[1], restored.sample_latest(3)[1]
        np.testing.assert_allclose(a.obs, b.obs)
        np.testing.assert_allclose(a.action, b.action)
        assert a.terminal == b.terminal
        assert len(a.traj) == len(b.traj)


class TestForward:
    def test_empty_trajectory_encodes_to_zero(self):
        net = make_net()
        enc = net.encode_trajectory(Trajectory(4))
        np.testing.assert_allclose(enc.value, np.zeros(6))

    def test_prompt_embedding_in_bounds(self):
        net = make_net()
        b = net.cfg.bounds
        for seed in range(5):
            traj = make_traj(3, seed)
            obs = np.random.default_rng(seed).normal(size=OBS_DIM)
            pe = net.prompt_embedding(traj, obs)
            assert b.t_min <= pe.temperature <= b.t_max
            assert b.p_min <= pe.repetition_penalty <= b.p_max

    def test_belief_deterministic(self):
        net = make_net()
        traj, obs = make_traj(2), np.ones(OBS_DIM)
        b1 = net.compute_belief(traj, obs).value
        b2 = net.compute_belief(traj, obs).value
        np.testing.assert_array_equal(b1, b2)

    def test_action_grid_covers_box(self):
        net = make_net()
        grid = net.action_grid(3)
        assert grid.shape == (9, 2)
        b = net.cfg.bounds
        assert grid[:, 0].min() == b.t_min and grid[:, 0].max() == b.t_max
        assert grid[:, 1].min() == b.p_min and grid[:, 1].max() == b.p_max
        with pytest.raises(ValueError):
            net.action_grid(1)


class TestTDLoss:
    def test_gradient_matches_finite_difference(self):
        net = make_net(seed=3)
        batch = [make_transition(seed=i) for i in range(3)]

        def loss():
            return net.td_loss(batch, gamma=0.9)

        assert finite_diff_check(loss, net.params) < 1e-4

    def test_terminal_drops_bootstrap(self):
        net = make_net(seed=4)
        tr = make_transition(seed=9, reward=0.3, terminal=True)
        loss = net.td_loss([tr], gamma=0.99)
        q = float(net.local_q(tr.traj, tr.action).value)
        assert float(loss.value) == pytest.approx((q - 0.3) ** 2)

    def test_nonterminal_uses_target_max(self):
        net = make_net(seed=5)
        tr = make_transition(seed=10, reward=0.3, terminal=False)
        loss = net.td_loss([tr], gamma=0.9)
        q = float(net.local_q(tr.traj, tr.action).value)
        target = 0.3 + 0.9 * net.max_target_q(tr.next_traj)
        assert float(loss.value) == pytest.approx((q - target) ** 2)

    def test_no_gradient_into_target(self):
        net = make_net(seed=6)
        loss = net.td_loss([make_transition(seed=11)], gamma=0.9)
        net.params.zero_grads()
        loss.backward()
        assert all(t.grad is None for t in net.target.tensors())

    def test_validation(self):
        net = make_net()
        with pytest.raises(ValueError):
            net.td_loss([], gamma=0.9)
        with pytest.raises(ValueError):
            net.td_loss([make_transition()], gamma=1.0)


class TestSoftUpdate:
    def test_blend_arithmetic(self):
        live, target = ParamStore(), ParamStore()
        live.add("w", np.array([1.0]))
        target.add("w", np.array([0.0]))
        soft_update(live, target, tau=0.25)
        assert target["w"].value[0] == pytest.approx(0.25)

    def test_tau_one_copies(self):
        net = make_net(seed=7)
        net.params["q.w1"].value += 0.5
        net.soft_update(tau=1.0)
        np.testing.assert_allclose(net.target["q.w1"].value, net.params["q.w1"].value)

    def test_tau_validated(self):
        live, target = ParamStore(), ParamStore()
        live.add("w", np.ones(1))
        target.add("w", np.ones(1))
        with pytest.raises(ValueError):
            soft_update(live, target, tau=0.0)

    def test_repeated_updates_converge_to_live(self):
        net = make_net(seed=8)
        net.params["q.w2"].value += 1.0
        for _ in range(2000):
            net.soft_update(tau=0.01)
        np.testing.assert_allclose(net.target["q.w2"].value,
                                   net.params["q.w2"].value, atol=1e-6)


class TestBeliefEntropy:
    def test_uniform_maximizes(self):
        d = 5
        uniform = np.zeros(d)
        peaked = np.array([50.0, 0, 0, 0, 0])
        assert belief_entropy([uniform]) == pytest.approx(np.log(d))
        assert belief_entropy([peaked]) < 0.01

    @settings(max_examples=30)
    @given(st.lists(st.lists(st.floats(-30, 30), min_size=3, max_size=3),
                    min_size=1, max_size=4))
    def test_bounds(self, beliefs):
        h = belief_entropy([np.array(b) for b in beliefs])
        assert -1e-9 <= h <= len(beliefs) * np.log(3) + 1e-9

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            belief_entropy([])
