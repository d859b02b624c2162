import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from econ.kernel import (
    NonFiniteError,
    OptimizerConfig,
    ParamStore,
    Tensor,
    adam_step,
    attention_params,
    concat,
    cosine_sim,
    cosine_sim_node,
    finite_diff_check,
    multi_head_attention,
    sigmoid,
    softmax,
    stack,
)
from econ.kernel.params import CHECKPOINT_VERSION


def rng(seed=0):
    return np.random.default_rng(seed)


class TestTensorOps:
    def test_add_broadcast_gradients(self):
        a = Tensor(np.ones((3, 4)), requires_grad=True)
        b = Tensor(np.ones(4), requires_grad=True)
        (a + b).sum().backward()
        assert a.grad.shape == (3, 4)
        np.testing.assert_allclose(b.grad, np.full(4, 3.0))

    def test_matmul_vector_matrix(self):
        x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
        w = Tensor(np.array([[1.0, 0.0, 2.0], [0.0, 1.0, 1.0]]), requires_grad=True)
        (x @ w).sum().backward()
        np.testing.assert_allclose(x.grad, w.value.sum(axis=1))
        np.testing.assert_allclose(w.grad, np.outer(x.value, np.ones(3)))

    def test_getitem_scatter(self):
        x = Tensor(np.arange(6.0).reshape(3, 2), requires_grad=True)
        (x[1] * 2.0).sum().backward()
        expected = np.zeros((3, 2))
        expected[1] = 2.0
        np.testing.assert_allclose(x.grad, expected)

    def test_backward_requires_scalar(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(ValueError):
            x.backward()

    def test_nonfinite_rejected(self):
        with pytest.raises(NonFiniteError):
            Tensor(np.array([1.0, np.nan]))
        with pytest.raises(NonFiniteError):
            Tensor(0.0).log()

    def test_diamond_graph_accumulates(self):
        x = Tensor(2.0, requires_grad=True)
        y = x * x + x * 3.0
        y.backward()
        assert x.grad == pytest.approx(2 * 2.0 + 3.0)

    def test_softmax_rows_sum_to_one(self):
        x = Tensor(rng().normal(size=(4, 5)))
        np.testing.assert_allclose(x.softmax().value.sum(axis=1), np.ones(4))

    def test_concat_and_stack_grads(self):
        a = Tensor(np.ones(2), requires_grad=True)
        b = Tensor(np.ones(3), requires_grad=True)
        concat([a, b]).sum().backward()
        np.testing.assert_allclose(a.grad, np.ones(2))
        np.testing.assert_allclose(b.grad, np.ones(3))
        c = Tensor(np.ones(2), requires_grad=True)
        (stack([a.detach(), c]) * 2.0).sum().backward()
        np.testing.assert_allclose(c.grad, np.full(2, 2.0))

    def test_composite_gradient_matches_finite_difference(self):
        store = ParamStore()
        store.create("w1", (5, 4), rng(1), fan_in=5)
        store.create("b1", (4,), rng(2))
        store.create("w2", (4,), rng(3), fan_in=4)
        x = rng(4).normal(size=5)

        def loss():
            h = (Tensor(x) @ store["w1"] + store["b1"]).relu()
            z = h.dot(store["w2"]).sigmoid()
            return (z - 0.3).square()

        assert finite_diff_check(loss, store) < 1e-6


class TestScalarHelpers:
    def test_sigmoid_known_values(self):
        assert sigmoid(0.0) == pytest.approx(0.5)
        assert sigmoid(710.0) == pytest.approx(1.0)
        assert sigmoid(-710.0) == pytest.approx(0.0)
        with pytest.raises(NonFiniteError):
            sigmoid(float("nan"))

    def test_cosine_sim_basics(self):
        assert cosine_sim([1, 0], [0, 1]) == pytest.approx(0.0)
        assert cosine_sim([1, 2], [2, 4]) == pytest.approx(1.0)
        with pytest.raises(ValueError):
            cosine_sim([1, 0], [1, 0, 0])
        with pytest.warns(RuntimeWarning):
            assert cosine_sim([0, 0], [1, 0]) == 0.0

    @given(st.lists(st.floats(-100, 100), min_size=2, max_size=8),
           st.lists(st.floats(-100, 100), min_size=2, max_size=8))
    def test_cosine_sim_bounded(self, u, v):
        n = min(len(u), len(v))
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            s = cosine_sim(u[:n], v[:n])
        assert -1.0 <= s <= 1.0

    def test_cosine_sim_node_gradient(self):
        store = ParamStore()
        store.create("u", (4,), rng(5))
        v = rng(6).normal(size=4)

        def loss():
            return (1.0 - cosine_sim_node(store["u"], Tensor(v))).square()

        assert finite_diff_check(loss, store) < 1e-6

    def test_softmax_stability_and_errors(self):
        out = softmax([1000.0, 1000.0])
        np.testing.assert_allclose(out, [0.5, 0.5])
        with pytest.raises(ValueError):
            softmax([])
        with pytest.raises(ValueError):
            softmax([1.0], scale=0.0)


class TestAttention:
    def test_one_head_sharp_softmax_selects_value(self):
        # identity projections, one query equal to the first of two keys,
        # large scale: attention weight on value_1 approaches 1
        store = ParamStore()
        d = 2
        store.add("a.w_q0", np.eye(d))
        store.add("a.w_k0", np.eye(d))
        store.add("a.w_v0", np.eye(d))
        store.add("a.w_o", np.eye(d))
        keys = Tensor(np.array([[1.0, 0.0], [0.0, 1.0]]))
        values = Tensor(np.array([[5.0, 0.0], [0.0, 7.0]]))
        query = Tensor(np.array([[1.0, 0.0]]))
        out = multi_head_attention(query, keys, values, store, heads=1,
                                   prefix="a", scale=50.0)
        np.testing.assert_allclose(out.value[0], [5.0, 0.0], atol=1e-9)

    def test_shapes_and_gradient(self):
        store = ParamStore()
        attention_params(store, "enc", rng(7), in_dim=6, heads=2, model_dim=8)
        x = rng(8).normal(size=(3, 6))

        def loss():
            return multi_head_attention(Tensor(x), Tensor(x), Tensor(x),
                                        store, heads=2, prefix="enc").square().sum()

        assert finite_diff_check(loss, store) < 1e-5

    def test_mismatched_inputs_error(self):
        store = ParamStore()
        attention_params(store, "enc", rng(9), in_dim=4, heads=1, model_dim=4)
        q = Tensor(np.ones((2, 3)))
        kv = Tensor(np.ones((2, 4)))
        with pytest.raises(ValueError, match="w_q0"):
            multi_head_attention(q, kv, kv, store, heads=1, prefix="enc")
        with pytest.raises(ValueError, match="disagree"):
            multi_head_attention(kv, kv, Tensor(np.ones((3, 4))), store,
                                 heads=1, prefix="enc")


class TestOptimizer:
    def test_adam_first_step_size(self):
        # with bias correction the first step is ~lr in the gradient direction
        store = ParamStore()
        store.add("w", np.array([1.0]))
        store["w"].grad = np.array([0.5])
        adam_step(store, OptimizerConfig(learning_rate=0.1))
        assert store["w"].value[0] == pytest.approx(0.9, abs=1e-6)
        assert store.step_count == 1
        assert store["w"].grad is None

    def test_missing_grad_is_zero(self):
        store = ParamStore()
        store.add("w", np.array([2.0]))
        adam_step(store, OptimizerConfig())
        assert store["w"].value[0] == pytest.approx(2.0)

    def test_nan_grad_rejected(self):
        store = ParamStore()
        store.add("w", np.array([1.0]))
        store["w"].grad = np.array([np.nan])
        with pytest.raises(ValueError, match="'w'"):
            adam_step(store, OptimizerConfig())

    def test_weight_decay_decoupled(self):
        store = ParamStore()
        store.add("w", np.array([1.0]))
        store["w"].grad = np.array([0.0])
        adam_step(store, OptimizerConfig(learning_rate=0.1, weight_decay=0.5))
        assert store["w"].value[0] == pytest.approx(0.95)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            OptimizerConfig(learning_rate=0.0)
        with pytest.raises(ValueError):
            OptimizerConfig(beta1=1.0)

    def test_descends_quadratic(self):
        store = ParamStore()
        store.add("w", np.array([3.0, -2.0]))
        for _ in range(500):
            loss = store["w"].square().sum()
            store.zero_grads()
            loss.backward()
            adam_step(store, OptimizerConfig(learning_rate=0.05))
        assert np.abs(store["w"].value).max() < 1e-2


class TestParamStore:
    def test_checkpoint_round_trip(self, tmp_path):
        store = ParamStore()
        store.create("a.w", (3, 2), rng(11), fan_in=3)
        store.add("a.b", np.zeros(2))
        store.step_count = 7
        path = tmp_path / "ckpt.json"
        store.save(path)
        loaded = ParamStore.load(path)
        assert loaded.checksum() == store.checksum()
        assert loaded.step_count == 7

    def test_version_gate(self, tmp_path):
        import json

        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"version": "other", "params": {}, "step_count": 0}))
        with pytest.raises(ValueError, match="version"):
            ParamStore.load(path)
        assert CHECKPOINT_VERSION == "econ-ckpt-v1"

    def test_checksum_tracks_values(self):
        store = ParamStore()
        store.add("w", np.ones(3))
        before = store.checksum()
        store["w"].value[0] = 2.0
        assert store.checksum() != before

    def test_duplicate_name_rejected(self):
        store = ParamStore()
        store.add("w", np.ones(1))
        with pytest.raises(KeyError):
            store.add("w", np.ones(1))

    def test_clone_is_independent(self):
        store = ParamStore()
        store.add("w", np.ones(2))
        other = store.clone()
        other["w"].value[0] = 5.0
        assert store["w"].value[0] == 1.0
