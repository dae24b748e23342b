import numpy as np
import pytest

from lapgcn.errors import NumericalError
from lapgcn.model import ModelConfig, ModelParams, forward
from lapgcn.numkit import Rng
from lapgcn.simdata import GeneratorConfig, gen_dataset
from lapgcn.train import (
    AdamState,
    TrainSchedule,
    adam_step,
    adam_step_arrays,
    backward,
    grad_check,
    history_csv,
    loss,
    train_loop,
)

TINY = ModelConfig(
    n_frames=4, h=2, w=2, c_raw=3, c=4, g_n=2, g_dim=5, n_out=6, n_cls=2,
    beta=0.5, lam=1e-3,
)
TINY_GEN = GeneratorConfig(
    n_frames=4, h=2, w=2, c_raw=3, jitter=0.2, n_train=8, n_val=2, n_test=4, seed=21
)


def tiny_sample(i=0, split="train"):
    return gen_dataset(TINY_GEN, split)[i]


def cfg_with(**kw):
    return ModelConfig(**{**TINY.to_dict(), **kw})


class TestLoss:
    def test_perfect_prediction_zero_ce(self):
        trace = forward(tiny_sample(), ModelParams.init(TINY, Rng(1)), TINY)
        trace.probs = np.array([1.0, 0.0])
        lb = loss(trace, 0, cfg_with(use_sc=False))
        assert lb.ce == 0.0
        assert lb.total == 0.0

    def test_uniform_two_class_is_ln2(self):
        trace = forward(tiny_sample(), ModelParams.zeros(TINY), cfg_with(use_sc=False))
        lb = loss(trace, 1, cfg_with(use_sc=False))
        assert lb.ce == pytest.approx(np.log(2.0), rel=1e-15)

    def test_sparsity_hand_case(self):
        trace = forward(tiny_sample(), ModelParams.init(TINY, Rng(2)), TINY)
        trace.x = np.ones((4, 3))
        lb = loss(trace, 0, cfg_with(lam=1e-5))
        assert lb.sc == pytest.approx(1.2e-4, rel=1e-12)

    def test_total_is_exact_sum(self):
        trace = forward(tiny_sample(), ModelParams.init(TINY, Rng(3)), TINY)
        lb = loss(trace, 1, TINY)
        assert lb.total == lb.ce + lb.sc

    def test_sc_off_means_zero(self):
        trace = forward(tiny_sample(), ModelParams.init(TINY, Rng(3)), TINY)
        assert loss(trace, 0, cfg_with(use_sc=False)).sc == 0.0

    def test_log_clamp_keeps_loss_finite(self):
        trace = forward(tiny_sample(), ModelParams.init(TINY, Rng(4)), TINY)
        trace.probs = np.array([0.0, 1.0])
        lb = loss(trace, 0, TINY)
        assert np.isfinite(lb.ce)
        assert lb.ce == pytest.approx(-np.log(1e-300))

    def test_label_out_of_range(self):
        trace = forward(tiny_sample(), ModelParams.init(TINY, Rng(5)), TINY)
        with pytest.raises(ValueError, match="label"):
            loss(trace, 2, TINY)


class TestBackward:
    def test_head_gradient_hand_case(self):
        # with w_out = identity the head passes the (nonnegative) pooled
        # vector through, so grad(w_cls) = outer(pooled, probs - onehot)
        cfg = cfg_with(n_out=TINY.g_dim, use_sc=False, lam=0.0)
        params = ModelParams.init(cfg, Rng(6))
        params.w_out = np.eye(cfg.g_dim)
        params.w_cls = np.zeros((cfg.g_dim, cfg.n_cls))
        s = tiny_sample()
        trace = forward(s, params, cfg)
        grads = backward(trace, 1, params, cfg)
        onehot = np.array([0.0, 1.0])
        expected = np.outer(trace.pooled, trace.probs - onehot)
        assert np.allclose(grads.w_cls, expected, atol=1e-14)

    @pytest.mark.parametrize("use_glsp", [True, False])
    @pytest.mark.parametrize("use_sc", [True, False])
    def test_matches_finite_differences(self, use_glsp, use_sc):
        cfg = cfg_with(use_glsp=use_glsp, use_sc=use_sc)
        for seed in (0, 1):
            params = ModelParams.init(cfg, Rng(seed))
            s = tiny_sample(seed)
            err = grad_check(params, s, s.label, cfg)
            assert err < 1e-4

    def test_no_kinks_without_sparsity_is_tighter(self):
        cfg = cfg_with(use_sc=False, lam=0.0)
        params = ModelParams.init(cfg, Rng(7))
        s = tiny_sample(1)
        assert grad_check(params, s, s.label, cfg) < 1e-5

    def test_zero_feature_rows_contribute_no_l1_gradient(self):
        # an all-black sample with zero bias has x identically zero, so the
        # L1 path (sign(0) = 0 through an inactive rectifier) vanishes
        cfg = cfg_with(use_sc=True, lam=0.5)
        params = ModelParams.init(cfg, Rng(8))
        s = tiny_sample()
        black = s.copy()
        black.raw[:] = 0.0
        t_sc = forward(black, params, cfg)
        assert np.array_equal(t_sc.x, np.zeros_like(t_sc.x))
        g_sc = backward(t_sc, black.label, params, cfg)
        cfg_off = cfg_with(use_sc=False, lam=0.5)
        g_off = backward(forward(black, params, cfg_off), black.label, params, cfg_off)
        assert np.array_equal(g_sc.w_enc, g_off.w_enc)
        assert np.array_equal(g_sc.b_enc, g_off.b_enc)

    def test_gradient_shapes_mirror_params(self):
        params = ModelParams.init(TINY, Rng(9))
        s = tiny_sample()
        grads = backward(forward(s, params, TINY), s.label, params, TINY)
        for (_, p), (_, g) in zip(params.named(), grads.named()):
            assert p.shape == g.shape


class TestGradCheckTool:
    def test_detects_corrupted_gradient(self):
        params = ModelParams.init(TINY, Rng(10))
        s = tiny_sample()
        good = backward(forward(s, params, TINY), s.label, params, TINY)
        good.w_cls = good.w_cls + 0.5
        assert grad_check(params, s, s.label, TINY, grads=good) > 1e-2

    def test_rejects_large_models(self):
        big = ModelConfig(n_frames=16, h=4, w=4, c_raw=8, c=16, g_n=4, g_dim=32, n_out=64)
        params = ModelParams.init(big, Rng(11))
        s = gen_dataset(GeneratorConfig(seed=1), "train")[0]
        with pytest.raises(ValueError, match="tiny"):
            grad_check(params, s, s.label, big)


class TestAdam:
    def test_zero_gradient_is_fixed_point(self):
        params = [np.array([1.0, -2.0, 3.0])]
        state = AdamState.for_arrays(params, lr=0.1)
        out = adam_step_arrays(params, [np.zeros(3)], state)
        assert np.array_equal(out[0], params[0])

    def test_constant_gradient_step_magnitude_approaches_lr(self):
        lr = 1e-3
        theta = [np.array([0.5])]
        g = [np.array([3.7])]
        state = AdamState.for_arrays(theta, lr=lr)
        prev = theta[0].copy()
        for _ in range(1000):
            theta = adam_step_arrays(theta, g, state)
        step = prev - theta[0]  # cumulative; take the last single step instead
        before = theta[0].copy()
        theta = adam_step_arrays(theta, g, state)
        last_step = abs(float(theta[0] - before))
        assert last_step == pytest.approx(lr, rel=1e-3)

    def test_first_step_is_sign_scaled(self):
        lr = 1e-2
        for g0 in (1e-6, 1.0, 1e4):
            theta = [np.array([0.0])]
            state = AdamState.for_arrays(theta, lr=lr)
            out = adam_step_arrays(theta, [np.array([g0])], state)
            assert float(out[0]) == pytest.approx(-lr, rel=1e-3)

    def test_nonfinite_gradient_aborts(self):
        theta = [np.zeros(2)]
        state = AdamState.for_arrays(theta)
        with pytest.raises(NumericalError):
            adam_step_arrays(theta, [np.array([1.0, np.nan])], state)

    def test_model_params_wrapper(self):
        params = ModelParams.init(TINY, Rng(12))
        s = tiny_sample()
        grads = backward(forward(s, params, TINY), s.label, params, TINY)
        state = AdamState.for_arrays(params.flat(), lr=1e-3)
        updated = adam_step(params, grads, state)
        assert state.step == 1
        for (_, a), (_, b) in zip(params.named(), updated.named()):
            assert a.shape == b.shape
        assert not np.array_equal(updated.w_cls, params.w_cls)


class TestTrainLoop:
    SCHED = TrainSchedule(epochs=14, batch_size=4, lr=5e-3, decay_factor=0.1, decay_every=10)

    def test_reaches_high_accuracy_on_separable_toy(self):
        data = gen_dataset(TINY_GEN, "train")
        params, history = train_loop(data, TINY, self.SCHED, Rng(31))
        assert history[-1].train_acc >= 0.95

    def test_net_descent(self):
        data = gen_dataset(TINY_GEN, "train")
        _, history = train_loop(data, TINY, self.SCHED, Rng(32))
        for row in history[10:]:
            assert row.total <= history[0].total

    def test_bit_identical_reruns(self):
        data = gen_dataset(TINY_GEN, "train")
        p1, h1 = train_loop(data, TINY, self.SCHED, Rng(33))
        p2, h2 = train_loop(data, TINY, self.SCHED, Rng(33))
        assert h1 == h2
        for (_, a), (_, b) in zip(p1.named(), p2.named()):
            assert np.array_equal(a, b)

    def test_lr_decay_recorded(self):
        data = gen_dataset(TINY_GEN, "train")
        _, history = train_loop(data, TINY, self.SCHED, Rng(34))
        assert history[0].lr == self.SCHED.lr
        assert history[-1].lr == pytest.approx(self.SCHED.lr * 0.1)

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            train_loop([], TINY, self.SCHED, Rng(35))

    def test_history_csv_schema(self):
        data = gen_dataset(TINY_GEN, "train")
        _, history = train_loop(data, TINY, TrainSchedule(epochs=2, batch_size=4), Rng(36))
        text = history_csv(history)
        lines = text.strip().split("\n")
        assert lines[0] == "epoch,ce,sc,total,train_acc,lr"
        assert len(lines) == 3
        assert lines[1].startswith("0,")
