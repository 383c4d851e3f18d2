"""AdamW update rule and learning-rate schedule tests."""

import numpy as np
import pytest

from pixelcoder.optim import OptimizerConfig, OptimizerState, adamw_step, lr_at
from pixelcoder.tensor import Tensor


def cfg(**kw):
    base = dict(
        beta1=0.9,
        beta2=0.999,
        epsilon=1e-8,
        weight_decay=0.0,
        peak_lr=1.5e-4,
        min_lr=1e-5,
        warmup_steps=50_000,
        total_steps=1_000_000,
        schedule_kind="warmup_cosine",
    )
    base.update(kw)
    return OptimizerConfig(**base)


class TestAdamW:
    def test_first_step_hand_derived(self):
        # theta=0, g=1, fresh state: m_hat = v_hat = 1, so step is -lr/(1+eps)
        p = Tensor(np.zeros(4, dtype=np.float32), requires_grad=True)
        p.grad = np.ones(4, dtype=np.float32)
        params = {"p": p}
        state = OptimizerState.for_params(params)
        adamw_step(params, state, cfg(), lr=0.1)
        expected = -0.1 * (1.0 / (1.0 + 1e-8))
        assert np.abs(p.data - expected).max() < 1e-7
        assert state.step == 1

    def test_zero_grad_no_decay_is_identity(self):
        vals = np.array([1.5, -2.0, 0.25], dtype=np.float32)
        p = Tensor(vals.copy(), requires_grad=True)
        p.grad = np.zeros(3, dtype=np.float32)
        params = {"p": p}
        state = OptimizerState.for_params(params)
        for _ in range(5):
            adamw_step(params, state, cfg(), lr=0.1)
        assert np.array_equal(p.data, vals)

    def test_zero_grad_with_decay_shrinks_exactly(self):
        vals = np.array([4.0, -8.0], dtype=np.float32)
        p = Tensor(vals.copy(), requires_grad=True)
        p.grad = np.zeros(2, dtype=np.float32)
        params = {"p": p}
        state = OptimizerState.for_params(params)
        lr, wd = 0.01, 0.5
        expected = vals.copy()
        for _ in range(3):
            adamw_step(params, state, cfg(weight_decay=wd), lr=lr)
            expected = expected * np.float32(1.0 - lr * wd)
        assert np.allclose(p.data, expected, rtol=1e-7)

    def test_wd_zero_matches_plain_adam_reference(self):
        rng = np.random.default_rng(0)
        theta = rng.standard_normal(6).astype(np.float32)
        p = Tensor(theta.copy(), requires_grad=True)
        params = {"p": p}
        state = OptimizerState.for_params(params)
        # independent reference implementation of Adam
        m = np.zeros(6)
        v = np.zeros(6)
        ref = theta.astype(np.float64)
        b1, b2, eps, lr = 0.9, 0.999, 1e-8, 0.05
        for t in range(1, 6):
            g = rng.standard_normal(6).astype(np.float32)
            p.grad = g.copy()
            adamw_step(params, state, cfg(), lr=lr)
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            ref = ref - lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
        assert np.allclose(p.data, ref, atol=1e-6)

    def test_step_counter_increments(self):
        p = Tensor(np.zeros(1), requires_grad=True)
        params = {"p": p}
        state = OptimizerState.for_params(params)
        for want in range(1, 4):
            adamw_step(params, state, cfg(), lr=0.0)
            assert state.step == want

    def test_shape_mismatch_rejected(self):
        p = Tensor(np.zeros(3), requires_grad=True)
        p.grad = np.zeros(4, dtype=np.float32)
        params = {"p": p}
        state = OptimizerState.for_params(params)
        with pytest.raises(ValueError):
            adamw_step(params, state, cfg(), lr=0.1)

    def test_negative_lr_rejected(self):
        p = Tensor(np.zeros(1), requires_grad=True)
        params = {"p": p}
        with pytest.raises(ValueError):
            adamw_step(params, OptimizerState.for_params(params), cfg(), lr=-1.0)


class TestSchedule:
    def test_warmup_endpoints(self):
        c = cfg()
        assert lr_at(0, c) == 0.0
        assert lr_at(c.warmup_steps, c) == pytest.approx(1.5e-4)

    def test_cosine_ends_at_min(self):
        c = cfg()
        assert lr_at(c.total_steps, c) == pytest.approx(1e-5)

    def test_linear_ends_at_min(self):
        c = cfg(schedule_kind="warmup_linear")
        assert lr_at(c.total_steps, c) == pytest.approx(1e-5)
        mid = (c.warmup_steps + c.total_steps) // 2
        expected = (c.peak_lr + c.min_lr) / 2.0
        assert lr_at(mid, c) == pytest.approx(expected, rel=1e-4)

    def test_continuous_at_warmup_boundary(self):
        for kind in ("warmup_cosine", "warmup_linear"):
            c = cfg(warmup_steps=1000, total_steps=10_000, schedule_kind=kind)
            below = lr_at(999, c)
            at = lr_at(1000, c)
            above = lr_at(1001, c)
            assert abs(at - below) < c.peak_lr * 2e-3
            assert abs(above - at) < c.peak_lr * 2e-3

    def test_monotone_nonincreasing_after_warmup(self):
        for kind in ("warmup_cosine", "warmup_linear"):
            c = cfg(warmup_steps=100, total_steps=5000, schedule_kind=kind)
            values = [lr_at(s, c) for s in range(100, 5001)]
            assert all(a >= b for a, b in zip(values, values[1:]))

    def test_out_of_range_rejected(self):
        c = cfg(warmup_steps=10, total_steps=100)
        with pytest.raises(ValueError):
            lr_at(-1, c)
        with pytest.raises(ValueError):
            lr_at(101, c)

    def test_config_invariants_enforced(self):
        with pytest.raises(ValueError):
            cfg(warmup_steps=11, total_steps=10)
        with pytest.raises(ValueError):
            cfg(min_lr=1.0, peak_lr=0.5)
        with pytest.raises(ValueError):
            cfg(schedule_kind="staircase")
        with pytest.raises(ValueError):
            cfg(beta1=1.0)
