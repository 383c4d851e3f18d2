"""AdamW with decoupled weight decay and warmup learning-rate schedules."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor

SCHEDULE_KINDS = ("warmup_cosine", "warmup_linear")


@dataclass
class OptimizerConfig:
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    weight_decay: float = 0.05
    peak_lr: float = 1.5e-4
    min_lr: float = 1e-5
    warmup_steps: int = 50_000
    total_steps: int = 1_000_000
    schedule_kind: str = "warmup_cosine"

    def __post_init__(self):
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ValueError("betas must lie in (0, 1)")
        if self.epsilon <= 0.0:
            raise ValueError("epsilon must be positive")
        if self.weight_decay < 0.0:
            raise ValueError("weight_decay must be nonnegative")
        if self.peak_lr <= 0.0 or self.min_lr <= 0.0:
            raise ValueError("learning rates must be positive")
        if self.min_lr > self.peak_lr:
            raise ValueError("min_lr must not exceed peak_lr")
        if self.warmup_steps < 0 or self.total_steps <= 0:
            raise ValueError("step counts must be positive")
        if self.warmup_steps > self.total_steps:
            raise ValueError("warmup_steps must not exceed total_steps")
        if self.schedule_kind not in SCHEDULE_KINDS:
            raise ValueError(f"unknown schedule {self.schedule_kind!r}")


@dataclass
class OptimizerState:
    """Per-parameter first/second moment arrays plus the shared step counter."""

    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0

    @classmethod
    def for_params(cls, params: dict) -> "OptimizerState":
        state = cls()
        for name, p in params.items():
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        return state


def adamw_step(params: dict, state: OptimizerState, cfg: OptimizerConfig, lr: float) -> None:
    """One AdamW update in place: bias-corrected Adam plus decoupled decay.

    Parameters with ``grad is None`` are treated as having zero gradient
    (their moments decay and weight decay still applies).
    """
    if lr < 0.0:
        raise ValueError("lr must be nonnegative")
    state.step += 1
    t = state.step
    bc1 = 1.0 - cfg.beta1**t
    bc2 = 1.0 - cfg.beta2**t
    for name, p in params.items():
        if not isinstance(p, Tensor):
            raise TypeError(f"parameter {name!r} is not a Tensor")
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        if g.shape != p.data.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.data.shape} for {name!r}")
        m = state.m[name]
        v = state.v[name]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * g * g
        m_hat = m / bc1
        v_hat = v / bc2
        p.data -= (lr * (m_hat / (np.sqrt(v_hat) + cfg.epsilon))).astype(p.data.dtype)
        if cfg.weight_decay > 0.0:
            p.data -= (lr * cfg.weight_decay) * p.data


def lr_at(step: int, cfg: OptimizerConfig) -> float:
    """Learning rate at a step: linear ramp to peak, then decay to min_lr."""
    if step < 0 or step > cfg.total_steps:
        raise ValueError(f"step {step} outside [0, {cfg.total_steps}]")
    if step < cfg.warmup_steps:
        return cfg.peak_lr * step / cfg.warmup_steps
    decay_span = cfg.total_steps - cfg.warmup_steps
    if decay_span == 0:
        return cfg.peak_lr
    progress = (step - cfg.warmup_steps) / decay_span
    if cfg.schedule_kind == "warmup_cosine":
        return cfg.min_lr + 0.5 * (cfg.peak_lr - cfg.min_lr) * (1.0 + float(np.cos(np.pi * progress)))
    return cfg.peak_lr + (cfg.min_lr - cfg.peak_lr) * progress
