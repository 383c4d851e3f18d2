"""Span masking: weighted span lengths with side-clearance guards.

Spans of 1..S patches are drawn with probabilities given by cumulative
weights, placed uniformly, and accepted only when the S-sized neighborhoods
on both sides are still unmasked, until just over ratio R of the N patches
is covered. Accepted runs therefore never exceed S and are always separated
by at least one unmasked patch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_CUMULATIVE_WEIGHTS = (0.2, 0.4, 0.6, 0.8, 0.9, 1.0)


@dataclass(frozen=True)
class MaskConfig:
    num_patches: int
    ratio: float = 0.25
    max_span: int = 6
    cumulative_weights: tuple = DEFAULT_CUMULATIVE_WEIGHTS

    def __post_init__(self):
        if not 0.0 < self.ratio < 1.0:
            raise ValueError("masking ratio must lie in (0, 1)")
        if self.max_span < 1:
            raise ValueError("max span must be >= 1")
        w = tuple(float(x) for x in self.cumulative_weights)
        if len(w) != self.max_span:
            raise ValueError(f"need {self.max_span} cumulative weights, got {len(w)}")
        if any(b < a for a, b in zip(w, w[1:])):
            raise ValueError("cumulative weights must be nondecreasing")
        if abs(w[-1] - 1.0) > 1e-9:
            raise ValueError("cumulative weights must end at 1")
        object.__setattr__(self, "cumulative_weights", w)

    def span_probabilities(self) -> np.ndarray:
        w = np.asarray(self.cumulative_weights)
        return np.diff(np.concatenate([[0.0], w]))

    def expected_span_length(self) -> float:
        return float(np.sum(self.span_probabilities() * np.arange(1, self.max_span + 1)))

    @classmethod
    def fitted(cls, num_patches: int, ratio: float = 0.25, max_span: int = 6,
               cumulative_weights: tuple = DEFAULT_CUMULATIVE_WEIGHTS) -> "MaskConfig":
        """Config with the span length clamped for short sequences."""
        s = min(max_span, max(1, num_patches - 1))
        if s < max_span:
            w = tuple(cumulative_weights[: s - 1]) + (1.0,)
        else:
            w = cumulative_weights
        return cls(num_patches=num_patches, ratio=ratio, max_span=s, cumulative_weights=w)


@dataclass(frozen=True)
class PatchMask:
    """The masked index set, with the sampling trace used to build it."""

    indices: tuple  # sorted masked patch indices
    accepted_spans: tuple = ()  # (start, length) in acceptance order
    sampled_lengths: tuple = ()  # every span length drawn, accepted or not

    @property
    def index_array(self) -> np.ndarray:
        return np.asarray(self.indices, dtype=np.intp)

    def __len__(self):
        return len(self.indices)

    def __contains__(self, i):
        return i in set(self.indices)

    def runs(self):
        """Maximal runs of consecutive masked indices as (start, length)."""
        out = []
        for i in self.indices:
            if out and i == out[-1][0] + out[-1][1]:
                out[-1][1] += 1
            else:
                out.append([i, 1])
        return [tuple(r) for r in out]


def sample_span_length(cfg: MaskConfig, rng: np.random.Generator) -> int:
    """Draw a span length s in [1, S] with P(s=k) = W[k-1] - W[k-2]."""
    u = rng.random()
    for k, w in enumerate(cfg.cumulative_weights, start=1):
        if u < w:
            return k
    return cfg.max_span


def generate_mask(cfg: MaskConfig, rng: np.random.Generator) -> PatchMask:
    """Sample a patch mask M with ratio * N < |M| <= ratio * N + S."""
    n, s_max = cfg.num_patches, cfg.max_span
    if n < s_max + 1:
        raise ValueError(f"need at least max_span + 1 = {s_max + 1} patches, got {n}")
    masked = np.zeros(n, dtype=bool)
    target = cfg.ratio * n
    count = 0
    spans = []
    sampled = []
    rejections = 0
    cap = 10 * n
    while count <= target:
        s = sample_span_length(cfg, rng)
        sampled.append(s)
        left = int(rng.integers(0, n - s + 1))
        blocked = masked[max(0, left - s) : left].any() or masked[left + s : left + 2 * s].any()
        fresh = int(s - masked[left : left + s].sum())
        if blocked or fresh == 0:
            # a fully re-covered span makes no progress, so it cannot feed
            # the livelock counter reset either
            rejections += 1
            if rejections >= cap:
                placed = _forced_span(masked, s_max)
                if placed is None:
                    break
                spans.append(placed)
                masked[placed[0] : placed[0] + placed[1]] = True
                count = int(masked.sum())
                rejections = 0
            continue
        rejections = 0
        masked[left : left + s] = True
        spans.append((left, s))
        count += fresh
    return PatchMask(
        indices=tuple(np.nonzero(masked)[0].tolist()),
        accepted_spans=tuple(spans),
        sampled_lengths=tuple(sampled),
    )


def _forced_span(masked: np.ndarray, s_max: int):
    """Livelock escape: mask inside the longest unmasked gap, keeping 1-wide
    buffers next to existing runs but ignoring the full clearance rule."""
    n = len(masked)
    best = None  # (length, start)
    start = None
    for i in range(n + 1):
        if i < n and not masked[i]:
            if start is None:
                start = i
        elif start is not None:
            gap = (i - start, start)
            if best is None or gap > best:
                best = gap
            start = None
    if best is None:
        return None
    length, start = best
    lo = start if start == 0 else start + 1
    hi = start + length if start + length == n else start + length - 1
    room = hi - lo
    if room < 1:
        return None
    return (lo, min(s_max, room))
