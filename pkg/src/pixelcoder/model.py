"""Masked-autoencoder core: patch embedding, visible-only encoder,
mask-filling decoder, and the normalized masked-pixel loss.

The encoder sees only the CLS slot plus unmasked patches; the decoder
re-inserts a learned mask embedding at masked positions, adds fixed
sinusoidal positions, and predicts every patch's pixels. The loss averages
squared error over Q, the masked text patches, after normalizing each
target patch to zero mean and unit variance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .masking import DEFAULT_CUMULATIVE_WEIGHTS, MaskConfig, PatchMask, generate_mask
from .optim import OptimizerConfig, OptimizerState, adamw_step, lr_at
from .render import PatchType, RenderedSequence
from .tensor import Tensor, broadcast_rows, concat, dropout, layer_norm, scatter_rows, take_rows

VARIANCE_FLOOR = 1e-6


@dataclass(frozen=True)
class PixelConfig:
    patch_size: int = 16
    channels: int = 3
    max_patches: int = 529
    enc_width: int = 768
    enc_intermediate: int = 3072
    enc_heads: int = 12
    enc_layers: int = 12
    dec_width: int = 512
    dec_intermediate: int = 2048
    dec_heads: int = 16
    dec_layers: int = 8
    layer_norm_eps: float = 1e-12
    dropout: float = 0.1
    mask_ratio: float = 0.25
    mask_max_span: int = 6
    mask_cumulative_weights: tuple = DEFAULT_CUMULATIVE_WEIGHTS

    def __post_init__(self):
        if self.enc_width % self.enc_heads or self.dec_width % self.dec_heads:
            raise ValueError("widths must be divisible by their head counts")
        if self.enc_width % 2 or self.dec_width % 2:
            raise ValueError("sinusoidal positions need even widths")
        if self.channels not in (1, 3):
            raise ValueError("channels must be 1 or 3")

    @property
    def patch_dim(self) -> int:
        return self.patch_size * self.patch_size * self.channels


# Table-driven profiles: `base` is the full-size model, `toy` runs on a laptop
BASE_PROFILE = PixelConfig()
TOY_PROFILE = PixelConfig(
    channels=1,
    max_patches=64,
    enc_width=96,
    enc_intermediate=384,
    enc_heads=4,
    enc_layers=3,
    dec_width=64,
    dec_intermediate=256,
    dec_heads=4,
    dec_layers=2,
)


def positions(length: int, width: int, dtype=np.float32) -> np.ndarray:
    """Fixed sinusoidal table; row 0 (all sin(0)/cos(0)) is the CLS slot."""
    if length < 1:
        raise ValueError("positional table needs at least one row")
    pos = np.arange(length, dtype=np.float64)[:, None]
    idx = np.arange(width // 2, dtype=np.float64)[None, :]
    angles = pos / np.power(10000.0, 2.0 * idx / width)
    table = np.zeros((length, width), dtype=np.float64)
    table[:, 0::2] = np.sin(angles)
    table[:, 1::2] = np.cos(angles)
    return table.astype(dtype)


def interpolate_positions(table: np.ndarray, new_length: int) -> np.ndarray:
    """Resample a positional table to a new length, linearly per dimension."""
    if new_length < 1:
        raise ValueError("new_length must be >= 1")
    old = table.shape[0]
    if old == 1:
        return np.repeat(table, new_length, axis=0)
    xs_old = np.linspace(0.0, 1.0, old)
    xs_new = np.linspace(0.0, 1.0, new_length)
    out = np.empty((new_length, table.shape[1]), dtype=table.dtype)
    for d in range(table.shape[1]):
        out[:, d] = np.interp(xs_new, xs_old, table[:, d].astype(np.float64))
    return out


def adapt_positions(table: np.ndarray, n_rows: int) -> np.ndarray:
    """Truncate (prefix) or interpolate the patch rows; row 0 stays the CLS slot."""
    if n_rows <= table.shape[0]:
        return table[:n_rows]
    patches = interpolate_positions(table[1:], n_rows - 1)
    return np.concatenate([table[:1], patches], axis=0)


class ModelParameters:
    """All learnable arrays, named for the checkpoint table, plus the fixed
    (non-learnable) sinusoidal position tables."""

    def __init__(self, cfg: PixelConfig, named: dict):
        self.cfg = cfg
        self.named = named
        self.enc_pos = positions(cfg.max_patches + 1, cfg.enc_width)
        self.dec_pos = positions(cfg.max_patches + 1, cfg.dec_width)
        self._enc_layers = [self._layer_view(f"enc.{i}.") for i in range(cfg.enc_layers)]
        self._dec_layers = [self._layer_view(f"dec.{i}.") for i in range(cfg.dec_layers)]

    def _layer_view(self, prefix: str) -> dict:
        n = len(prefix)
        return {k[n:]: v for k, v in self.named.items() if k.startswith(prefix)}

    @classmethod
    def init(cls, cfg: PixelConfig, rng: np.random.Generator, dtype=np.float32) -> "ModelParameters":
        named = {}

        def lin(name, d_in, d_out):
            named[name + ".w"], named[name + ".b"] = nn.init_linear(d_in, d_out, rng, dtype=dtype)

        lin("patch_proj", cfg.patch_dim, cfg.enc_width)
        named["cls"] = Tensor(nn.trunc_normal((1, cfg.enc_width), rng, dtype=dtype), requires_grad=True, dtype=dtype)
        for i in range(cfg.enc_layers):
            for k, v in nn.init_encoder_layer(cfg.enc_width, cfg.enc_intermediate, rng, dtype=dtype).items():
                named[f"enc.{i}.{k}"] = v
        named["enc_norm.g"], named["enc_norm.b"] = nn.init_layer_norm(cfg.enc_width, dtype=dtype)
        lin("dec_proj", cfg.enc_width, cfg.dec_width)
        named["mask_embed"] = Tensor(
            nn.trunc_normal((1, cfg.dec_width), rng, dtype=dtype), requires_grad=True, dtype=dtype
        )
        for i in range(cfg.dec_layers):
            for k, v in nn.init_encoder_layer(cfg.dec_width, cfg.dec_intermediate, rng, dtype=dtype).items():
                named[f"dec.{i}.{k}"] = v
        named["dec_norm.g"], named["dec_norm.b"] = nn.init_layer_norm(cfg.dec_width, dtype=dtype)
        lin("out_proj", cfg.dec_width, cfg.patch_dim)
        return cls(cfg, named)

    def zero_grad(self):
        for p in self.named.values():
            p.zero_grad()

    def encoder_layer_params(self, i: int) -> dict:
        return self._enc_layers[i]

    def decoder_layer_params(self, i: int) -> dict:
        return self._dec_layers[i]


@dataclass
class EncoderOutput:
    hidden: Tensor  # (1 + visible, width); row 0 is CLS
    visible_indices: tuple  # original patch indices, ascending
    num_patches: int
    valid_len: int  # CLS + visible non-PAD rows; PADs sit past this prefix

    @property
    def visible_count(self) -> int:
        return len(self.visible_indices)


@dataclass
class LossReport:
    value: float
    q_indices: tuple  # masked AND text patches: the set the loss averaged over
    empty_q: bool = False
    node: Tensor | None = None  # autodiff node, present when built for training


def flatten_patches(pixels: np.ndarray, patch_size: int) -> np.ndarray:
    """(H, W, C) image -> (N, P*P*C) rows in row, column, channel order."""
    h, w, c = pixels.shape
    if w % patch_size:
        raise ValueError(f"pixel width {w} is not a multiple of patch size {patch_size}")
    n = w // patch_size
    out = np.empty((n, patch_size * patch_size * c), dtype=pixels.dtype)
    for i in range(n):
        out[i] = pixels[:, i * patch_size : (i + 1) * patch_size, :].reshape(-1)
    return out


def unflatten_patches(rows: np.ndarray, patch_size: int, channels: int) -> np.ndarray:
    n = rows.shape[0]
    out = np.empty((patch_size, n * patch_size, channels), dtype=rows.dtype)
    for i in range(n):
        out[:, i * patch_size : (i + 1) * patch_size, :] = rows[i].reshape(patch_size, patch_size, channels)
    return out


def normalize_patch_rows(rows: np.ndarray):
    """Per-patch standardization with a variance floor; returns (norm, mean, std)."""
    mean = rows.mean(axis=1, keepdims=True)
    var = rows.var(axis=1, keepdims=True)
    std = np.sqrt(np.maximum(var, VARIANCE_FLOOR))
    return (rows - mean) / std, mean, std


def patch_embed(seq, params: ModelParameters) -> Tensor:
    """Flatten each patch and apply the affine projection into the encoder width."""
    pixels = seq.pixels if isinstance(seq, RenderedSequence) else np.asarray(seq)
    flat = flatten_patches(pixels, params.cfg.patch_size)
    if flat.shape[1] != params.cfg.patch_dim:
        raise ValueError(f"patch dim {flat.shape[1]} != configured {params.cfg.patch_dim}")
    x = Tensor(flat.astype(params.named["patch_proj.w"].data.dtype))
    return nn.linear(x, params.named["patch_proj.w"], params.named["patch_proj.b"])


def _non_pad_count(seq):
    if isinstance(seq, RenderedSequence):
        types = np.array(seq.patch_types)
        return int(np.sum(types != PatchType.PAD))
    return None  # raw pixel input: nothing known about padding


def encode(
    patches: Tensor,
    mask: PatchMask | None,
    params: ModelParameters,
    train: bool = False,
    n_valid: int | None = None,
    rng: np.random.Generator | None = None,
) -> EncoderOutput:
    """Run the visible-only encoder.

    Masked rows are dropped before any mixing, so outputs cannot depend on
    masked pixel content. ``n_valid`` is the count of non-PAD patches (they
    must form a prefix); attention never crosses into the PAD suffix.
    """
    cfg = params.cfg
    n = patches.shape[0]
    if n > cfg.max_patches:
        raise ValueError(f"{n} patches exceed max_patches={cfg.max_patches}")
    pos = adapt_positions(params.enc_pos, n + 1)
    x = patches + pos[1 : n + 1]
    if mask is None:
        visible = np.arange(n, dtype=np.intp)
    else:
        masked = np.zeros(n, dtype=bool)
        masked[mask.index_array] = True
        visible = np.nonzero(~masked)[0]
    x_vis = take_rows(x, visible)
    cls_row = params.named["cls"] + pos[0:1]
    h = concat([cls_row, x_vis], axis=0)
    if n_valid is None:
        valid_len = None
    else:
        valid_len = 1 + int(np.searchsorted(visible, n_valid))
    p_drop = cfg.dropout if train else 0.0
    h = dropout(h, p_drop, rng, train)
    for i in range(cfg.enc_layers):
        h = nn.encoder_layer(
            h,
            valid_len,
            cfg.enc_heads,
            params.encoder_layer_params(i),
            eps=cfg.layer_norm_eps,
            p_drop=p_drop,
            rng=rng,
            train=train,
        )
    h = layer_norm(h, params.named["enc_norm.g"], params.named["enc_norm.b"], cfg.layer_norm_eps)
    return EncoderOutput(
        hidden=h,
        visible_indices=tuple(int(i) for i in visible),
        num_patches=n,
        valid_len=(n + 1) if valid_len is None else valid_len,
    )


def decode(
    enc: EncoderOutput,
    mask: PatchMask | None,
    params: ModelParameters,
    train: bool = False,
    rng: np.random.Generator | None = None,
    n_valid: int | None = None,
) -> Tensor:
    """Fill masked slots with the mask embedding and predict all patch pixels.

    Returns per-patch logits (N, P*P*C); the CLS row is computed then dropped.
    """
    cfg = params.cfg
    n = enc.num_patches
    masked = tuple(mask.indices) if mask is not None else ()
    if set(masked) | set(enc.visible_indices) != set(range(n)) or set(masked) & set(enc.visible_indices):
        raise ValueError("mask does not complement the encoder's visible set")
    proj = nn.linear(enc.hidden, params.named["dec_proj.w"], params.named["dec_proj.b"])
    slots = np.concatenate([[0], np.asarray(enc.visible_indices, dtype=np.intp) + 1])
    d = scatter_rows(proj, slots, n + 1)
    if masked:
        fill = broadcast_rows(params.named["mask_embed"], len(masked))
        d = d + scatter_rows(fill, np.asarray(masked, dtype=np.intp) + 1, n + 1)
    d = d + adapt_positions(params.dec_pos, n + 1)
    valid_len = None if n_valid is None else 1 + n_valid
    p_drop = cfg.dropout if train else 0.0
    for i in range(cfg.dec_layers):
        d = nn.encoder_layer(
            d,
            valid_len,
            cfg.dec_heads,
            params.decoder_layer_params(i),
            eps=cfg.layer_norm_eps,
            p_drop=p_drop,
            rng=rng,
            train=train,
        )
    d = layer_norm(d, params.named["dec_norm.g"], params.named["dec_norm.b"], cfg.layer_norm_eps)
    logits = nn.linear(d, params.named["out_proj.w"], params.named["out_proj.b"])
    return logits[1:]


def reconstruction_loss(logits, target: RenderedSequence, mask: PatchMask, patch_size: int | None = None) -> LossReport:
    """Mean squared error against normalized targets, over Q = masked ∩ text."""
    p = patch_size or target.pixels.shape[0]
    text = set(int(i) for i in target.text_patch_indices())
    q = tuple(sorted(set(mask.indices) & text))
    if not q:
        return LossReport(value=0.0, q_indices=(), empty_q=True, node=None)
    flat = flatten_patches(target.pixels, p)
    norm, _, _ = normalize_patch_rows(flat[list(q)])
    pred = take_rows(logits, list(q)) if isinstance(logits, Tensor) else Tensor(np.asarray(logits)[list(q)])
    diff = pred - norm.astype(pred.dtype)
    node = (diff * diff).mean()
    return LossReport(value=float(node.data), q_indices=q, node=node)


def forward_loss(
    seq: RenderedSequence,
    mask: PatchMask,
    params: ModelParameters,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> LossReport:
    n_valid = _non_pad_count(seq)
    embedded = patch_embed(seq, params)
    enc = encode(embedded, mask, params, train=train, n_valid=n_valid, rng=rng)
    logits = decode(enc, mask, params, train=train, rng=rng, n_valid=n_valid)
    return reconstruction_loss(logits, seq, mask, params.cfg.patch_size)


def mask_for_sequence(seq: RenderedSequence, cfg: PixelConfig, rng: np.random.Generator) -> PatchMask:
    """Fresh span mask over the text prefix of a rendered sequence."""
    mask_cfg = MaskConfig.fitted(
        num_patches=seq.num_text_patches,
        ratio=cfg.mask_ratio,
        max_span=cfg.mask_max_span,
        cumulative_weights=cfg.mask_cumulative_weights,
    )
    return generate_mask(mask_cfg, rng)


@dataclass
class StepReport:
    step: int
    lr: float
    loss: float
    reports: list = field(default_factory=list)


def pretrain_step(
    batch: list,
    params: ModelParameters,
    state: OptimizerState,
    opt_cfg: OptimizerConfig,
    seed: int,
) -> StepReport:
    """One optimization step: fresh mask per example, averaged loss, AdamW."""
    if not batch:
        raise ValueError("empty batch")
    step = state.step
    params.zero_grad()
    reports = []
    total = None
    scale = 1.0 / len(batch)
    for bi, seq in enumerate(batch):
        mask_rng = np.random.default_rng((seed, step, bi, 0))
        drop_rng = np.random.default_rng((seed, step, bi, 1))
        mask = mask_for_sequence(seq, params.cfg, mask_rng)
        report = forward_loss(seq, mask, params, train=True, rng=drop_rng)
        reports.append(report)
        if report.node is not None:
            term = report.node * scale
            total = term if total is None else total + term
    loss_value = float(np.mean([r.value for r in reports]))
    if total is not None:
        total.backward()
    lr = lr_at(min(state.step + 1, opt_cfg.total_steps), opt_cfg)
    adamw_step(params.named, state, opt_cfg, lr)
    return StepReport(step=state.step, lr=lr, loss=loss_value, reports=reports)


def reconstruct_pixels(seq: RenderedSequence, mask: PatchMask, params: ModelParameters) -> np.ndarray:
    """Visible patches copied from the input, masked ones from predictions,
    de-normalized with the target patch statistics and clipped to [0, 1]."""
    cfg = params.cfg
    n_valid = _non_pad_count(seq)
    embedded = patch_embed(seq, params)
    enc = encode(embedded, mask, params, train=False, n_valid=n_valid)
    logits = decode(enc, mask, params, train=False, n_valid=n_valid).data
    flat = flatten_patches(seq.pixels, cfg.patch_size).copy()
    if len(mask.indices):
        idx = list(mask.indices)
        _, mean, std = normalize_patch_rows(flat[idx])
        pred = logits[idx] * std + mean
        flat[idx] = np.clip(pred, 0.0, 1.0)
    return unflatten_patches(flat.astype(np.float32), cfg.patch_size, cfg.channels)
