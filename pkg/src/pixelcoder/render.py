"""Deterministic text rasterization into typed 16x16 patches.

Text is drawn left to right on a 16-pixel-tall canvas (background 1.0,
ink 0.0) and segmented into square patches. An all-ink patch follows the
last text patch as end-of-sequence; pair rendering puts another all-ink
patch between the two segments; all-background patches after the EOS are
padding. Word-aligned rendering pads each word out to the next patch
boundary so words and patches map one-to-one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .atlas import GlyphAtlas

BACKGROUND = 1.0
INK = 0.0
BLANK_TOLERANCE = 0.01


class PatchType(IntEnum):
    TEXT = 0
    SEP = 1
    PAD = 2


class RenderOverflow(ValueError):
    """Raised when word-aligned input cannot fit the patch budget."""


@dataclass(frozen=True)
class RendererConfig:
    patch_size: int = 16
    canvas_height: int = 16
    channels: int = 1
    max_patches: int = 529
    mode: str = "continuous"
    rtl_base_direction: bool = False  # reserved, rendering is always LTR

    def __post_init__(self):
        if self.canvas_height != self.patch_size:
            raise ValueError("canvas height must equal patch size")
        if self.channels not in (1, 3):
            raise ValueError("channels must be 1 or 3")
        if self.max_patches < 2:
            raise ValueError("max_patches must be >= 2 (one text patch plus EOS)")
        if self.mode not in ("continuous", "pair", "word_aligned"):
            raise ValueError(f"unknown mode {self.mode!r}")


@dataclass
class RenderedSequence:
    pixels: np.ndarray  # (H, num_patches * P, C) float32 in [0, 1]
    patch_types: tuple
    num_text_patches: int
    char_to_patch: tuple
    source_text: str
    mode: str
    word_to_first_patch: tuple | None = None
    word_patch_spans: tuple | None = None  # (start, end) patch range per word
    pair_boundary: int | None = None  # codepoint index where segment b starts
    truncated: bool = False

    @property
    def num_patches(self) -> int:
        return len(self.patch_types)

    def patch_pixels(self, index: int) -> np.ndarray:
        p = self.pixels.shape[0]  # patches are square: height == patch size
        return self.pixels[:, index * p : (index + 1) * p, :]

    def text_patch_indices(self) -> np.ndarray:
        return np.nonzero(np.array(self.patch_types) == PatchType.TEXT)[0]


@dataclass(frozen=True)
class CharPatchMap:
    char_to_patch: tuple
    patch_to_chars: dict  # patch index -> (lo, hi) codepoint range, half open


class _Canvas:
    """Accumulates glyph draws, then finalizes to typed patches."""

    def __init__(self, cfg: RendererConfig, atlas: GlyphAtlas):
        self.cfg = cfg
        self.atlas = atlas
        self.columns: list[np.ndarray] = []  # per-glyph ink column blocks
        self.x = 0
        self.char_patches: list[int] = []
        self.y0 = (cfg.canvas_height - atlas.glyph_height) // 2

    def draw(self, ch: str) -> None:
        glyph = self.atlas.glyph_for(ord(ch))
        block = np.zeros((self.cfg.canvas_height, glyph.advance), dtype=np.uint8)
        block[self.y0 : self.y0 + self.atlas.glyph_height, :] = glyph.bitmap
        self.char_patches.append(self.x // self.cfg.patch_size)
        self.columns.append(block)
        self.x += glyph.advance

    def pad_to_boundary(self) -> None:
        p = self.cfg.patch_size
        rem = self.x % p
        if rem:
            self.columns.append(np.zeros((self.cfg.canvas_height, p - rem), dtype=np.uint8))
            self.x += p - rem

    def ink(self) -> np.ndarray:
        if not self.columns:
            return np.zeros((self.cfg.canvas_height, 0), dtype=np.uint8)
        return np.concatenate(self.columns, axis=1)


def _finalize(cfg, ink, patch_types, char_patches, source_text, mode, **extra) -> RenderedSequence:
    p = cfg.patch_size
    n = len(patch_types)
    canvas = np.full((cfg.canvas_height, n * p), BACKGROUND, dtype=np.float32)
    canvas[:, : ink.shape[1]] -= ink.astype(np.float32)
    for i, t in enumerate(patch_types):
        if t == PatchType.SEP:
            canvas[:, i * p : (i + 1) * p] = INK
    pixels = np.repeat(canvas[:, :, None], cfg.channels, axis=2)
    return RenderedSequence(
        pixels=pixels,
        patch_types=tuple(patch_types),
        num_text_patches=sum(1 for t in patch_types if t == PatchType.TEXT),
        char_to_patch=tuple(char_patches),
        source_text=source_text,
        mode=mode,
        **extra,
    )


def _pad_count(cfg, used: int, pad_to) -> int:
    if pad_to is None:
        return 0
    if pad_to < used:
        raise ValueError(f"pad_to={pad_to} smaller than the {used} patches already used")
    if pad_to > cfg.max_patches:
        raise ValueError(f"pad_to={pad_to} exceeds max_patches={cfg.max_patches}")
    return pad_to - used


def _fit_prefix(text: str, atlas: GlyphAtlas, patch_size: int, budget_patches: int) -> int:
    """Longest prefix length whose rendered width fits the patch budget."""
    limit = budget_patches * patch_size
    width = 0
    for i, ch in enumerate(text):
        width += atlas.glyph_for(ord(ch)).advance
        if width > limit:
            return i
    return len(text)


def render_text(text: str, cfg: RendererConfig, atlas: GlyphAtlas, pad_to: int | None = None) -> RenderedSequence:
    """Rasterize one paragraph: text patches, one EOS patch, optional padding."""
    budget = cfg.max_patches - 1
    keep = _fit_prefix(text, atlas, cfg.patch_size, budget)
    truncated = keep < len(text)
    text = text[:keep]

    canvas = _Canvas(cfg, atlas)
    for ch in text:
        canvas.draw(ch)
    canvas.pad_to_boundary()
    n_text = canvas.x // cfg.patch_size
    types = [PatchType.TEXT] * n_text + [PatchType.SEP]
    types += [PatchType.PAD] * _pad_count(cfg, len(types), pad_to)
    return _finalize(cfg, canvas.ink(), types, canvas.char_patches, text, "continuous", truncated=truncated)


def render_pair(a: str, b: str, cfg: RendererConfig, atlas: GlyphAtlas, pad_to: int | None = None) -> RenderedSequence:
    """Rasterize a text pair: a, separator patch, b, EOS patch."""
    keep_a = _fit_prefix(a, atlas, cfg.patch_size, cfg.max_patches - 2)
    a_kept = a[:keep_a]

    canvas = _Canvas(cfg, atlas)
    for ch in a_kept:
        canvas.draw(ch)
    canvas.pad_to_boundary()
    a_patches = canvas.x // cfg.patch_size

    keep_b = _fit_prefix(b, atlas, cfg.patch_size, cfg.max_patches - a_patches - 2)
    b_kept = b[:keep_b]
    truncated = keep_a < len(a) or keep_b < len(b)

    sep_index = a_patches
    char_patches = list(canvas.char_patches)
    canvas_b = _Canvas(cfg, atlas)
    for ch in b_kept:
        canvas_b.draw(ch)
    canvas_b.pad_to_boundary()
    b_patches = canvas_b.x // cfg.patch_size
    char_patches += [sep_index + 1 + cp for cp in canvas_b.char_patches]

    p = cfg.patch_size
    ink = np.zeros((cfg.canvas_height, (a_patches + 1 + b_patches) * p), dtype=np.uint8)
    ink[:, : canvas.x] = canvas.ink()
    ink[:, (sep_index + 1) * p : (sep_index + 1) * p + canvas_b.x] = canvas_b.ink()

    types = [PatchType.TEXT] * a_patches + [PatchType.SEP] + [PatchType.TEXT] * b_patches + [PatchType.SEP]
    types += [PatchType.PAD] * _pad_count(cfg, len(types), pad_to)
    return _finalize(
        cfg,
        ink,
        types,
        char_patches,
        a_kept + b_kept,
        "pair",
        pair_boundary=len(a_kept),
        truncated=truncated,
    )


def render_words(words, cfg: RendererConfig, atlas: GlyphAtlas, pad_to: int | None = None) -> RenderedSequence:
    """Rasterize words with each one starting at a fresh patch boundary.

    Inter-word padding is background only, so every patch belongs to exactly
    one word and word_to_first_patch is injective.
    """
    words = list(words)
    if not words:
        raise ValueError("render_words needs a nonempty word list")
    canvas = _Canvas(cfg, atlas)
    first_patches = []
    spans = []
    char_patches = []
    budget = cfg.max_patches - 1
    for wi, word in enumerate(words):
        if not word:
            raise ValueError(f"word {wi} is empty")
        start_patch = canvas.x // cfg.patch_size
        width = atlas.text_width(word)
        end_patch = start_patch + math.ceil(width / cfg.patch_size)
        if end_patch > budget:
            raise RenderOverflow(
                f"word {wi} ({word!r}) does not fit: needs patches up to {end_patch}, "
                f"budget is {budget}"
            )
        if wi > 0:
            # the joining space maps to the previous word's final patch
            char_patches.append(start_patch - 1)
        first_patches.append(start_patch)
        for ch in word:
            canvas.draw(ch)
            char_patches.append(canvas.char_patches[-1])
        canvas.pad_to_boundary()
        spans.append((start_patch, canvas.x // cfg.patch_size))
    n_text = canvas.x // cfg.patch_size
    types = [PatchType.TEXT] * n_text + [PatchType.SEP]
    types += [PatchType.PAD] * _pad_count(cfg, len(types), pad_to)
    return _finalize(
        cfg,
        canvas.ink(),
        types,
        char_patches,
        " ".join(words),
        "word_aligned",
        word_to_first_patch=tuple(first_patches),
        word_patch_spans=tuple(spans),
    )


def char_spans(seq: RenderedSequence) -> CharPatchMap:
    """Per-codepoint patch index plus the inverse patch -> codepoint ranges."""
    mapping = seq.char_to_patch
    inverse = {}
    for i, patch in enumerate(mapping):
        if patch not in inverse:
            inverse[patch] = (i, i + 1)
        else:
            lo, hi = inverse[patch]
            if i != hi:
                raise ValueError("char_to_patch is not monotone")
            inverse[patch] = (lo, i + 1)
    return CharPatchMap(char_to_patch=tuple(mapping), patch_to_chars=inverse)


def split_long(text: str, cfg: RendererConfig, atlas: GlyphAtlas) -> list[RenderedSequence]:
    """Split text into renderable chunks, preferring whitespace boundaries.

    Concatenating the chunks' source_text reproduces the input exactly.
    """
    budget = cfg.max_patches - 1
    pieces = []
    rest = text
    while True:
        keep = _fit_prefix(rest, atlas, cfg.patch_size, budget)
        if keep >= len(rest):
            pieces.append(rest)
            break
        cut = keep
        ws = [i for i in range(keep) if rest[i].isspace()]
        if ws:
            cut = ws[-1] + 1  # whitespace stays with the left chunk
        if cut == 0:
            cut = max(keep, 1)  # single oversized codepoint: force progress
        pieces.append(rest[:cut])
        rest = rest[cut:]
    return [render_text(piece, cfg, atlas) for piece in pieces]


def is_blank_patch(seq: RenderedSequence, index: int, tol: float = BLANK_TOLERANCE) -> bool:
    return bool(np.max(np.abs(seq.patch_pixels(index) - BACKGROUND)) < tol)
