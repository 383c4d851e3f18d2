"""Glyph atlases: fixed bitmap fonts plus the PXGA file format.

PXGA layout (all integers little-endian):

    magic   4 bytes  "PXGA"
    version u16      currently 1
    height  u8       glyph height in pixels (<= 16)
    count   u32      number of glyph records
    per glyph:
        codepoint u32
        advance   u8
        bitmap    height * ceil(advance/8) bytes, row-major, 1 bit per
                  pixel, bit 7 of each byte is the leftmost pixel, each
                  row padded to whole bytes

The glyph stored under U+FFFD doubles as the fallback drawn for unknown
codepoints; an atlas without it is rejected.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import _fontdata

PXGA_MAGIC = b"PXGA"
PXGA_VERSION = 1
FALLBACK_CODEPOINT = 0xFFFD
MAX_GLYPH_HEIGHT = 16


class AtlasError(ValueError):
    pass


@dataclass(frozen=True)
class Glyph:
    advance: int
    bitmap: np.ndarray  # (height, advance) uint8, 1 = ink

    def __post_init__(self):
        if self.advance < 1:
            raise AtlasError(f"glyph advance must be >= 1, got {self.advance}")
        if self.bitmap.shape[1] != self.advance:
            raise AtlasError("glyph bitmap width must equal its advance")


@dataclass
class GlyphAtlas:
    glyph_height: int
    glyphs: dict[int, Glyph] = field(default_factory=dict)
    name: str = "atlas"

    def __post_init__(self):
        if not (1 <= self.glyph_height <= MAX_GLYPH_HEIGHT):
            raise AtlasError(f"glyph height must be in [1, {MAX_GLYPH_HEIGHT}]")
        if FALLBACK_CODEPOINT not in self.glyphs:
            raise AtlasError("atlas has no fallback glyph (U+FFFD)")
        for cp, glyph in self.glyphs.items():
            if glyph.bitmap.shape[0] != self.glyph_height:
                raise AtlasError(f"glyph U+{cp:04X} height {glyph.bitmap.shape[0]} != {self.glyph_height}")

    @property
    def fallback(self) -> Glyph:
        return self.glyphs[FALLBACK_CODEPOINT]

    def glyph_for(self, codepoint: int) -> Glyph:
        return self.glyphs.get(codepoint, self.fallback)

    def text_width(self, text: str) -> int:
        return sum(self.glyph_for(ord(ch)).advance for ch in text)


def save_atlas(atlas: GlyphAtlas, path) -> None:
    blob = bytearray()
    blob += PXGA_MAGIC
    blob += struct.pack("<HBI", PXGA_VERSION, atlas.glyph_height, len(atlas.glyphs))
    for cp in sorted(atlas.glyphs):
        glyph = atlas.glyphs[cp]
        blob += struct.pack("<IB", cp, glyph.advance)
        blob += np.packbits(glyph.bitmap, axis=1).tobytes()
    Path(path).write_bytes(bytes(blob))


def load_atlas(path, name: str | None = None) -> GlyphAtlas:
    data = Path(path).read_bytes()
    return parse_atlas(data, name=name or Path(path).stem)


def parse_atlas(data: bytes, name: str = "atlas") -> GlyphAtlas:
    if data[:4] != PXGA_MAGIC:
        raise AtlasError(f"bad atlas magic {data[:4]!r}")
    try:
        version, height, count = struct.unpack_from("<HBI", data, 4)
    except struct.error as exc:
        raise AtlasError("truncated atlas header") from exc
    if version != PXGA_VERSION:
        raise AtlasError(f"unsupported atlas version {version}")
    offset = 11
    glyphs = {}
    for _ in range(count):
        try:
            cp, advance = struct.unpack_from("<IB", data, offset)
        except struct.error as exc:
            raise AtlasError("truncated glyph record") from exc
        offset += 5
        row_bytes = (advance + 7) // 8
        raw = data[offset : offset + height * row_bytes]
        if len(raw) != height * row_bytes:
            raise AtlasError(f"truncated bitmap for U+{cp:04X}")
        offset += height * row_bytes
        rows = np.frombuffer(raw, dtype=np.uint8).reshape(height, row_bytes)
        bitmap = np.unpackbits(rows, axis=1)[:, :advance]
        glyphs[cp] = Glyph(advance=advance, bitmap=bitmap)
    if offset != len(data):
        raise AtlasError(f"{len(data) - offset} trailing bytes after glyph table")
    return GlyphAtlas(glyph_height=height, glyphs=glyphs, name=name)


def builtin_atlas() -> GlyphAtlas:
    """The built-in ASCII + Latin-1 atlas, constructed from the font tables."""
    glyphs = {}
    for cp, rows in _fontdata.build_bitmaps().items():
        bitmap = np.zeros((_fontdata.GLYPH_HEIGHT, _fontdata.GLYPH_WIDTH), dtype=np.uint8)
        for r, bits in enumerate(rows):
            for c in range(_fontdata.GLYPH_WIDTH):
                if bits & (0x80 >> c):
                    bitmap[r, c] = 1
        glyphs[cp] = Glyph(advance=_fontdata.GLYPH_WIDTH, bitmap=bitmap)
    return GlyphAtlas(glyph_height=_fontdata.GLYPH_HEIGHT, glyphs=glyphs, name="default")


_default = None


def default_atlas() -> GlyphAtlas:
    """The atlas shipped with the package (resources/default.pxga), cached."""
    global _default
    if _default is None:
        blob = resources.files("pixelcoder.resources").joinpath("default.pxga").read_bytes()
        _default = parse_atlas(blob, name="default")
    return _default
