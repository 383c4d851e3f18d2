"""Built-in 8x8 bitmap glyphs for the default atlas.

Glyph art is written as 8 rows separated by "/"; a row is up to 8 chars of
"." (background) and "X" (ink), short rows are padded right, and a bare "."
is an all-background row. Every printable glyph must keep at least one ink
pixel (the renderer's patch typing relies on it); only the space characters
are fully blank.

Latin-1 letters are composed from a base glyph plus an accent overlay.
Homoglyph codepoints (Cyrillic/Greek lookalikes) deliberately share the
bitmap of their Latin twin, which is also what the shipped confusable map
points at.
"""

GLYPH_HEIGHT = 8
GLYPH_WIDTH = 8  # advance of every built-in glyph

GLYPHS = {
    " ": "./././././././.",
    "!": "...X/...X/...X/...X/...X/./...X/.",
    '"': "..X.X/..X.X/./././././.",
    "#": "..X.X/..X.X/XXXXXXX/..X.X/XXXXXXX/..X.X/..X.X/.",
    "$": "...X/.XXXXX/X..X/.XXXXX/...X..X/.XXXXX/...X/.",
    "%": "XX....X/XX...X/....X/...X/..X/.X...XX/X....XX/.",
    "&": ".XX/X..X/X..X/.XX/X..X..X/X...XX/.XXX.XX/.",
    "'": "...X/...X/./././././.",
    "(": "....X/...X/..X/..X/..X/...X/....X/.",
    ")": "..X/...X/....X/....X/....X/...X/..X/.",
    "*": "./...X/.X.X.X/..XXX/.X.X.X/...X/./.",
    "+": "./...X/...X/.XXXXX/...X/...X/./.",
    ",": "././././..XX/...X/..X/.",
    "-": "./././.XXXXX/./././.",
    ".": "./././././..XX/..XX/.",
    "/": "......X/.....X/....X/...X/..X/.X/X/.",
    "0": ".XXXXX/X....XX/X...X.X/X..X..X/X.X...X/XX....X/.XXXXX/.",
    "1": "...X/..XX/...X/...X/...X/...X/..XXX/.",
    "2": ".XXXXX/X.....X/......X/..XXXX/.X/X/XXXXXXX/.",
    "3": ".XXXXX/X.....X/......X/...XXX/......X/X.....X/.XXXXX/.",
    "4": "....XX/...X.X/..X..X/.X...X/XXXXXXX/.....X/.....X/.",
    "5": "XXXXXXX/X/XXXXXX/......X/......X/X.....X/.XXXXX/.",
    "6": ".XXXXX/X/X/XXXXXX/X.....X/X.....X/.XXXXX/.",
    "7": "XXXXXXX/......X/.....X/....X/...X/..X/..X/.",
    "8": ".XXXXX/X.....X/X.....X/.XXXXX/X.....X/X.....X/.XXXXX/.",
    "9": ".XXXXX/X.....X/X.....X/.XXXXXX/......X/......X/.XXXXX/.",
    ":": "./..XX/..XX/./..XX/..XX/./.",
    ";": "./..XX/..XX/./..XX/...X/..X/.",
    "<": "....X/...X/..X/.X/..X/...X/....X/.",
    "=": "././.XXXXX/./.XXXXX/././.",
    ">": "..X/...X/....X/.....X/....X/...X/..X/.",
    "?": ".XXXXX/X.....X/......X/....XX/...X/./...X/.",
    "@": ".XXXXX/X.....X/X..XX.X/X.X.X.X/X..XXX/X/.XXXXX/.",
    "A": "...X/..X.X/.X...X/X.....X/XXXXXXX/X.....X/X.....X/.",
    "B": "XXXXXX/X.....X/X.....X/XXXXXX/X.....X/X.....X/XXXXXX/.",
    "C": ".XXXXX/X.....X/X/X/X/X.....X/.XXXXX/.",
    "D": "XXXXX/X....X/X.....X/X.....X/X.....X/X....X/XXXXX/.",
    "E": "XXXXXXX/X/X/XXXXX/X/X/XXXXXXX/.",
    "F": "XXXXXXX/X/X/XXXXX/X/X/X/.",
    "G": ".XXXXX/X.....X/X/X..XXXX/X.....X/X.....X/.XXXXX/.",
    "H": "X.....X/X.....X/X.....X/XXXXXXX/X.....X/X.....X/X.....X/.",
    "I": ".XXXXX/...X/...X/...X/...X/...X/.XXXXX/.",
    "J": "..XXXXX/....X/....X/....X/....X/X...X/.XXX/.",
    "K": "X....X/X...X/X..X/XXX/X..X/X...X/X....X/.",
    "L": "X/X/X/X/X/X/XXXXXXX/.",
    "M": "X.....X/XX...XX/X.X.X.X/X..X..X/X.....X/X.....X/X.....X/.",
    "N": "X.....X/XX....X/X.X...X/X..X..X/X...X.X/X....XX/X.....X/.",
    "O": ".XXXXX/X.....X/X.....X/X.....X/X.....X/X.....X/.XXXXX/.",
    "P": "XXXXXX/X.....X/X.....X/XXXXXX/X/X/X/.",
    "Q": ".XXXXX/X.....X/X.....X/X.....X/X...X.X/X....X/.XXXX.X/.",
    "R": "XXXXXX/X.....X/X.....X/XXXXXX/X..X/X...X/X....XX/.",
    "S": ".XXXXXX/X/X/.XXXXX/......X/......X/XXXXXX/.",
    "T": "XXXXXXX/...X/...X/...X/...X/...X/...X/.",
    "U": "X.....X/X.....X/X.....X/X.....X/X.....X/X.....X/.XXXXX/.",
    "V": "X.....X/X.....X/X.....X/.X...X/.X...X/..X.X/...X/.",
    "W": "X.....X/X.....X/X.....X/X..X..X/X.X.X.X/XX...XX/X.....X/.",
    "X": "X.....X/.X...X/..X.X/...X/..X.X/.X...X/X.....X/.",
    "Y": "X.....X/.X...X/..X.X/...X/...X/...X/...X/.",
    "Z": "XXXXXXX/.....X/....X/...X/..X/.X/XXXXXXX/.",
    "[": "..XXX/..X/..X/..X/..X/..X/..XXX/.",
    "\\": "X/.X/..X/...X/....X/.....X/......X/.",
    "]": "..XXX/....X/....X/....X/....X/....X/..XXX/.",
    "^": "...X/..X.X/.X...X/./././/.",
    "_": "./././././././XXXXXXX",
    "`": "..X/...X/./././././.",
    "a": "././.XXXX/.....X/.XXXXX/X....X/.XXXX.X/.",
    "b": "X/X/XXXXX/X....X/X....X/X....X/XXXXX/.",
    "c": "././.XXXX/X....X/X/X....X/.XXXX/.",
    "d": ".....X/.....X/.XXXXX/X....X/X....X/X....X/.XXXXX/.",
    "e": "././.XXXX/X....X/XXXXXX/X/.XXXX/.",
    "f": "..XXX/.X/XXXXX/.X/.X/.X/.X/.",
    "g": "././.XXXXX/X....X/X....X/.XXXXX/.....X/.XXXX",
    "h": "X/X/XXXXX/X....X/X....X/X....X/X....X/.",
    "i": "..X/./.XX/..X/..X/..X/.XXX/.",
    "j": "...X/./..XX/...X/...X/...X/X..X/.XX",
    "k": "X/X/X...X/X..X/XXX/X..X/X...X/.",
    "l": ".XX/..X/..X/..X/..X/..X/.XXX/.",
    "m": "././XX.X.X/X.X.X.X/X.X.X.X/X.X.X.X/X.X.X.X/.",
    "n": "././XXXXX/X....X/X....X/X....X/X....X/.",
    "o": "././.XXXX/X....X/X....X/X....X/.XXXX/.",
    "p": "././XXXXX/X....X/X....X/XXXXX/X/X",
    "q": "././.XXXXX/X....X/X....X/.XXXXX/.....X/.....X",
    "r": "././X.XXX/XX/X/X/X/.",
    "s": "././.XXXXX/X/.XXXX/.....X/XXXXX/.",
    "t": "..X/..X/XXXXX/..X/..X/..X/...XX/.",
    "u": "././X....X/X....X/X....X/X....X/.XXXX/.",
    "v": "././X....X/X....X/.X..X/.X..X/..XX/.",
    "w": "././X.....X/X..X..X/X..X..X/X.X.X.X/.X...X/.",
    "x": "././X....X/.X..X/..XX/.X..X/X....X/.",
    "y": "././X....X/X....X/X....X/.XXXXX/.....X/.XXXX",
    "z": "././XXXXXX/....X/..XX/.X/XXXXXX/.",
    "{": "....XX/...X/...X/..X/...X/...X/....XX/.",
    "|": "...X/...X/...X/...X/...X/...X/...X/.",
    "}": ".XX/...X/...X/....X/...X/...X/.XX/.",
    "~": "./././.XX...X/X..XX/././.",
    "ı": "././.XX/..X/..X/..X/.XXX/.",  # dotless i, composition base
}

# accent overlays, OR'd over a base glyph; top accents push capitals
# (whose art starts at row 0) down one row to stay visible
ACCENTS = {
    "acute": "....X/...X/./././././.",
    "grave": "..X/...X/./././././.",
    "circumflex": "...X/..X.X/./././././.",
    "diaeresis": "..X.X/./././././/.",
    "tilde": ".XX..X/X..XX/./././././.",
    "ring": "..XX/..XX/./././././.",
    "cedilla": "./././././././...XX",
}
TOP_ACCENTS = {"acute", "grave", "circumflex", "diaeresis", "tilde", "ring"}

# Latin-1 letters built from base + accent
COMPOSED = {
    0x00C0: ("A", "grave"), 0x00C1: ("A", "acute"), 0x00C2: ("A", "circumflex"),
    0x00C3: ("A", "tilde"), 0x00C4: ("A", "diaeresis"), 0x00C5: ("A", "ring"),
    0x00C7: ("C", "cedilla"),
    0x00C8: ("E", "grave"), 0x00C9: ("E", "acute"), 0x00CA: ("E", "circumflex"),
    0x00CB: ("E", "diaeresis"),
    0x00CC: ("I", "grave"), 0x00CD: ("I", "acute"), 0x00CE: ("I", "circumflex"),
    0x00CF: ("I", "diaeresis"),
    0x00D1: ("N", "tilde"),
    0x00D2: ("O", "grave"), 0x00D3: ("O", "acute"), 0x00D4: ("O", "circumflex"),
    0x00D5: ("O", "tilde"), 0x00D6: ("O", "diaeresis"),
    0x00D9: ("U", "grave"), 0x00DA: ("U", "acute"), 0x00DB: ("U", "circumflex"),
    0x00DC: ("U", "diaeresis"),
    0x00DD: ("Y", "acute"),
    0x00E0: ("a", "grave"), 0x00E1: ("a", "acute"), 0x00E2: ("a", "circumflex"),
    0x00E3: ("a", "tilde"), 0x00E4: ("a", "diaeresis"), 0x00E5: ("a", "ring"),
    0x00E7: ("c", "cedilla"),
    0x00E8: ("e", "grave"), 0x00E9: ("e", "acute"), 0x00EA: ("e", "circumflex"),
    0x00EB: ("e", "diaeresis"),
    0x00EC: ("ı", "grave"), 0x00ED: ("ı", "acute"), 0x00EE: ("ı", "circumflex"),
    0x00EF: ("ı", "diaeresis"),
    0x00F1: ("n", "tilde"),
    0x00F2: ("o", "grave"), 0x00F3: ("o", "acute"), 0x00F4: ("o", "circumflex"),
    0x00F5: ("o", "tilde"), 0x00F6: ("o", "diaeresis"),
    0x00F9: ("u", "grave"), 0x00FA: ("u", "acute"), 0x00FB: ("u", "circumflex"),
    0x00FC: ("u", "diaeresis"),
    0x00FD: ("y", "acute"), 0x00FF: ("y", "diaeresis"),
}

# remaining Latin-1 forms drawn directly
LATIN1 = {
    0x00A0: "./././././././.",  # no-break space
    0x00A1: "...X/./...X/...X/...X/...X/...X/.",
    0x00A2: "...X/.XXXX/X..X.X/X..X/X..X.X/.XXXX/...X/.",
    0x00A3: "..XXX/.X...X/.X/XXXX/.X/.X...X/XXXXXX/.",
    0x00A4: "./X....X/.XXXX/.X..X/.XXXX/X....X/./.",
    0x00A5: "X...X/.X.X/XXXXX/..X/XXXXX/..X/..X/.",
    0x00A6: "...X/...X/...X/./...X/...X/...X/.",
    0x00A7: ".XXXX/X/.XX/X..X/.XX/....X/XXXX/.",
    0x00A8: "..X.X/./././././/.",
    0x00A9: ".XXXX/X....X/X.XX.X/X.X..X/X.XX.X/X....X/.XXXX/.",
    0x00AA: ".XXX/...X/.XXX/X..X/.XXX/./XXXX/.",
    0x00AB: "./..X.X/.X.X/X.X/.X.X/..X.X/./.",
    0x00AC: "./././XXXXXX/.....X/.....X/./.",
    0x00AD: "./././.XXXXX/./././.",  # soft hyphen, shown as hyphen
    0x00AE: ".XXXX/X....X/X.XX.X/X.XX.X/X.X.XX/X....X/.XXXX/.",
    0x00AF: "XXXXXX/./././././/.",
    0x00B0: "..XX/.X..X/..XX/././././.",
    0x00B1: "...X/...X/.XXXXX/...X/...X/./.XXXXX/.",
    0x00B2: ".XX/X..X/..X/.X/XXXX/././.",
    0x00B3: "XXX/...X/.XX/...X/XXX/././.",
    0x00B4: "....X/...X/./././././.",
    0x00B5: "././X...X/X...X/X...X/XXXXX/X/X",
    0x00B6: ".XXXXXX/XXX.X.X/XXX.X.X/.XX.X.X/..X.X.X/..X.X.X/..X.X.X/.",
    0x00B7: "./././..XX/..XX/././.",
    0x00B8: "./././././././..XX",
    0x00B9: "..X/.XX/..X/..X/.XXX/././.",
    0x00BA: ".XX/X..X/X..X/.XX/./XXXX/./.",
    0x00BB: "./X.X/.X.X/..X.X/.X.X/X.X/./.",
    0x00BC: "X....X/X...X/X..X/..X..X/.X..XX/X..X.X/...XXX/.",
    0x00BD: "X....X/X...X/X..X/..X.XX/.X....X/X....X/....XX/.",
    0x00BE: "XX...X/.XX.X/XX.X/..X..X/.X..XX/X..X.X/...XXX/.",
    0x00BF: "...X/./...X/...X/..X/X/X....X/.XXXX",
    0x00C6: "..XXXXX/.X.X/X..X/X..XXXX/XXXX/X..X/X..XXXX/.",
    0x00D0: "XXXXX/.X...X/.X....X/XXX...X/.X....X/.X...X/XXXXX/.",
    0x00D7: "./.X...X/..X.X/...X/..X.X/.X...X/./.",
    0x00D8: ".XXXX.X/X....X/X...X.X/X..X..X/X.X...X/X....X/X.XXXX/.",
    0x00DE: "X/X/XXXXXX/X.....X/XXXXXX/X/X/.",
    0x00DF: ".XXXX/X....X/X...X/X..X/X...X/X....X/X.XXX/.",
    0x00E6: "././.XX.XX/....X..X/.XXXXXXX/X...X/.XXX.XXX/.",
    0x00F0: "..X.X/...X/..X.X/.XXXX/X....X/X....X/.XXXX/.",
    0x00F7: "./...X/./.XXXXX/./...X/./.",
    0x00F8: "././.XXXX.X/X...XX/X..X.X/XX...X/X.XXXX/.",
    0x00FE: "X/X/XXXXX/X....X/X....X/XXXXX/X/X",
}

# codepoints that render with the exact bitmap of an ASCII twin
HOMOGLYPHS = {
    # Cyrillic lowercase
    0x0430: "a", 0x0435: "e", 0x043E: "o", 0x0440: "p", 0x0441: "c",
    0x0443: "y", 0x0445: "x", 0x0455: "s", 0x0456: "i", 0x0458: "j",
    # Cyrillic uppercase
    0x0410: "A", 0x0412: "B", 0x0415: "E", 0x041A: "K", 0x041C: "M",
    0x041D: "H", 0x041E: "O", 0x0420: "P", 0x0421: "C", 0x0422: "T",
    0x0425: "X", 0x0405: "S", 0x0406: "I", 0x0408: "J",
    # Greek
    0x03BF: "o", 0x03BD: "v", 0x0391: "A", 0x0392: "B", 0x0395: "E",
    0x0396: "Z", 0x0397: "H", 0x0399: "I", 0x039A: "K", 0x039C: "M",
    0x039D: "N", 0x039F: "O", 0x03A1: "P", 0x03A4: "T", 0x03A5: "Y",
    0x03A7: "X",
}

FALLBACK = "XXXXXX/X....X/X..X.X/X.X..X/X....X/X.XX.X/XXXXXX/."


def parse_rows(art: str) -> list[int]:
    """Expand glyph art into GLYPH_HEIGHT row bitmasks (bit 7 = leftmost)."""
    rows = art.split("/")
    if len(rows) != GLYPH_HEIGHT:
        raise ValueError(f"glyph art needs {GLYPH_HEIGHT} rows, got {len(rows)}: {art!r}")
    out = []
    for row in rows:
        if row == ".":
            row = ""
        if len(row) > GLYPH_WIDTH:
            raise ValueError(f"glyph row too wide: {row!r}")
        bits = 0
        for i, ch in enumerate(row):
            if ch == "X":
                bits |= 0x80 >> i
            elif ch != ".":
                raise ValueError(f"bad glyph char {ch!r}")
        out.append(bits)
    return out


def build_bitmaps() -> dict[int, list[int]]:
    """All built-in glyphs as codepoint -> row bitmask list."""
    table = {}
    for ch, art in GLYPHS.items():
        table[ord(ch)] = parse_rows(art)
    accents = {name: parse_rows(art) for name, art in ACCENTS.items()}
    for cp, (base, accent) in COMPOSED.items():
        base_rows = table[ord(base)]
        if base.isupper() and accent in TOP_ACCENTS:
            # capitals fill rows 0-6; drop the blank bottom row to free row 0
            if base_rows[-1] != 0:
                raise ValueError(f"no headroom to accent {base!r}")
            base_rows = [0] + base_rows[:-1]
        table[cp] = [b | a for b, a in zip(base_rows, accents[accent])]
    for cp, art in LATIN1.items():
        table[cp] = parse_rows(art)
    for cp, twin in HOMOGLYPHS.items():
        table[cp] = list(table[ord(twin)])
    table[0xFFFD] = parse_rows(FALLBACK)
    return table
