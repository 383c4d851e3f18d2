"""Orthographic attacks for robustness evaluation.

Each attack transforms a seeded uniform subset of the eligible whitespace
tokens; at level 0 the text passes through untouched, at level 1 every
eligible token is hit. Segmentation is the exception: it removes a fraction
of the spaces from the whole text instead.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

ATTACK_KINDS = (
    "confusable",
    "shuffle_inner",
    "shuffle_full",
    "disemvowel",
    "intrude",
    "keyboard_typo",
    "natural_noise",
    "truncate",
    "segmentation",
)

VOWELS = set("aeiouAEIOU")
INTRUDER_SYMBOLS = "`~!@#$%^&*()-_=+[]{};:'\",<.>/?\\|"
TRUNCATE_MIN_LEN = 6
DISEMVOWEL_MIN_LEN = 3


class ResourceFormatError(ValueError):
    pass


@dataclass
class AttackConfig:
    kind: str
    level: float
    seed: int = 0
    confusable_path: str | None = None  # None = shipped resource
    keyboard_path: str | None = None
    noise_path: str | None = None

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise ValueError(f"unknown attack kind {self.kind!r}")
        if not 0.0 <= self.level <= 1.0:
            raise ValueError("level must lie in [0, 1]")


def _resource_text(name: str) -> str:
    return resources.files("pixelcoder.resources").joinpath(name).read_text(encoding="utf-8")


def _read_pairs(text: str, what: str):
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.rstrip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0] or not parts[1]:
            raise ResourceFormatError(f"{what}: malformed line {lineno}: {line!r}")
        yield lineno, parts[0], parts[1]


def load_confusable_map(path=None) -> dict:
    """codepoint -> list of confusable codepoints; absent codepoints map to
    themselves (identity)."""
    text = Path(path).read_text(encoding="utf-8") if path else _resource_text("confusables.tsv")
    table = {}
    for lineno, src, targets in _read_pairs(text, "confusables"):
        try:
            source = int(src, 16)
            table[source] = [int(t, 16) for t in targets.split(",")]
        except ValueError as exc:
            raise ResourceFormatError(f"confusables: bad hex on line {lineno}") from exc
    return table


def load_keyboard_map(path=None) -> dict:
    text = Path(path).read_text(encoding="utf-8") if path else _resource_text("keyboard_qwerty.tsv")
    return {src: targets for _, src, targets in _read_pairs(text, "keyboard adjacency")}


def load_noise_map(path=None) -> dict:
    text = Path(path).read_text(encoding="utf-8") if path else _resource_text("natural_noise.tsv")
    return {src: targets for _, src, targets in _read_pairs(text, "error table")}


def confusable_targets(table: dict, codepoint: int) -> list:
    return table.get(codepoint, [codepoint])


class Attacker:
    """Loads resources once and applies seeded attacks to text."""

    def __init__(self, cfg: AttackConfig):
        self.cfg = cfg
        self.confusables = load_confusable_map(cfg.confusable_path) if cfg.kind == "confusable" else None
        self.keyboard = load_keyboard_map(cfg.keyboard_path) if cfg.kind == "keyboard_typo" else None
        self.noise = load_noise_map(cfg.noise_path) if cfg.kind == "natural_noise" else None

    # -- eligibility ---------------------------------------------------------

    def eligible(self, word: str) -> bool:
        kind = self.cfg.kind
        if kind == "confusable":
            return any(ord(c) in self.confusables for c in word)
        if kind == "shuffle_inner":
            return len(word) >= 4
        if kind == "shuffle_full":
            return len(word) >= 2
        if kind == "disemvowel":
            return (
                len(word) >= DISEMVOWEL_MIN_LEN
                and any(c in VOWELS for c in word)
                and any(c not in VOWELS for c in word)
            )
        if kind == "intrude":
            return len(word) >= 2
        if kind == "keyboard_typo":
            return len(word) >= 3 and any(c in self.keyboard for c in word[1:-1])
        if kind == "natural_noise":
            return any(c in self.noise for c in word)
        if kind == "truncate":
            return len(word) >= TRUNCATE_MIN_LEN
        raise AssertionError(kind)

    # -- per-word transforms ---------------------------------------------------

    def transform(self, word: str, rng: np.random.Generator) -> str:
        kind = self.cfg.kind
        if kind == "confusable":
            out = []
            for c in word:
                targets = self.confusables.get(ord(c))
                out.append(chr(targets[rng.integers(0, len(targets))]) if targets else c)
            return "".join(out)
        if kind == "shuffle_inner":
            middle = list(word[1:-1])
            order = rng.permutation(len(middle))
            return word[0] + "".join(middle[i] for i in order) + word[-1]
        if kind == "shuffle_full":
            order = rng.permutation(len(word))
            return "".join(word[i] for i in order)
        if kind == "disemvowel":
            return "".join(c for c in word if c not in VOWELS)
        if kind == "intrude":
            pos = int(rng.integers(1, len(word)))
            sym = INTRUDER_SYMBOLS[rng.integers(0, len(INTRUDER_SYMBOLS))]
            return word[:pos] + sym + word[pos:]
        if kind == "keyboard_typo":
            spots = [i for i in range(1, len(word) - 1) if word[i] in self.keyboard]
            pos = spots[rng.integers(0, len(spots))]
            neighbors = self.keyboard[word[pos]]
            return word[:pos] + neighbors[rng.integers(0, len(neighbors))] + word[pos + 1 :]
        if kind == "natural_noise":
            spots = [i for i in range(len(word)) if word[i] in self.noise]
            pos = spots[rng.integers(0, len(spots))]
            repl = self.noise[word[pos]]
            return word[:pos] + repl[rng.integers(0, len(repl))] + word[pos + 1 :]
        if kind == "truncate":
            return word[:-1]
        raise AssertionError(kind)

    # -- whole-text application -------------------------------------------------

    def __call__(self, text: str, rng: np.random.Generator | None = None) -> str:
        cfg = self.cfg
        if cfg.level == 0.0:
            return text
        if rng is None:
            rng = np.random.default_rng(cfg.seed)
        if cfg.kind == "segmentation":
            spaces = [i for i, c in enumerate(text) if c == " "]
            k = math.ceil(cfg.level * len(spaces))
            if k == 0:
                return text
            drop = set(rng.choice(len(spaces), size=k, replace=False).tolist())
            victims = {spaces[i] for i in drop}
            return "".join(c for i, c in enumerate(text) if i not in victims)
        tokens = re.split(r"(\s+)", text)
        word_slots = [i for i in range(0, len(tokens), 2) if tokens[i]]
        eligible = [i for i in word_slots if self.eligible(tokens[i])]
        k = math.ceil(cfg.level * len(eligible))
        if k == 0:
            return text
        chosen = rng.choice(len(eligible), size=k, replace=False)
        for j in sorted(chosen.tolist()):
            slot = eligible[j]
            tokens[slot] = self.transform(tokens[slot], rng)
        return "".join(tokens)


def apply_attack(text: str, cfg: AttackConfig) -> str:
    return Attacker(cfg)(text)
