"""Run configuration: line-based ``key = value`` files.

Key names follow the training/finetuning parameter tables, lowercased with
underscores (peak_learning_rate, span_masking_ratio, ...). Unknown keys are
rejected; referenced paths must exist at load time. Every run writes its
fully resolved configuration next to its outputs so it can be replayed.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

from .model import BASE_PROFILE, TOY_PROFILE, PixelConfig
from .optim import OptimizerConfig

TASKS = ("pretrain", "pos_tagging", "ner", "parsing", "classification", "qa")
PROFILES = ("base", "toy", "custom")
SCHEDULES = {"cosine_decay": "warmup_cosine", "linear_decay": "warmup_linear"}
WORD_LEVEL_TASKS = ("pos_tagging", "ner", "parsing")


class ConfigError(ValueError):
    pass


def _parse_bool(raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("true", "yes", "1", "✓", "on"):
        return True
    if lowered in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"not a boolean: {raw!r}")


def _parse_floats(raw: str) -> tuple:
    return tuple(float(x) for x in raw.split(","))


@dataclass
class RunConfig:
    task: str = "pretrain"
    profile: str = "toy"
    seed: int = 0
    train_data: str | None = None
    eval_data: str | None = None
    atlas: str | None = None
    # model dimensions (defaults come from the profile)
    patch_size: int | None = None
    image_channels: int | None = None
    max_patches: int | None = None
    encoder_hidden_size: int | None = None
    encoder_intermediate_size: int | None = None
    encoder_num_attention_heads: int | None = None
    encoder_num_layers: int | None = None
    decoder_hidden_size: int | None = None
    decoder_intermediate_size: int | None = None
    decoder_num_attention_heads: int | None = None
    decoder_num_layers: int | None = None
    layer_norm_eps: float | None = None
    dropout_probability: float | None = None
    span_masking_ratio: float | None = None
    span_masking_max_length: int | None = None
    span_masking_cumulative_weights: tuple | None = None
    # optimization
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_decay: float | None = None
    peak_learning_rate: float | None = None
    minimum_learning_rate: float | None = None
    learning_rate_schedule: str | None = None
    learning_rate_warmup_ratio: float | None = None
    learning_rate_warmup_steps: int | None = None
    training_steps: int | None = None
    batch_size: int | None = None
    # finetuning / evaluation
    max_sequence_length: int | None = None
    stride: int = 160
    max_answer_patches: int = 30
    early_stopping: bool = True
    early_stopping_patience: int = 5
    eval_steps: int | None = None
    pooling: str = "cls"
    n_classes: int | None = None

    _TYPES = {
        "task": str,
        "profile": str,
        "seed": int,
        "train_data": str,
        "eval_data": str,
        "atlas": str,
        "patch_size": int,
        "image_channels": int,
        "max_patches": int,
        "encoder_hidden_size": int,
        "encoder_intermediate_size": int,
        "encoder_num_attention_heads": int,
        "encoder_num_layers": int,
        "decoder_hidden_size": int,
        "decoder_intermediate_size": int,
        "decoder_num_attention_heads": int,
        "decoder_num_layers": int,
        "layer_norm_eps": float,
        "dropout_probability": float,
        "span_masking_ratio": float,
        "span_masking_max_length": int,
        "span_masking_cumulative_weights": _parse_floats,
        "adam_beta1": float,
        "adam_beta2": float,
        "adam_eps": float,
        "weight_decay": float,
        "peak_learning_rate": float,
        "learning_rate": float,  # finetuning-table alias for peak_learning_rate
        "minimum_learning_rate": float,
        "learning_rate_schedule": str,
        "learning_rate_warmup_ratio": float,
        "learning_rate_warmup_steps": int,
        "training_steps": int,
        "max_steps": int,  # finetuning-table alias for training_steps
        "batch_size": int,
        "max_sequence_length": int,
        "stride": int,
        "max_answer_patches": int,
        "early_stopping": _parse_bool,
        "early_stopping_patience": int,
        "eval_steps": int,
        "pooling": str,
        "n_classes": int,
    }
    _ALIASES = {"learning_rate": "peak_learning_rate", "max_steps": "training_steps"}

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}, expected one of {TASKS}")
        if self.profile not in PROFILES:
            raise ConfigError(f"unknown profile {self.profile!r}, expected one of {PROFILES}")
        if self.learning_rate_schedule is not None and self.learning_rate_schedule not in SCHEDULES:
            raise ConfigError(
                f"unknown schedule {self.learning_rate_schedule!r}, expected one of {tuple(SCHEDULES)}"
            )

    # -- loading ---------------------------------------------------------------

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        values = {}
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
            key, _, raw = stripped.partition("=")
            key = key.strip()
            raw = raw.strip()
            if key not in cls._TYPES:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            if key in values or cls._ALIASES.get(key) in values:
                raise ConfigError(f"line {lineno}: duplicate key {key!r}")
            try:
                value = cls._TYPES[key](raw)
            except ConfigError:
                raise
            except ValueError as exc:
                raise ConfigError(f"line {lineno}: bad value for {key}: {raw!r}") from exc
            values[cls._ALIASES.get(key, key)] = value
        cfg = cls(**values)
        cfg.validate_paths()
        return cfg

    def validate_paths(self):
        for key in ("train_data", "eval_data", "atlas"):
            value = getattr(self, key)
            if value is not None and not Path(value).exists():
                raise ConfigError(f"{key} path does not exist: {value}")

    # -- resolution --------------------------------------------------------------

    def pixel_config(self) -> PixelConfig:
        base = BASE_PROFILE if self.profile == "base" else TOY_PROFILE
        overrides = {}
        mapping = {
            "patch_size": "patch_size",
            "image_channels": "channels",
            "max_patches": "max_patches",
            "encoder_hidden_size": "enc_width",
            "encoder_intermediate_size": "enc_intermediate",
            "encoder_num_attention_heads": "enc_heads",
            "encoder_num_layers": "enc_layers",
            "decoder_hidden_size": "dec_width",
            "decoder_intermediate_size": "dec_intermediate",
            "decoder_num_attention_heads": "dec_heads",
            "decoder_num_layers": "dec_layers",
            "layer_norm_eps": "layer_norm_eps",
            "dropout_probability": "dropout",
            "span_masking_ratio": "mask_ratio",
            "span_masking_max_length": "mask_max_span",
            "span_masking_cumulative_weights": "mask_cumulative_weights",
        }
        for key, target in mapping.items():
            value = getattr(self, key)
            if value is not None:
                overrides[target] = value
        return replace(base, **overrides) if overrides else base

    def optimizer_config(self) -> OptimizerConfig:
        pretraining = self.task == "pretrain"
        if self.profile == "base" and pretraining:
            defaults = dict(weight_decay=0.05, peak_lr=1.5e-4, min_lr=1e-5,
                            schedule="cosine_decay", steps=1_000_000, warmup_ratio=0.05)
        elif pretraining:
            defaults = dict(weight_decay=0.05, peak_lr=3e-3, min_lr=3e-4,
                            schedule="cosine_decay", steps=1500, warmup_ratio=0.04)
        else:
            defaults = dict(weight_decay=0.0, peak_lr=5e-5, min_lr=1e-8,
                            schedule="linear_decay", steps=15_000, warmup_steps=100)
        total = self.training_steps if self.training_steps is not None else defaults["steps"]
        if self.learning_rate_warmup_steps is not None:
            warmup = self.learning_rate_warmup_steps
        elif self.learning_rate_warmup_ratio is not None:
            warmup = int(round(self.learning_rate_warmup_ratio * total))
        elif "warmup_steps" in defaults:
            warmup = min(defaults["warmup_steps"], total)
        else:
            warmup = int(round(defaults["warmup_ratio"] * total))
        schedule = self.learning_rate_schedule or defaults["schedule"]
        return OptimizerConfig(
            beta1=self.adam_beta1,
            beta2=self.adam_beta2,
            epsilon=self.adam_eps,
            weight_decay=self.weight_decay if self.weight_decay is not None else defaults["weight_decay"],
            peak_lr=self.peak_learning_rate if self.peak_learning_rate is not None else defaults["peak_lr"],
            min_lr=self.minimum_learning_rate if self.minimum_learning_rate is not None else defaults["min_lr"],
            warmup_steps=warmup,
            total_steps=total,
            schedule_kind=SCHEDULES[schedule],
        )

    def effective_batch_size(self) -> int:
        if self.batch_size is not None:
            return self.batch_size
        if self.task == "pretrain":
            return 256 if self.profile == "base" else 8
        return 64 if self.profile == "base" else 16

    def sequence_budget(self) -> int:
        """Patch budget for rendering: finetuning-table max length or the
        model's own limit."""
        limit = self.pixel_config().max_patches
        if self.max_sequence_length is not None:
            return min(self.max_sequence_length, limit)
        return limit

    # -- echo ----------------------------------------------------------------------

    def write_resolved(self, path) -> None:
        lines = ["# resolved run configuration"]
        for f in fields(self):
            if f.name.startswith("_"):
                continue
            value = getattr(self, f.name)
            if value is None:
                continue
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            lines.append(f"{f.name} = {value}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
