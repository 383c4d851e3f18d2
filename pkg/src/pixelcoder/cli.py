"""Command line interface.

    pixelcoder render       --text "..." --out DIR [--atlas PATH]
    pixelcoder pretrain     --config PATH --out DIR [--seed N]
    pixelcoder finetune     --config PATH --out DIR [--checkpoint PATH]
    pixelcoder evaluate     --config PATH --checkpoint PATH [--out DIR]
    pixelcoder attack       --kind K --level F --seed N --in FILE --out FILE
    pixelcoder reconstruct  --checkpoint PATH --text "..." --out DIR [--seed N]
    pixelcoder bench-render --in FILE --out DIR [--config PATH]
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .atlas import default_atlas, load_atlas
from .attacks import ATTACK_KINDS, AttackConfig, apply_attack
from .checkpoint import load_checkpoint
from .config import RunConfig
from .model import mask_for_sequence, reconstruct_pixels
from .png import write_png
from .render import RendererConfig, render_text
from .runner import bench_render, renderer_config, run_evaluate, run_finetune, run_pretrain


def _load_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "atlas", None) is not None:
        cfg.atlas = args.atlas
        cfg.validate_paths()
    return cfg


def _read_text(args) -> str:
    if args.text is not None:
        return args.text
    if args.infile is not None:
        return Path(args.infile).read_text(encoding="utf-8").rstrip("\n")
    raise SystemExit("need --text or --in")


def cmd_render(args):
    cfg = _load_config(args)
    atlas = load_atlas(cfg.atlas) if cfg.atlas else default_atlas()
    rcfg = renderer_config(cfg)
    seq = render_text(_read_text(args), rcfg, atlas)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_png(out / "rendered.png", seq.pixels)
    meta = {
        "num_patches": seq.num_patches,
        "num_text_patches": seq.num_text_patches,
        "patch_types": [t.name for t in seq.patch_types],
        "truncated": seq.truncated,
    }
    (out / "rendered.json").write_text(json.dumps(meta, indent=2))
    print(f"rendered {seq.num_text_patches} text patches -> {out / 'rendered.png'}")


def cmd_pretrain(args):
    cfg = _load_config(args)
    summary = run_pretrain(cfg, args.out)
    print(json.dumps(summary, indent=2, default=float))


def cmd_finetune(args):
    cfg = _load_config(args)
    result = run_finetune(cfg, args.out, init_checkpoint=args.checkpoint)
    print(json.dumps(result, indent=2, default=float))


def cmd_evaluate(args):
    if not args.checkpoint:
        raise SystemExit("evaluate needs --checkpoint")
    cfg = _load_config(args)
    report = run_evaluate(cfg, args.checkpoint, out_dir=args.out)
    print(json.dumps(report, indent=2, default=float))


def cmd_attack(args):
    cfg = AttackConfig(kind=args.kind, level=args.level, seed=args.seed)
    text = Path(args.infile).read_text(encoding="utf-8")
    lines = text.split("\n")
    attacked = [apply_attack(line, cfg) if line else line for line in lines]
    Path(args.out).write_text("\n".join(attacked), encoding="utf-8")
    print(f"attacked {sum(1 for line in lines if line)} lines -> {args.out}")


def cmd_reconstruct(args):
    params, _, step, _ = load_checkpoint(args.checkpoint)
    cfg = _load_config(args)
    atlas = load_atlas(cfg.atlas) if cfg.atlas else default_atlas()
    rcfg = RendererConfig(
        patch_size=params.cfg.patch_size,
        canvas_height=params.cfg.patch_size,
        channels=params.cfg.channels,
        max_patches=params.cfg.max_patches,
    )
    seq = render_text(_read_text(args), rcfg, atlas)
    mask = mask_for_sequence(seq, params.cfg, np.random.default_rng(cfg.seed))
    image = reconstruct_pixels(seq, mask, params)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_png(out / "original.png", seq.pixels)
    masked_img = seq.pixels.copy()
    p = params.cfg.patch_size
    for i in mask.indices:
        masked_img[:, i * p : (i + 1) * p, :] = 0.5
    write_png(out / "masked.png", masked_img)
    write_png(out / "reconstructed.png", image)
    print(f"checkpoint step {step}; masked {len(mask.indices)} patches -> {out}")


def cmd_bench_render(args):
    cfg = _load_config(args)
    report = bench_render(args.infile, out_dir=args.out, cfg=cfg)
    print(
        f"renderer: {report['render_examples_per_second']:.1f} ex/s, "
        f"whitespace tokenizer: {report['tokenize_examples_per_second']:.1f} ex/s "
        f"over {report['lines']} lines"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pixelcoder", description="pixel-based language encoding toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True, seed=True, atlas=True, checkpoint=False, out=True):
        if config:
            p.add_argument("--config", help="run configuration file (key = value lines)")
        if seed:
            p.add_argument("--seed", type=int, default=None)
        if atlas:
            p.add_argument("--atlas", help="glyph atlas file (.pxga)")
        if checkpoint:
            p.add_argument("--checkpoint", help="checkpoint file (.pxck)")
        if out:
            p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("render", help="rasterize text and write a PNG")
    p.add_argument("--text")
    p.add_argument("--in", dest="infile")
    common(p)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("pretrain", help="masked-autoencoder pretraining")
    common(p)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("finetune", help="finetune a task head")
    common(p, checkpoint=True)
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("evaluate", help="evaluate a finetuned checkpoint")
    common(p, checkpoint=True, out=False)
    p.add_argument("--out", help="optional output directory")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("attack", help="apply an orthographic attack to a text file")
    p.add_argument("--kind", required=True, choices=ATTACK_KINDS)
    p.add_argument("--level", required=True, type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True, help="output file")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("reconstruct", help="mask a rendering and show the model's fill")
    p.add_argument("--text")
    p.add_argument("--in", dest="infile")
    common(p, checkpoint=True)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("bench-render", help="throughput and length-distribution report")
    p.add_argument("--in", dest="infile", required=True)
    common(p)
    p.set_defaults(func=cmd_bench_render)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    args.func(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
