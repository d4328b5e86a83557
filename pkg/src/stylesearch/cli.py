"""Command-line entry points.

Subcommands cover the whole pipeline: gen-data, build-style-space, train,
build-index, eval, search, serve, export-embeddings. ``--seed``, ``--config``,
``--checkpoint``, ``--manifest`` and ``--out`` behave the same everywhere.
Offline subcommands drive the core package directly; ``search`` and the
service share one query engine, so both routes rank identically.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ModelConfig, TrainConfig, config_echo, load_config
from .data import generate_synthetic_gallery, load_image, load_manifest
from .engine import QueryEngine
from .errors import StyleSearchError
from .pipeline import load_checkpoint
from .retrieval import EmbeddingIndex, build_index, evaluate, export_embeddings
from .training import fit_style_space_only, train_two_pass

logger = logging.getLogger("stylesearch")


def _load_configs(args: argparse.Namespace) -> tuple[ModelConfig, TrainConfig]:
    if getattr(args, "config", None):
        model_cfg, train_cfg = load_config(args.config)
    else:
        model_cfg, train_cfg = ModelConfig(), TrainConfig()
    seed = getattr(args, "seed", None)
    if seed is not None:
        model_cfg = dataclasses.replace(model_cfg, init_seed=seed)
        train_cfg = dataclasses.replace(train_cfg, seed=seed)
    if getattr(args, "epochs", None) is not None:
        train_cfg = dataclasses.replace(train_cfg, epochs=args.epochs)
    return model_cfg, train_cfg


def _cmd_gen_data(args: argparse.Namespace) -> int:
    manifest = generate_synthetic_gallery(
        count=args.count,
        seed=args.seed if args.seed is not None else 0,
        output_dir=args.out,
        image_size=args.image_size,
        train_fraction=args.train_fraction,
    )
    print(manifest)
    return 0


def _cmd_build_style_space(args: argparse.Namespace) -> int:
    model_cfg, train_cfg = _load_configs(args)
    space = fit_style_space_only(args.manifest, model_cfg, train_cfg, args.out)
    print(
        json.dumps(
            {
                "out": str(args.out),
                "k": space.k,
                "inertia": round(space.inertia, 6),
                "iterations": space.fit_iterations,
            },
            sort_keys=True,
        )
    )
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    model_cfg, train_cfg = _load_configs(args)
    result = train_two_pass(args.manifest, model_cfg, train_cfg, args.out)
    print(
        json.dumps(
            {
                "checkpoint": str(result.checkpoint_path),
                "metrics": str(result.metrics_path),
                "epochs": len(result.epoch_losses),
                "final_loss": round(result.epoch_losses[-1], 6) if result.epoch_losses else None,
            },
            sort_keys=True,
        )
    )
    return 0


def _cmd_build_index(args: argparse.Namespace) -> int:
    model, _, _ = load_checkpoint(args.checkpoint)
    records = load_manifest(args.manifest)
    index = build_index(model, records, args.manifest)
    index.save(args.out)
    print(json.dumps({"out": str(args.out), "items": len(index.ids)}, sort_keys=True))
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    model, train_cfg, _ = load_checkpoint(args.checkpoint)
    index = EmbeddingIndex.load(args.index)
    records = load_manifest(args.manifest)
    report = evaluate(model, index, records, args.manifest, split=args.split)
    report.config = config_echo(model.config, train_cfg or TrainConfig())
    text = report.to_json()
    sys.stdout.write(text)
    if args.out:
        Path(args.out).write_text(text)
    return 0


def _cmd_search(args: argparse.Namespace) -> int:
    engine = QueryEngine.load(args.checkpoint, args.index, args.manifest)
    images = []
    for tag in ("sketch", "art", "lowres", "image"):
        path = getattr(args, tag)
        if path:
            images.append((tag, load_image(path, image_size=engine.model.config.image_size)))
    outcome = engine.search(args.text, images, args.k)
    print(
        json.dumps(
            {
                "components": outcome.components,
                "fingerprint": engine.fingerprint,
                "results": [
                    {"gallery_id": gid, "score": round(score, 6)}
                    for gid, score in outcome.result.entries
                ],
            },
            sort_keys=True,
            indent=2,
        )
    )
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(args.checkpoint, args.index, args.manifest)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def _cmd_export_embeddings(args: argparse.Namespace) -> int:
    model, _, _ = load_checkpoint(args.checkpoint)
    records = load_manifest(args.manifest)
    export_embeddings(model, records, args.manifest, args.out)
    print(json.dumps({"out": str(args.out)}, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stylesearch", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, *names: str) -> None:
        if "seed" in names:
            p.add_argument("--seed", type=int, default=None, help="override all seeds")
        if "config" in names:
            p.add_argument("--config", type=str, default=None, help="YAML config file")
        if "checkpoint" in names:
            p.add_argument("--checkpoint", type=str, required=True)
        if "manifest" in names:
            p.add_argument("--manifest", type=str, required=True)
        if "out" in names:
            p.add_argument("--out", type=str, required=True)

    p = sub.add_parser("gen-data", help="generate the synthetic gallery and manifest")
    p.add_argument("--count", type=int, default=200)
    p.add_argument("--image-size", type=int, default=64)
    p.add_argument("--train-fraction", type=float, default=0.8)
    common(p, "seed", "out")
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("build-style-space", help="fit and persist the style space (pass one)")
    common(p, "seed", "config", "manifest", "out")
    p.set_defaults(func=_cmd_build_style_space)

    p = sub.add_parser("train", help="two-pass training; writes checkpoint and metrics")
    p.add_argument("--epochs", type=int, default=None, help="override configured epochs")
    common(p, "seed", "config", "manifest", "out")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("build-index", help="embed all gallery images into an index file")
    common(p, "seed", "checkpoint", "manifest", "out")
    p.set_defaults(func=_cmd_build_index)

    p = sub.add_parser("eval", help="per-style and fused R@k report")
    p.add_argument("--index", type=str, required=True)
    p.add_argument("--split", type=str, default="test", choices=("train", "test"))
    p.add_argument("--out", type=str, default=None, help="also write the report here")
    common(p, "seed", "checkpoint", "manifest")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("search", help="rank the gallery for a composed query")
    p.add_argument("--index", type=str, required=True)
    p.add_argument("--text", type=str, default=None)
    p.add_argument("--sketch", type=str, default=None)
    p.add_argument("--art", type=str, default=None)
    p.add_argument("--lowres", type=str, default=None)
    p.add_argument("--image", type=str, default=None)
    p.add_argument("-k", "--k", type=int, default=10)
    p.add_argument("--manifest", type=str, default=None, help="optional, for thumbnail paths")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--checkpoint", type=str, required=True)
    p.set_defaults(func=_cmd_search)

    p = sub.add_parser("serve", help="run the HTTP retrieval service")
    p.add_argument("--index", type=str, required=True)
    p.add_argument("--host", type=str, default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    common(p, "seed", "checkpoint", "manifest")
    p.set_defaults(func=_cmd_serve)

    p = sub.add_parser("export-embeddings", help="dump query/gallery embeddings to npz")
    common(p, "seed", "checkpoint", "manifest", "out")
    p.set_defaults(func=_cmd_export_embeddings)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except StyleSearchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
