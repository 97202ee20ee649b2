"""Command line interface.

Subcommands cover the whole pipeline: synthesizing a demo corpus, training
an experiment arm, freezing and optimizing deployable bundles, previewing
augmentations, rendering saliency overlays, and serving the HTTP API.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import augment as aug
from . import data as data_mod
from . import evaluate as eval_mod
from . import export
from . import saliency as sal
from . import synthetic
from .backbone import ModelSpec, build_model, init_weights, load_weights, save_weights
from .trainer import ExperimentArm, Hyperparams, run_experiment


def _load_config(path) -> dict:
    if path is None:
        return {}
    return json.loads(Path(path).read_text(encoding="utf-8"))


def cmd_make_dataset(args) -> int:
    root = synthetic.generate_corpus(args.out, per_class=args.per_class,
                                     size=args.size, seed=args.seed)
    print(f"wrote {args.per_class} images x {len(synthetic.CLASS_NAMES)} classes under {root}")
    return 0


def cmd_train(args) -> int:
    config = _load_config(args.config)
    hp = Hyperparams.from_dict({**Hyperparams(seed=args.seed).to_dict(),
                                **config.get("hyperparams", {})})
    spec = ModelSpec(input_size=args.input_size, width_multiplier=args.width,
                     num_classes=len(data_mod.scan_dataset(args.data).classes))
    if args.weights:
        store, _ = load_weights(args.weights, spec)
    else:
        store = init_weights(spec, hp.seed)
    augmentation = None
    if "augmentation" in config:
        augmentation = aug.AugmentationConfig.from_dict(config["augmentation"])

    arm = ExperimentArm(args.arm)
    result = run_experiment(args.data, arm, spec, store, hp,
                            augmentation=augmentation,
                            validation_source=config.get("validation_source", "test"),
                            resample_test=config.get("resample_test", True))

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    trained = dict(store.entries)
    trained["head/weights"] = result.head_weights
    trained["head/bias"] = result.head_bias
    ckpt = export.Checkpoint(
        store=type(store)(trained),
        spec=spec,
        labels=result.metrics["class_names"],
        hyperparams=hp.to_dict(),
        adam_tensors=result.adam_tensors,
        adam_steps=result.adam_steps,
        preprocessing=result.metrics["config"]["preprocessing"],
    )
    export.save_checkpoint(ckpt, out)
    metrics_path = out.with_suffix(".metrics.json")
    metrics_path.write_text(result.metrics_json() + "\n", encoding="utf-8")
    report_path = out.with_suffix(".report.txt")
    report_path.write_text(eval_mod.report_text(result.metrics), encoding="utf-8")
    cm = eval_mod.ConfusionMatrix(counts=np.asarray(result.metrics["confusion"], dtype=np.int64),
                                  class_names=result.metrics["class_names"])
    out.with_suffix(".confusion.png").write_bytes(eval_mod.render_png(cm))
    out.with_suffix(".confusion_normalized.png").write_bytes(
        eval_mod.render_png(cm, normalized=True))
    if result.plan is not None:
        out.with_suffix(".split.json").write_text(result.plan.to_json() + "\n", encoding="utf-8")

    print(f"arm {arm.label}: rank-1 accuracy {result.metrics['accuracy']:.4f} "
          f"({result.train_log.wall_time_seconds:.1f}s)")
    print(f"checkpoint: {out}")
    print(f"metrics:    {metrics_path}")
    print(f"report:     {report_path}")
    return 0


def cmd_init_weights(args) -> int:
    spec = ModelSpec(input_size=args.input_size, width_multiplier=args.width,
                     num_classes=args.num_classes)
    store = init_weights(spec, args.seed)
    size = save_weights(store, args.out)
    print(f"wrote {len(store)} tensors ({size / 1e6:.3f} MB) to {args.out}")
    return 0


def cmd_freeze(args) -> int:
    ckpt = export.load_checkpoint(args.checkpoint)
    bundle = export.freeze(ckpt)
    size = export.save_bundle(bundle, args.out, labels_path=args.labels)
    labels_path = args.labels or f"{args.out}.labels.txt"
    print(f"frozen bundle: {args.out} ({size / 1e6:.3f} MB), labels: {labels_path}")
    return 0


def cmd_optimize(args) -> int:
    bundle, _ = export.load_bundle(args.bundle)
    folded = export.optimize(bundle)
    size = export.save_bundle(folded, args.out)
    print(f"optimized bundle: {args.out} ({size / 1e6:.3f} MB), "
          f"{len(bundle.store)} -> {len(folded.store)} tensors")
    return 0


def cmd_augment_preview(args) -> int:
    img = data_mod.load_image(args.image, args.size)
    config = aug.AugmentationConfig()
    if args.config:
        config = aug.AugmentationConfig.from_dict(_load_config(args.config))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    from PIL import Image

    for i in range(args.count):
        rng = aug.item_rng(args.seed, 0, i)
        warped = aug.augment(img, config, rng)  # [0, 1]
        png = np.clip(np.round(warped * 255.0), 0, 255).astype(np.uint8)
        Image.fromarray(png, mode="RGB").save(out_dir / f"augmented_{i:03d}.png")
    print(f"wrote {args.count} previews to {out_dir}")
    return 0


def cmd_saliency(args) -> int:
    bundle, _ = export.load_bundle(args.model)
    if args.cls in bundle.labels:
        class_index = bundle.labels.index(args.cls)
    else:
        try:
            class_index = int(args.cls)
        except ValueError:
            raise SystemExit(f"unknown class {args.cls!r}; labels: {bundle.labels}")
    size = bundle.spec.input_size
    raw = data_mod.load_image(args.image, size)
    batch = data_mod.PREPROCESSORS[bundle.preprocessing](raw)
    chain = build_model(bundle.spec, bundle.store, folded=bundle.optimized)
    smap = sal.saliency(chain, batch, class_index)
    png = sal.render_heatmap(smap, raw, alpha=args.alpha)
    Path(args.out).write_bytes(png)
    flag = " (flat gradient field)" if smap.flat else ""
    print(f"saliency for class {bundle.labels[class_index]!r} -> {args.out}{flag}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .serve import create_app

    bundle = args.bundle or os.environ.get("MOBIDERM_BUNDLE")
    port = args.port or int(os.environ.get("MOBIDERM_PORT", "8000"))
    if bundle is None:
        print("warning: no bundle given; API will answer 503 until /api/reload", file=sys.stderr)
    app = create_app(bundle_path=bundle, static_dir=args.static)
    uvicorn.run(app, host=args.host, port=port, log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mobiderm",
                                     description="skin disease classification pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-dataset", help="generate a synthetic demo corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--per-class", type=int, default=200)
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_make_dataset)

    p = sub.add_parser("train", help="run one experiment arm and save a checkpoint")
    p.add_argument("--data", required=True, help="class-per-directory corpus root")
    p.add_argument("--arm", required=True, choices=["A", "B", "C", "D"])
    p.add_argument("--config", help="JSON config (hyperparams, augmentation, ...)")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--weights", help="backbone weight file (random init if omitted)")
    p.add_argument("--width", type=float, default=1.0)
    p.add_argument("--input-size", type=int, default=224)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("init-weights", help="write a seeded random weight file")
    p.add_argument("--out", required=True)
    p.add_argument("--width", type=float, default=1.0)
    p.add_argument("--input-size", type=int, default=224)
    p.add_argument("--num-classes", type=int, default=7)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_init_weights)

    p = sub.add_parser("freeze", help="checkpoint -> frozen bundle + labels file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--labels", help="labels file path (default <out>.labels.txt)")
    p.set_defaults(func=cmd_freeze)

    p = sub.add_parser("optimize", help="fold batchnorm into convolutions")
    p.add_argument("--bundle", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("augment-preview", help="write augmented samples of one image")
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=8)
    p.add_argument("--size", type=int, default=224)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="JSON augmentation config")
    p.set_defaults(func=cmd_augment_preview)

    p = sub.add_parser("saliency", help="render a saliency overlay PNG")
    p.add_argument("--model", required=True, help="frozen or optimized bundle")
    p.add_argument("--image", required=True)
    p.add_argument("--class", dest="cls", required=True, help="class name or index")
    p.add_argument("--out", required=True)
    p.add_argument("--alpha", type=float, default=0.5)
    p.set_defaults(func=cmd_saliency)

    p = sub.add_parser("serve", help="run the HTTP inference service")
    p.add_argument("--bundle", help="bundle path (or MOBIDERM_BUNDLE env var)")
    p.add_argument("--port", type=int, help="port (or MOBIDERM_PORT env var, default 8000)")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--static", help="directory of web UI assets to serve at /")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
