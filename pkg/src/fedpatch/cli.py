"""Command-line pipeline: gen-data, train, evaluate, heatmap."""

import argparse
import sys
from pathlib import Path

from . import dataset, federation, heatmap
from .config import load_config, parse_blocks
from .evaluation import build_matrix
from .nn import load_weights, save_weights
from .seeding import derive_seed

SLIDE_DIR = "slide"
SITES_DIR = "sites"
CHECKPOINT_DIR = "checkpoints"


def _load_shards(data_dir):
    data_dir = Path(data_dir)
    site_dirs = sorted((data_dir / SITES_DIR).glob("site*"))
    if not site_dirs:
        raise FileNotFoundError(f"no site manifests under {data_dir / SITES_DIR}")
    return [dataset.read_manifest(d) for d in site_dirs]


def cmd_gen_data(cfg, out_dir):
    out_dir = Path(out_dir)
    profiles = dataset.default_eight_sites(cfg.scale, cfg.master_seed,
                                           patch_side=cfg.input_side,
                                           channels=cfg.input_channels)
    for profile in profiles:
        shard = dataset.generate_site(profile)
        dataset.write_manifest(shard, out_dir / SITES_DIR / f"site{profile.site_id}")
        print(f"site {profile.site_id}: {len(shard.train)} train / "
              f"{len(shard.validation)} validation patches")
    slide, _ = heatmap.make_synthetic_slide(
        rows=12, cols=16, seed=derive_seed(cfg.master_seed, "demo-slide"),
        patch_side=cfg.input_side, channels=cfg.input_channels,
        patch_microns=cfg.patch_microns)
    heatmap.save_slide(slide, out_dir / SLIDE_DIR)
    print(f"slide: {slide.width_px}x{slide.height_px} px at "
          f"{slide.microns_per_pixel} mpp")


def cmd_train(cfg, mode, data_dir, out_dir, parallel=False):
    shards = _load_shards(data_dir)
    spec = cfg.network_spec()
    ckpt_dir = Path(out_dir) / CHECKPOINT_DIR
    ckpt_dir.mkdir(parents=True, exist_ok=True)

    if mode == "federated":
        consensus, history = federation.run_federated(
            cfg.federation_config(), spec, shards, parallel=parallel)
        save_weights(consensus, ckpt_dir / "consensus.fshd")
        federation.write_history_csv(history, [s.site_id for s in shards],
                                     Path(out_dir) / "history_federated.csv")
        print(f"consensus: {cfg.rounds} rounds, final mean local loss "
              f"{history[-1]['mean_local_loss']:.4f}")
    elif mode == "centralized":
        train, _ = dataset.pool_shards(shards)
        weights, losses = federation.run_centralized(
            spec, train.pixels, train.labels, cfg.total_epochs,
            master_seed=cfg.master_seed, learning_rate=cfg.learning_rate,
            batch_size=cfg.batch_size)
        save_weights(weights, ckpt_dir / "centralized.fshd")
        with open(Path(out_dir) / "history_centralized.csv", "w") as f:
            f.write("epoch,loss\n")
            for e, loss in enumerate(losses):
                f.write(f"{e},{loss:.8f}\n")
        print(f"centralized: {cfg.total_epochs} epochs, final loss "
              f"{losses[-1]:.4f}")
    elif mode == "site-specific":
        models = federation.run_site_specific(
            spec, shards, cfg.total_epochs, master_seed=cfg.master_seed,
            learning_rate=cfg.learning_rate, batch_size=cfg.batch_size)
        for site_id, weights in models.items():
            save_weights(weights, ckpt_dir / f"site{site_id}.fshd")
            print(f"site {site_id} model: {cfg.total_epochs} epochs")
    else:
        raise ValueError(f"unknown training mode {mode!r}")


def cmd_evaluate(cfg, data_dir, checkpoint_dir, out_dir):
    shards = _load_shards(data_dir)
    spec = cfg.network_spec()
    checkpoint_dir = Path(checkpoint_dir)
    models = {}
    for path in sorted(checkpoint_dir.glob("site*.fshd")):
        models[f"{path.stem} model"] = load_weights(path, spec)
    for name in ("consensus", "centralized"):
        path = checkpoint_dir / f"{name}.fshd"
        if path.exists():
            models[f"{name} model"] = load_weights(path, spec)
    if not models:
        raise FileNotFoundError(f"no checkpoints under {checkpoint_dir}")

    matrix = build_matrix(models, shards, threshold=cfg.threshold)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    matrix.to_csv(out_dir / "matrix.csv")
    text = matrix.to_text()
    (out_dir / "matrix.txt").write_text(text)
    print(text, end="")


def cmd_heatmap(cfg, checkpoint, slide_dir, out_dir):
    weights = load_weights(checkpoint, cfg.network_spec())
    slide = heatmap.load_slide(slide_dir)
    pmap = heatmap.score_slide(weights, slide, cfg.patch_microns,
                               slide_ref=str(slide_dir))
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    heatmap.render(pmap, out_dir / "heatmap.csv", out_dir / "heatmap.ppm")
    rows, cols = pmap.grid.shape
    print(f"heatmap: {rows}x{cols} grid, mean probability "
          f"{pmap.grid.mean():.4f}")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="fedpatch",
        description="Desk-scale federated averaging simulator for patch "
                    "classification")
    parser.add_argument("--config", help="INI config file; omitted fields "
                        "use desk-scale defaults")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--seed", type=int, dest="master_seed",
                        help="override the master seed")
    parser.add_argument("--scale", type=float, help="override dataset scale")
    parser.add_argument("--rounds", type=int, help="override federated rounds")
    parser.add_argument("--conv-blocks", type=parse_blocks, dest="conv_blocks",
                        help='override block layout, e.g. "8x1,16x1,32x1"')
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("gen-data", help="generate the 8-site synthetic manifests "
                   "and a demo slide")

    p_train = sub.add_parser("train", help="train one of the three scenarios")
    p_train.add_argument("--mode", required=True,
                         choices=["centralized", "federated", "site-specific"])
    p_train.add_argument("--data", help="directory from gen-data "
                         "(default: --out)")
    p_train.add_argument("--parallel", action="store_true",
                         help="run collaborators on threads")

    p_eval = sub.add_parser("evaluate", help="build the models-by-sites "
                            "balanced-accuracy matrix")
    p_eval.add_argument("--data", help="directory from gen-data (default: --out)")
    p_eval.add_argument("--checkpoints", help="checkpoint directory "
                        "(default: <out>/checkpoints)")

    p_map = sub.add_parser("heatmap", help="score a slide and render the "
                           "probability map")
    p_map.add_argument("--checkpoint", required=True)
    p_map.add_argument("--slide", help="slide directory "
                       "(default: <out>/slide)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        overrides = {k: getattr(args, k, None)
                     for k in ("master_seed", "scale", "rounds", "conv_blocks")}
        cfg = load_config(args.config, overrides)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "gen-data":
            cmd_gen_data(cfg, out)
        elif args.command == "train":
            cmd_train(cfg, args.mode, args.data or out, out,
                      parallel=args.parallel)
        elif args.command == "evaluate":
            cmd_evaluate(cfg, args.data or out,
                         args.checkpoints or out / CHECKPOINT_DIR, out)
        elif args.command == "heatmap":
            cmd_heatmap(cfg, args.checkpoint, args.slide or out / SLIDE_DIR, out)
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
