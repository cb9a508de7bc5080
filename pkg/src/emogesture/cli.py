"""Command-line interface.

Commands::

    emogesture prepare   --out CORPUS [--takes N] [--emotion-skew balanced|paper] [--force]
    emogesture train     --corpus CORPUS [--out RUNS] [--epochs E] [--profile desk|paper]
    emogesture train-vae --run RUN --corpus CORPUS [--epochs E]
    emogesture generate  --run RUN --corpus CORPUS --out DIR [--emotion-mode M] [--samples S]
    emogesture evaluate  --corpus CORPUS (--generated DIR | --ground-truth) --out DIR
    emogesture plot      --out DIR [--run RUN] [--generated DIR]

Shared flags: ``--config FILE`` (JSON training config), ``--seed``. Flags
override config-file values. On failure a single line
``error: <ErrorClass>: <message>`` goes to stderr and the exit code is the
class's ``exit_code`` (see :mod:`emogesture.errors`).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import torch

from . import metrics
from .config import EMOTION_MODES, desk_profile, load_config, merge, paper_profile, to_dict
from .dataset import CorpusConfig, CorpusManifest, generate_synthetic_corpus, load_arrays
from .errors import ConfigError, EmoGestureError, MissingArtifactError, ValidationError
from .generator import generate
from .motion import PoseSequence, load_pose, save_pose
from .training import (
    load_generator,
    load_vae,
    model_config_for,
    read_history_csv,
    run_dir_name,
    train_main,
    train_vae_stage,
)

GENERATION_FORMAT = "emogesture-generation/1"
EXIT_CODES_DOC = """exit codes:
  0 success            1 unexpected error      2 configuration / usage
  3 invalid input      4 missing prerequisite  5 unreadable artifact
  6 non-finite loss    7 frozen backbone changed"""

log = logging.getLogger("emogesture")


# -- helpers -----------------------------------------------------------------


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise MissingArtifactError(f"{what} not found: {path}")
    return path


def _manifest(corpus) -> CorpusManifest:
    return CorpusManifest.load(_require(Path(corpus) / "manifest.json", "corpus manifest"))


def _train_config(args, manifest: CorpusManifest):
    base = paper_profile() if args.profile == "paper" else desk_profile()
    cfg = merge(base, load_config(args.config) if args.config else None)
    if args.seed is not None:
        cfg.seed = args.seed
    if getattr(args, "epochs", None) is not None:
        cfg.epochs = args.epochs
    if getattr(args, "batch_size", None) is not None:
        cfg.batch_size = args.batch_size
    fixed = model_config_for(manifest)
    for key in ("n_joints", "n_emotions", "vocab_size", "n_frames"):
        setattr(cfg.model, key, getattr(fixed, key))
    return cfg.validate()


def _write_json(path: Path, data):
    path.write_text(json.dumps(data, indent=1, sort_keys=True))


def _read_generation(gen_dir: Path):
    index = json.loads(_require(gen_dir / "generation.json", "generation index").read_text())
    if index.get("format") != GENERATION_FORMAT:
        raise ValidationError(f"{gen_dir / 'generation.json'} is not a {GENERATION_FORMAT} index")
    return index


# -- commands ----------------------------------------------------------------


def cmd_prepare(args):
    out = Path(args.out)
    if out.exists() and any(out.iterdir()) and not args.force:
        raise ValidationError(f"{out} exists and is not empty; pass --force to overwrite")
    config = CorpusConfig(n_takes=args.takes, skew=args.emotion_skew)
    if args.config:
        for key, value in load_config(args.config).items():
            if not hasattr(config, key):
                raise ConfigError(f"unknown corpus config key '{key}'")
            setattr(config, key, tuple(value) if isinstance(value, list) else value)
    manifest = generate_synthetic_corpus(out, config, seed=args.seed or 0)
    print(f"corpus: {out} ({len(manifest.takes)} takes, {len(manifest.clips)} clips)")
    for split in ("train", "val", "test"):
        takes = [t for t in manifest.takes if t["split"] == split]
        per = {e: sum(1 for t in takes if t["emotion"] == e) for e in manifest.emotions}
        n_clips = len(manifest.split(split))
        print(f"  {split:5s} takes={len(takes):4d} clips={n_clips:5d} " +
              " ".join(f"{e}={c}" for e, c in per.items()))
    print(f"manifest sha256: {manifest.digest()}")
    return 0


def cmd_train(args):
    manifest = _manifest(args.corpus)
    cfg = _train_config(args, manifest)
    run_dir = Path(args.out) / (args.name or run_dir_name(cfg.seed))
    if run_dir.exists():
        raise ValidationError(f"run directory {run_dir} already exists")
    run_dir.mkdir(parents=True)
    _write_json(run_dir / "config.json", to_dict(cfg))
    _write_json(run_dir / "run.json", {"corpus": str(Path(args.corpus).resolve()),
                                       "corpus_sha256": manifest.digest(), "seed": cfg.seed})
    train = load_arrays(manifest, "train")

    def progress(epoch, row):
        print(f"epoch {epoch + 1}/{cfg.epochs} " +
              " ".join(f"{k}={row[k]:.4f}" for k in ("total", "rec", "adv", "beat", "emo", "smooth", "d_loss")),
              flush=True)

    train_main(train, cfg, run_dir=run_dir, progress=None if args.quiet else progress)
    print(f"run_dir: {run_dir}")
    return 0


def cmd_train_vae(args):
    run_dir = Path(args.run)
    model, _, cfg = load_generator(_require(run_dir / "checkpoint.npz", "generator checkpoint"))
    manifest = _manifest(args.corpus)
    if args.epochs is not None:
        cfg.vae.epochs = args.epochs
    if args.seed is not None:
        cfg.seed = args.seed
    out_dir = Path(args.out) if args.out else run_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    _, losses = train_vae_stage(model, load_arrays(manifest, "train"), cfg, run_dir=out_dir)
    for k, v in enumerate(losses):
        print(f"vae epoch {k + 1}/{len(losses)} loss={v:.4f}")
    print(f"vae: {out_dir / 'emotion_vae.npz'}")
    return 0


def cmd_generate(args):
    run_dir = Path(args.run)
    model, _, cfg = load_generator(_require(run_dir / "checkpoint.npz", "generator checkpoint"))
    manifest = _manifest(args.corpus)
    mode = args.emotion_mode
    if mode == "onehot" or (mode is None and cfg.model.emotion_input == "onehot"):
        mode = "onehot"
    mode = mode or "encoded"
    cvae = None
    if mode == "sampled":
        cvae, _ = load_vae(_require(run_dir / "emotion_vae.npz", "emotion VAE checkpoint (run train-vae first)"))
    samples = args.samples if args.samples is not None else (20 if mode == "sampled" else 1)
    if samples < 1:
        raise ValidationError("--samples must be >= 1")
    if mode != "sampled" and samples > 1:
        raise ValidationError(f"{mode} mode is deterministic; --samples > 1 needs --emotion-mode sampled")
    arrays = load_arrays(manifest, args.split)
    if args.limit:
        arrays = arrays.subset(np.arange(min(args.limit, len(arrays))))
    if len(arrays) == 0:
        raise ValidationError(f"split {args.split!r} has no clips")
    labels = arrays.labels.copy()
    if args.emotion is not None:
        labels[:] = manifest.label_index(args.emotion)
    code = torch.nn.functional.one_hot(torch.from_numpy(labels), len(manifest.emotions)).float()
    mels = torch.from_numpy(arrays.mels)
    init = torch.from_numpy(arrays.poses[:, : cfg.model.n_init])
    base_seed = args.seed if args.seed is not None else 0
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    entries = [{"clip_id": cid, "label": int(lab), "emotion": manifest.emotions[lab], "files": []}
               for cid, lab in zip(arrays.clip_ids, labels)]
    for s in range(samples):
        poses = generate(model, mels, init, mode, label=code, cvae=cvae, seed=base_seed + s).numpy()
        for entry, frames in zip(entries, poses):
            rel = f"{entry['clip_id']}/sample_{s:03d}"
            save_pose(out / rel, PoseSequence(frames.astype(np.float32), manifest.fps))
            entry["files"].append(rel + ".f32")
    index = {"format": GENERATION_FORMAT, "run": str(run_dir.resolve()), "emotion_mode": mode,
             "samples": samples, "seed": base_seed, "split": args.split, "clips": entries}
    _write_json(out / "generation.json", index)
    if args.render:
        from .plotting import render_sequence

        for entry in entries:
            frames = load_pose(out / entry["files"][0]).frames
            render_sequence(frames, out / entry["clip_id"] / "frames", every=args.render_every)
    print(f"generated {len(entries)} clips x {samples} samples ({mode}) -> {out}")
    return 0


def _evaluators(args, manifest):
    path = Path(args.evaluators) if args.evaluators else Path(args.out) / "evaluators.npz"
    if path.exists():
        return metrics.load_evaluators(path)
    train, val = load_arrays(manifest, "train"), load_arrays(manifest, "val")
    classifier = metrics.train_emotion_classifier(train.poses, train.labels, val.poses, val.labels,
                                                  len(manifest.emotions), seed=0)
    autoencoder = metrics.train_gesture_autoencoder(train.poses, seed=0)
    path.parent.mkdir(parents=True, exist_ok=True)
    metrics.save_evaluators(path, classifier, autoencoder)
    return classifier, autoencoder


def cmd_evaluate(args):
    manifest = _manifest(args.corpus)
    if args.ground_truth == bool(args.generated):
        raise ConfigError("pass exactly one of --generated DIR or --ground-truth")
    if args.ground_truth:
        arrays = load_arrays(manifest, args.split)
        real, labels = arrays.poses, arrays.labels
        fake = real[None]
    else:
        gen_dir = Path(args.generated)
        index = _read_generation(gen_dir)
        arrays = load_arrays(manifest, index["split"])
        by_id = {cid: k for k, cid in enumerate(arrays.clip_ids)}
        missing = [c["clip_id"] for c in index["clips"] if c["clip_id"] not in by_id]
        if missing:
            raise ValidationError(f"generated clips not in the corpus split: {missing[:3]}")
        arrays = arrays.subset([by_id[c["clip_id"]] for c in index["clips"]])
        real = arrays.poses
        labels = np.array([c["label"] for c in index["clips"]])
        fake = np.stack([
            np.stack([load_pose(_require(gen_dir / c["files"][s], "generated pose file"),
                                expected_joints=manifest.n_joints).frames for c in index["clips"]])
            for s in range(index["samples"])
        ])
    classifier, autoencoder = _evaluators(args, manifest)
    report = metrics.evaluate_set(real, fake, labels, arrays.audio_beats, manifest.fps,
                                  classifier, autoencoder)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "metrics.json", report.to_json())
    print(report.table())
    print(f"metrics: {out / 'metrics.json'}")
    return 0


def cmd_plot(args):
    from .plotting import plot_loss_curves, render_keyframes

    if not args.run and not args.generated:
        raise ConfigError("plot needs --run and/or --generated")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.run:
        history = read_history_csv(_require(Path(args.run) / "losses.csv", "loss log"))
        print(f"wrote {plot_loss_curves(history, out / 'loss_curves.png')}")
    if args.generated:
        gen_dir = Path(args.generated)
        index = _read_generation(gen_dir)
        for entry in index["clips"][: args.clips]:
            frames = load_pose(_require(gen_dir / entry["files"][0], "generated pose file")).frames
            path = render_keyframes(frames, out / f"keyframes_{entry['clip_id']}.png",
                                    title=f"{entry['clip_id']} ({entry['emotion']})")
            print(f"wrote {path}")
    return 0


# -- parser ------------------------------------------------------------------


def build_parser():
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", help="JSON config file; flags override its values")
    shared.add_argument("--seed", type=int, default=None, help="random seed")
    shared.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="emogesture", description=__doc__.split("\n")[0],
                                     epilog=EXIT_CODES_DOC,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", parents=[shared], help="generate the synthetic corpus")
    p.add_argument("--out", required=True, help="corpus directory")
    p.add_argument("--takes", type=int, default=100)
    p.add_argument("--emotion-skew", choices=("balanced", "paper"), default="balanced")
    p.add_argument("--force", action="store_true", help="allow writing into a non-empty directory")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", parents=[shared], help="adversarial generator training")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", default="runs", help="parent directory for the run directory")
    p.add_argument("--name", help="run directory name (default: timestamp and seed)")
    p.add_argument("--profile", choices=("desk", "paper"), default="desk")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("train-vae", parents=[shared], help="emotion VAE on the frozen generator")
    p.add_argument("--run", required=True, help="run directory holding checkpoint.npz")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", help="output directory (default: the run directory)")
    p.add_argument("--epochs", type=int)
    p.set_defaults(func=cmd_train_vae)

    p = sub.add_parser("generate", parents=[shared], help="generate gestures for corpus clips")
    p.add_argument("--run", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.add_argument("--limit", type=int, help="use only the first K clips of the split")
    p.add_argument("--emotion-mode", choices=EMOTION_MODES)
    p.add_argument("--emotion", help="conditioning emotion for every clip (default: clip label)")
    p.add_argument("--samples", type=int, help="generations per clip (sampled mode)")
    p.add_argument("--render", action="store_true", help="also write stick-figure frames")
    p.add_argument("--render-every", type=int, default=1)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", parents=[shared], help="compute the metric suite")
    p.add_argument("--corpus", required=True)
    p.add_argument("--generated", help="directory written by 'generate'")
    p.add_argument("--ground-truth", action="store_true", help="evaluate the corpus against itself")
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.add_argument("--evaluators", help="cached evaluator checkpoint (default: OUT/evaluators.npz)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("plot", parents=[shared], help="loss curves and pose keyframes")
    p.add_argument("--out", required=True)
    p.add_argument("--run")
    p.add_argument("--generated")
    p.add_argument("--clips", type=int, default=1)
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except EmoGestureError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error: MissingArtifactError: {exc}", file=sys.stderr)
        return MissingArtifactError.exit_code
    except KeyboardInterrupt:
        print("error: Interrupted: stopped by user", file=sys.stderr)
        return 130


if __name__ == "__main__":
    sys.exit(main())
