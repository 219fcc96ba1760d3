"""Command-line entry point: ``papilledema <command> [options]``.

Every command writes under ``--out`` and echoes the effective configuration
to ``effective_config.json``. Logs are JSON lines on stderr. Exit status is 0
on success, 2 for configuration or usage errors and 1 for any other failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .discdetect import propose_disc
from .evaluation import fold_summary, inner_split, repeated_cv
from .io import load_image, parse_manifest, save_image, save_mask
from .model import build_model, load_params, save_params
from .saliency import save_panel
from .seeding import derive_seed, rng_for
from .synthgen import generate_dataset
from .trainer import predict, torch_threads, train
from .views import ViewMode, make_views

log = logging.getLogger("papilledema")


def _dump(obj, path):
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _event(name, **fields):
    log.info(json.dumps({"event": name, **fields}, sort_keys=True))


def _manifest_path(args, rc: RunConfig):
    path = args.manifest or rc.paths.manifest
    if not path:
        raise ConfigError("no manifest given (use --manifest or paths.manifest)")
    return path


def _params_path(args):
    if not args.params:
        raise ConfigError("--params is required for this command")
    return args.params


def cmd_synth(args, rc: RunConfig, out: Path):
    manifest = generate_dataset(rc.seed, rc.dataset.n_subjects, rc.dataset.images_per_subject,
                                rc.synth, out)
    _event("synth", images=len(manifest), subjects=len(manifest.subjects), out=str(out))


def cmd_detect(args, rc: RunConfig, out: Path):
    if not args.images:
        raise ConfigError("detect needs at least one image")
    for path in args.images:
        prop = propose_disc(load_image(path), rc.morphology)
        dest = out / Path(path).stem
        dest.mkdir(parents=True, exist_ok=True)
        save_image(prop.crop, dest / "crop.png")
        save_mask(prop.disc_mask, dest / "disc_mask.png")
        save_mask(prop.retina_mask, dest / "retina_mask.png")
        _dump(prop.sidecar(), dest / "proposal.json")
        _event("detect", image=str(path), used_fallback=prop.used_fallback)


def cmd_views(args, rc: RunConfig, out: Path):
    if len(args.images) != 1:
        raise ConfigError("views takes exactly one image")
    crop = propose_disc(load_image(args.images[0]), rc.morphology).crop
    mode = ViewMode(rc.views.mode)
    tv = make_views(crop, rng_for(rc.seed, "views"), mode)
    save_image(tv.original, out / "original.png")
    save_image(tv.red_view, out / "red_view.png")
    save_image(tv.green_view, out / "green_view.png")
    save_image(np.concatenate([tv.original, tv.red_view, tv.green_view], axis=1), out / "views.png")
    _dump({"mode": mode.value, "red_factor": tv.factors[0], "green_factor": tv.factors[1]},
          out / "views.json")


def cmd_train(args, rc: RunConfig, out: Path):
    manifest = parse_manifest(_manifest_path(args, rc))
    tr, va = inner_split(manifest, manifest.subjects, rc.evaluation.val_fraction,
                         derive_seed(rc.seed, "split"))
    model = build_model(rc.model, seed=derive_seed(rc.seed, "init"))
    model, history = train(model, manifest.select_subjects(tr), manifest.select_subjects(va),
                           rc.train_config(), rc.morphology, workers=args.workers)
    save_params(model, out / "params.bin")
    (out / "history.json").write_text(history.to_json())
    _event("train", best_epoch=history.best_epoch, stopped_early=history.stopped_early)


def cmd_eval(args, rc: RunConfig, out: Path):
    manifest = parse_manifest(_manifest_path(args, rc))
    ev = rc.evaluation
    report = repeated_cv(manifest, k=ev.k, repeats=ev.repeats, train_cfg=rc.train_config(),
                         morph=rc.morphology, spec=rc.model, seed=rc.seed,
                         val_fraction=ev.val_fraction, workers=args.workers, mode=ev.mode,
                         test_fraction=ev.test_fraction)
    (out / "report.json").write_text(report.to_json())
    _event("eval", summary=fold_summary(report), **report.aggregate)


def cmd_predict(args, rc: RunConfig, out: Path):
    manifest = parse_manifest(_manifest_path(args, rc))
    model = load_params(_params_path(args))
    probs = predict(model, manifest, rc.morphology, workers=args.workers)
    rows = [{"image": str(r.image_path), "subject": r.subject_id, "probability": p}
            for r, p in zip(manifest, probs)]
    _dump({"predictions": rows}, out / "predictions.json")
    failed = sum(p is None for p in probs)
    _event("predict", images=len(rows), failed=failed)
    if failed:
        raise RuntimeError(f"{failed} of {len(rows)} images could not be scored (see predictions.json)")


def cmd_saliency(args, rc: RunConfig, out: Path):
    if len(args.images) != 1:
        raise ConfigError("saliency takes exactly one image")
    model = load_params(_params_path(args))
    crop = propose_disc(load_image(args.images[0]), rc.morphology).crop
    tv = make_views(crop, None, ViewMode.EVAL)
    save_panel(model, tv, out / "saliency.png")
    _event("saliency", image=str(args.images[0]))


COMMANDS = {
    "synth": (cmd_synth, "generate a synthetic fundus dataset"),
    "detect": (cmd_detect, "propose optic-disc crops for images"),
    "views": (cmd_views, "write the three contrast views of one image"),
    "train": (cmd_train, "train on a manifest (internal subject-grouped validation split)"),
    "eval": (cmd_eval, "subject-grouped repeated cross-validation"),
    "predict": (cmd_predict, "score images with trained parameters"),
    "saliency": (cmd_saliency, "render a 4-panel saliency figure for one image"),
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--workers", type=int, help="parallel workers (default from config)")
    common.add_argument("--out", help="output directory (default from config)")
    common.add_argument("--manifest", help="dataset manifest (overrides paths.manifest)")
    common.add_argument("--params", help="parameter container from `train`")
    common.add_argument("images", nargs="*", help="input images (detect, views, saliency)")
    parser = argparse.ArgumentParser(prog="papilledema", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=help_text)
    return parser


def _setup_logging():
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(message)s"))
    log.handlers[:] = [handler]
    log.setLevel(logging.INFO)
    log.propagate = False


def main(argv=None):
    args = build_parser().parse_args(argv)
    _setup_logging()
    try:
        rc = load_config(args.config).with_overrides(seed=args.seed, workers=args.workers)
        if args.out:
            rc = rc.with_overrides(paths=type(rc.paths)(rc.paths.manifest, args.out))
        args.workers = rc.workers
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        out = Path(rc.paths.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "effective_config.json").write_text(rc.to_json())
        # a fixed intra-op thread count keeps float reductions identical for any --workers
        with torch_threads(1):
            COMMANDS[args.command][0](args, rc, out)
    except ConfigError as exc:
        print(f"papilledema: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - one-line diagnostic for any failure
        print(f"papilledema: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
