"""Command-line interface.

Subcommands: synth, calibrate, extract, train, predict, evaluate. All take
``--config FILE`` (section.key=value lines). Errors exit nonzero with a
one-line diagnostic on stderr.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import io as lio
from .classifier import LinearSvmModel, RandomForestModel, load_model, save_model
from .config import RunConfig
from .exceptions import LanewiseError
from .features import frame_features
from .lanemodel import LineFit, calibrate_offsets
from .overlay import render_overlay
from .pipeline import SelfPositioningPipeline, evaluate
from .preprocess import binarize, guided_filter


def _load_config(path) -> RunConfig:
    return RunConfig.from_file(path) if path else RunConfig()


def _clip_frames(clip_dir):
    for path in lio.clip_frame_paths(clip_dir):
        yield lio.frame_from_u8(lio.read_pgm(path))


def cmd_synth(args) -> int:
    from .synth import generate_corpus

    cfg = _load_config(args.config)
    generate_corpus(
        args.out,
        n_clips=cfg["synth.n_clips"],
        frames_per_clip=cfg["synth.frames_per_clip"],
        classes=cfg["synth.classes"] or None,
        noise=cfg["synth.noise"],
        occlusion_rate=cfg["synth.occlusion_rate"],
        brightness_jitter=cfg["synth.brightness_jitter"],
        seed=cfg["synth.seed"],
    )
    print(f"wrote corpus to {args.out}")
    return 0


def cmd_calibrate(args) -> int:
    points = lio.read_annotations(args.annotations)
    for idx in (4, 5):
        if idx not in points or points[idx].shape[0] < 2:
            raise LanewiseError(f"annotations must include center marker {idx}")
    cl = _fit_annotated_line(points[4])
    cr = _fit_annotated_line(points[5])
    offsets = calibrate_offsets(points, cl, cr)
    lio.write_offsets(args.out, offsets)
    print(f"wrote offsets to {args.out}")
    return 0


def _fit_annotated_line(pts) -> LineFit:
    from .lanemodel import least_squares_line

    return least_squares_line(pts, side="center annotation")


def cmd_extract(args) -> int:
    cfg = _load_config(args.config)
    root = Path(args.clips)
    labels = lio.read_labels_csv(root / "labels.csv")
    offsets = lio.read_offsets(args.offsets)
    clip_ids = args.ids.split(",") if args.ids else sorted(labels)
    pipeline = SelfPositioningPipeline(model=None, offsets=offsets, config=cfg)
    rows = []
    for clip_id in clip_ids:
        if clip_id not in labels:
            raise LanewiseError(f"clip {clip_id!r} not present in labels.csv")
        theta = labels[clip_id]
        last_model = None
        stale = 0
        for t, frame in enumerate(_clip_frames(root / clip_id)):
            filtered = guided_filter(frame, cfg["preprocess.radius"], cfg["preprocess.epsilon"])
            mask = binarize(frame, filtered, cfg["preprocess.delta"])
            try:
                model = pipeline.fit_frame_model(mask)
                last_model = model
                stale = 0
            except LanewiseError:
                stale += 1
                model = last_model if stale <= cfg["pipeline.fallback_frames"] else None
            if model is None:
                continue
            vec = frame_features(
                frame,
                mask,
                model,
                band_halfwidth=cfg["features.band_halfwidth"],
                step=cfg["features.step"],
            )
            rows.append((clip_id, t, theta, vec))
    lio.write_features(args.out, rows)
    print(f"wrote {len(rows)} feature rows to {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args.config)
    _, _, labels, X = lio.read_features(args.features)
    if args.model == "svm":
        model = LinearSvmModel(
            C=cfg["classifier.C"],
            epochs=cfg["classifier.epochs"],
            seed=cfg["classifier.seed"],
            calibration_folds=cfg["classifier.calibration_folds"],
        )
    else:
        model = RandomForestModel(
            n_trees=cfg["classifier.trees"],
            max_depth=cfg["classifier.max_depth"],
            min_leaf=cfg["classifier.min_leaf"],
            mtry=cfg["classifier.mtry"],
            seed=cfg["classifier.seed"],
        )
    model.fit(X, labels)
    save_model(model, args.out)
    train_acc = float((model.predict(X) == labels).all(axis=1).mean())
    print(f"trained {args.model} on {X.shape[0]} frames, training accuracy {train_acc:.4f}")
    return 0


def cmd_predict(args) -> int:
    cfg = _load_config(args.config)
    offsets_path = cfg["lanemodel.offsets_file"]
    if not offsets_path:
        raise LanewiseError("predict needs lanemodel.offsets_file set in the config")
    clip_dir = Path(args.clip)
    clip_id = clip_dir.name
    pipeline = SelfPositioningPipeline(
        model=load_model(args.model), offsets=lio.read_offsets(offsets_path), config=cfg
    )
    frames = list(_clip_frames(clip_dir))
    results = pipeline.process_clip(
        frames, smooth=args.smooth == "on", refine=args.refine == "on"
    )
    lio.write_predictions(
        sys.stdout, ((clip_id, r.frame_idx, r.final) for r in results)
    )
    if args.overlay:
        out_dir = lio.ensure_dir(args.overlay)
        last_model = None
        for r, frame in zip(results, frames):
            try:
                mask = binarize(
                    frame,
                    guided_filter(frame, cfg["preprocess.radius"], cfg["preprocess.epsilon"]),
                    cfg["preprocess.delta"],
                )
                last_model = pipeline.fit_frame_model(mask)
            except LanewiseError:
                pass
            rgb = render_overlay(frame, last_model, r.final, r.detections)
            lio.write_ppm(out_dir / f"overlay_{r.frame_idx:05d}.ppm", rgb)
    return 0


def cmd_evaluate(args) -> int:
    predictions = lio.read_predictions(args.pred)
    annotations = lio.read_labels_csv(args.labels)
    rows = [
        (clip_id, idx, None if theta == (0, 0) else theta)
        for clip_id, idx, theta in predictions
    ]
    report = evaluate(rows, annotations)
    print(report.format())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lanewise", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("calibrate", help="fit marker offsets from annotations")
    p.add_argument("--annotations", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("extract", help="dump per-frame feature vectors")
    p.add_argument("--clips", required=True, help="corpus root with labels.csv")
    p.add_argument("--offsets", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--ids", help="comma-separated clip ids (default: all)")
    p.add_argument("--config")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="train a classifier from a feature dump")
    p.add_argument("--model", choices=("svm", "forest"), required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="run the closed loop over one clip")
    p.add_argument("--clip", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--smooth", choices=("on", "off"), default="on")
    p.add_argument("--refine", choices=("on", "off"), default="on")
    p.add_argument("--overlay", help="directory for annotated PPM frames")
    p.add_argument("--config")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="score predictions against labels")
    p.add_argument("--pred", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--config")
    p.set_defaults(func=cmd_evaluate)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (LanewiseError, OSError) as exc:
        print(f"lanewise: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
