"""Command-line surface.

Subcommands: synth (synthetic dataset), train (one model per activity),
segment (labels from a checkpoint), eval (Hungarian-matched metrics),
pipeline (train + segment + eval + strips in one go), viz (SVG strips
from label files), ksweep (MoF as the concept count varies).

Exit codes: 0 success, 1 usage or configuration problems, 2 data or
format problems, 3 numeric divergence.  The SUBSEG_SEED environment
variable overrides --seed everywhere.
"""

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import figures, formats, strips, synthetic
from .encoding import (DEFAULT_FRAME_SPAN, DEFAULT_GROUPS, DEFAULT_PE_DIM,
                       PosEncodingConfig, encode_sequence)
from .errors import (ConfigError, DegenerateInputError, DivergenceError,
                     InventoryError, SubsegError)
from .evaluator import evaluate, expand_segments
from .segmenter import BackgroundPolicy, segment_activity
from .trainer import TrainConfig, train


def build_parser():
    parser = argparse.ArgumentParser(
        prog="subseg",
        description="Unsupervised sub-action segmentation of activity videos.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--videos", type=int, default=10)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--min-segments", type=int, default=40)
    p.add_argument("--max-segments", type=int, default=80)
    p.add_argument("--mean-scale", type=float, default=1.0)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--permutation-rate", type=float, default=0.0)
    p.add_argument("--dropout-rate", type=float, default=0.0)
    p.add_argument("--activities", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)

    def add_train_flags(q):
        q.add_argument("--k", type=int, default=None,
                       help="concept count (default: the manifest's per-activity value)")
        q.add_argument("--epochs", type=int, default=100)
        q.add_argument("--batch-size", type=int, default=256)
        q.add_argument("--lr", type=float, default=1e-4)
        q.add_argument("--beta", dest="position_weight", type=float, default=1.0)
        q.add_argument("--lambda", dest="recon_weight", type=float, default=1.0)
        q.add_argument("--gamma", dest="contrast_weight", type=float, default=1.0)
        q.add_argument("--groups", type=int, default=DEFAULT_GROUPS)
        q.add_argument("--pe-dim", type=int, default=DEFAULT_PE_DIM)
        q.add_argument("--embed-dim", type=int, default=1024)
        q.add_argument("--seed", type=int, default=0)
        q.add_argument("--no-pe", action="store_true")
        q.add_argument("--no-skip", action="store_true")
        q.add_argument("--no-ld", action="store_true")
        q.add_argument("--no-lf", action="store_true")
        q.add_argument("--no-lp", action="store_true")

    p = sub.add_parser("train", help="train one model per activity")
    p.add_argument("--manifest", required=True)
    p.add_argument("--activity", default=None)
    p.add_argument("--out", required=True)
    add_train_flags(p)

    p = sub.add_parser("segment", help="decode labels from a checkpoint")
    p.add_argument("--manifest", required=True)
    p.add_argument("--activity", default=None)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--bg-ratio", type=float, default=0.0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="score label files against ground truth")
    p.add_argument("--manifest", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--matching", choices=("activity", "video"), default="activity")
    p.add_argument("--out", required=True)

    p = sub.add_parser("pipeline", help="train, segment, evaluate, render strips")
    p.add_argument("--manifest", required=True)
    p.add_argument("--activity", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--bg-ratio", type=float, default=0.0)
    p.add_argument("--matching", choices=("activity", "video"), default="activity")
    add_train_flags(p)

    p = sub.add_parser("viz", help="render segmentation strips from label files")
    p.add_argument("--manifest", required=True)
    p.add_argument("--activity", default=None)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("ksweep", help="MoF as the concept count varies")
    p.add_argument("--manifest", required=True)
    p.add_argument("--activity", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--span", type=int, default=2,
                   help="sweep from K-span to K+span around the center")
    p.add_argument("--center-k", type=int, default=None)
    p.add_argument("--sweep-seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--bg-ratio", type=float, default=0.0)
    add_train_flags(p)
    return parser


def resolve_seed(seed):
    env = os.environ.get("SUBSEG_SEED")
    if env is None:
        return seed
    try:
        return int(env)
    except ValueError as exc:
        raise ConfigError(f"SUBSEG_SEED={env!r} is not an integer") from exc


def pick_activities(manifest, name):
    if name is None:
        return manifest.activities
    return [manifest.activity(name)]


def load_sequences(manifest, activity, enc_cfg, frame_span=DEFAULT_FRAME_SPAN):
    sequences = []
    for video in activity.videos:
        feats = formats.load_features(manifest.resolve(video.feature_path))
        want = -(-video.frame_count // frame_span)
        if feats.shape[0] != want:
            raise formats.IngestionError(
                f"{video.id}: {feats.shape[0]} feature rows but frame count "
                f"{video.frame_count} implies {want} segments of {frame_span} frames"
            )
        sequences.append(encode_sequence(feats, enc_cfg, video_id=video.id,
                                         frame_span=frame_span))
    return sequences


def make_train_config(args, k):
    return TrainConfig(
        concept_count=k,
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr=args.lr,
        seed=resolve_seed(args.seed),
        latent_dim=args.embed_dim,
        recon_weight=args.recon_weight,
        contrast_weight=args.contrast_weight,
        position_weight=args.position_weight,
        use_feature_loss=not args.no_lf,
        use_position_loss=not args.no_lp,
        use_contrastive=not args.no_ld,
        use_skip=not args.no_skip,
        use_pe=not args.no_pe,
    )


def train_one(manifest, activity, args):
    cfg = make_train_config(args, args.k if args.k is not None else activity.k)
    enc_cfg = PosEncodingConfig(groups=args.groups, dim=args.pe_dim)
    sequences = load_sequences(manifest, activity, enc_cfg)
    return train(sequences, cfg), sequences


def write_labelings(outdir, labelings):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    for lab in labelings:
        formats.write_labels(outdir / f"{lab.video_id}.initial.txt", lab.initial_labels)
        formats.write_labels(outdir / f"{lab.video_id}.decoded.txt", lab.decoded_labels)


def eval_from_labels(manifest, activities, labels_dir, matching,
                     frame_span=DEFAULT_FRAME_SPAN):
    """Build frame-level prediction/GT dicts from files and score them.

    Returns (document, decoded EvalReport, initial EvalReport or None);
    the initial section is present only when every video has an initial
    label file.
    """
    labels_dir = Path(labels_dir)
    gts, decoded, initial, counts = {}, {}, {}, {}
    have_initial = True
    missing = []
    for act in activities:
        vids = [v for v in act.videos if v.gt_path is not None]
        if not vids:
            continue
        gts[act.name] = {}
        decoded[act.name] = {}
        initial[act.name] = {}
        max_label = -1
        for video in vids:
            gts[act.name][video.id] = formats.load_gt_frames(manifest.resolve(video.gt_path))
            path = labels_dir / f"{video.id}.decoded.txt"
            if not path.is_file():
                missing.append(f"{act.name}/{video.id}")
                continue
            segs = formats.load_labels(path)
            decoded[act.name][video.id] = expand_segments(segs, frame_span,
                                                          video.frame_count)
            max_label = max(max_label, int(segs.max(initial=-1)))
            ipath = labels_dir / f"{video.id}.initial.txt"
            if ipath.is_file():
                isegs = formats.load_labels(ipath)
                initial[act.name][video.id] = expand_segments(
                    isegs, frame_span, video.frame_count)
                max_label = max(max_label, int(isegs.max(initial=-1)))
            else:
                have_initial = False
        counts[act.name] = max(act.k, max_label + 1)
    if missing:
        raise InventoryError("label files missing for: " + ", ".join(sorted(missing)))
    if not gts:
        raise DegenerateInputError("no ground truth available for evaluation")

    decoded_report = evaluate(decoded, gts, mode=matching, cluster_counts=counts)
    doc = {"decoded": decoded_report.to_dict()}
    initial_report = None
    if have_initial:
        initial_report = evaluate(initial, gts, mode=matching, cluster_counts=counts)
        doc["initial"] = initial_report.to_dict()
    return doc, decoded_report, initial_report


def cmd_synth(args):
    spec = synthetic.SyntheticSpec(
        concept_count=args.k, videos=args.videos, dim=args.dim,
        min_segments=args.min_segments, max_segments=args.max_segments,
        mean_scale=args.mean_scale, noise=args.noise,
        permutation_rate=args.permutation_rate, dropout_rate=args.dropout_rate,
    )
    _, path = synthetic.generate_synthetic(spec, resolve_seed(args.seed), args.out,
                                           activities=args.activities)
    print(f"wrote {path}")
    return 0


def cmd_train(args):
    manifest = formats.load_manifest(args.manifest)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    for act in pick_activities(manifest, args.activity):
        model, _ = train_one(manifest, act, args)
        ckpt = outdir / f"{act.name}.ckpt"
        formats.save_checkpoint(ckpt, model, args.groups)
        formats.write_loss_log(outdir / f"{act.name}.loss.tsv", model.loss_trace)
        figures.loss_curve(model.loss_trace, outdir / f"{act.name}.loss.png")
        final = model.loss_trace[-1]
        print(f"trained {act.name}: {ckpt} (final loss {final.total:.6f})")
    return 0


def cmd_segment(args):
    manifest = formats.load_manifest(args.manifest)
    model, groups = formats.load_checkpoint(args.checkpoint)
    acts = pick_activities(manifest, args.activity)
    if args.activity is None and len(acts) != 1:
        raise ConfigError("--activity is required when the manifest has several")
    act = acts[0]
    enc_cfg = PosEncodingConfig(groups=groups, dim=model.net.pe_dim)
    sequences = load_sequences(manifest, act, enc_cfg)
    labelings, _ = segment_activity(model, sequences,
                                    BackgroundPolicy(ratio=args.bg_ratio))
    write_labelings(args.out, labelings)
    print(f"wrote labels for {len(labelings)} videos to {args.out}")
    return 0


def cmd_eval(args):
    manifest = formats.load_manifest(args.manifest)
    doc, decoded, _ = eval_from_labels(manifest, manifest.activities, args.labels,
                                       args.matching)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    formats.write_report(out, doc)
    fig_path = out.with_name(out.stem + "_mof.png")
    figures.mof_bars(decoded.per_activity, fig_path,
                     initial=doc.get("initial", {}).get("per_activity"))
    print(f"wrote {out}")
    print(f"MoF {decoded.mof:.4f}  MoC {decoded.moc:.4f}  F1 {decoded.mean_f1:.4f}")
    return 0


def cmd_pipeline(args):
    manifest = formats.load_manifest(args.manifest)
    outdir = Path(args.out)
    labels_dir = outdir / "labels"
    strips_dir = outdir / "strips"
    outdir.mkdir(parents=True, exist_ok=True)
    strips_dir.mkdir(parents=True, exist_ok=True)
    acts = pick_activities(manifest, args.activity)
    for act in acts:
        model, sequences = train_one(manifest, act, args)
        formats.save_checkpoint(outdir / f"{act.name}.ckpt", model, args.groups)
        formats.write_loss_log(outdir / f"{act.name}.loss.tsv", model.loss_trace)
        figures.loss_curve(model.loss_trace, outdir / f"{act.name}.loss.png")
        labelings, _ = segment_activity(model, sequences,
                                        BackgroundPolicy(ratio=args.bg_ratio))
        write_labelings(labels_dir, labelings)
        gt = {}
        for video in act.videos:
            if video.gt_path is not None:
                gt[video.id] = formats.load_ground_truth(manifest.resolve(video.gt_path))
        strips.emit_strips(labelings, gt, strips_dir / f"{act.name}.svg")
    doc, decoded, _ = eval_from_labels(manifest, acts, labels_dir, args.matching)
    report_path = outdir / "report.json"
    formats.write_report(report_path, doc)
    figures.mof_bars(decoded.per_activity, outdir / "report_mof.png",
                     initial=doc.get("initial", {}).get("per_activity"))
    print(f"wrote {report_path}")
    print(f"MoF {decoded.mof:.4f}  MoC {decoded.moc:.4f}  F1 {decoded.mean_f1:.4f}")
    return 0


def cmd_viz(args):
    manifest = formats.load_manifest(args.manifest)
    acts = pick_activities(manifest, args.activity)
    labels_dir = Path(args.labels)
    labelings = []
    gt = {}
    from .segmenter import VideoLabeling
    for act in acts:
        for video in act.videos:
            dec = labels_dir / f"{video.id}.decoded.txt"
            init = labels_dir / f"{video.id}.initial.txt"
            if not init.is_file():
                raise InventoryError(f"label files missing for: {act.name}/{video.id}")
            labelings.append(VideoLabeling(
                video_id=video.id,
                initial_labels=formats.load_labels(init),
                confidences=None,
                decoded_labels=formats.load_labels(dec) if dec.is_file() else None,
            ))
            if video.gt_path is not None:
                gt[video.id] = formats.load_ground_truth(manifest.resolve(video.gt_path))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    strips.emit_strips(labelings, gt, out)
    print(f"wrote {out}")
    return 0


def cmd_ksweep(args):
    manifest = formats.load_manifest(args.manifest)
    acts = pick_activities(manifest, args.activity)
    if len(acts) != 1:
        raise ConfigError("ksweep works on a single activity; pass --activity")
    act = acts[0]
    center = args.center_k if args.center_k is not None else act.k
    ks = [k for k in range(center - args.span, center + args.span + 1) if k >= 2]
    if not ks:
        raise ConfigError(f"no admissible concept counts around {center}")

    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    rows = []
    for k in ks:
        per_seed = []
        for seed in args.sweep_seeds:
            run_args = argparse.Namespace(**vars(args))
            run_args.k = k
            run_args.seed = seed
            model, sequences = train_one(manifest, act, run_args)
            labelings, _ = segment_activity(model, sequences,
                                            BackgroundPolicy(ratio=args.bg_ratio))
            run_dir = outdir / f"k{k}_seed{seed}"
            write_labelings(run_dir, labelings)
            _, decoded, _ = eval_from_labels(manifest, [act], run_dir, "activity")
            per_seed.append(decoded.mof)
        rows.append((k, float(np.mean(per_seed)), per_seed))

    table = outdir / "ksweep.tsv"
    lines = []
    for k, mean, per_seed in rows:
        cells = [str(k), repr(mean)] + [repr(v) for v in per_seed]
        lines.append("\t".join(cells))
    table.write_text("\n".join(lines) + "\n")
    figures.mof_vs_k([r[0] for r in rows], [r[1] for r in rows],
                     outdir / "ksweep.png", true_k=act.k)
    for k, mean, _ in rows:
        print(f"k={k}\tmof={mean:.4f}")
    print(f"wrote {table}")
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "segment": cmd_segment,
    "eval": cmd_eval,
    "pipeline": cmd_pipeline,
    "viz": cmd_viz,
    "ksweep": cmd_ksweep,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except SubsegError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entry():
    sys.exit(main(sys.argv[1:]))


if __name__ == "__main__":
    entry()
