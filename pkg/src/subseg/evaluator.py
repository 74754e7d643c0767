"""Hungarian-matched segmentation metrics.

Predicted cluster ids carry no inherent class meaning, so scoring first
finds a one-to-one cluster-to-class mapping by minimum-cost assignment
on negative frame-overlap counts, either once per activity (standard
protocol) or independently per video.  On the mapped frame labels we
report MoF (pooled frame accuracy), MoC (unweighted mean of per-activity
MoF) and a segment-level F1.

Frames whose prediction is the background label are left out of the
overlap counts and the MoF denominators; that is exactly the protocol
used when a background policy is active, and a no-op otherwise.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ContractError, DegenerateInputError, InventoryError
from .segmenter import BACKGROUND

# mapped value for foreground clusters the assignment could not place on
# a real class (they count as wrong, unlike background)
UNMAPPED = -2


def hungarian(cost):
    """Minimum-cost perfect assignment; returns (column per row, total).

    Rectangular inputs are padded to square with sentinel entries of
    1 + max absolute value, so padded rows/columns never displace a real
    optimum; the reported total is for the padded problem.
    """
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2 or cost.shape[0] == 0 or cost.shape[1] == 0:
        raise ContractError(f"cost matrix shape {cost.shape} is unusable")
    if not np.all(np.isfinite(cost)):
        raise ContractError("cost matrix contains non-finite entries")
    rows, cols = cost.shape
    if rows != cols:
        side = max(rows, cols)
        sentinel = 1.0 + np.max(np.abs(cost))
        padded = np.full((side, side), sentinel)
        padded[:rows, :cols] = cost
        cost = padded
    row_ind, col_ind = linear_sum_assignment(cost)
    assignment = np.empty(cost.shape[0], dtype=int)
    assignment[row_ind] = col_ind
    return assignment, float(cost[row_ind, col_ind].sum())


def overlap_counts(pred_frames, gt_frames, n_clusters, n_classes):
    """Cluster-by-class co-occurrence counts over foreground frames."""
    pred_frames = np.asarray(pred_frames)
    gt_frames = np.asarray(gt_frames)
    if pred_frames.shape != gt_frames.shape:
        raise ContractError(
            f"prediction length {pred_frames.shape} != ground truth {gt_frames.shape}"
        )
    fg = pred_frames != BACKGROUND
    for name, values, bound in (("cluster", pred_frames[fg], n_clusters),
                                ("class", gt_frames[fg], n_classes)):
        bad = values[(values < 0) | (values >= bound)]
        if bad.size:
            raise ContractError(
                f"{name} id {int(bad[0])} outside [0, {bound})"
            )
    flat = pred_frames[fg] * n_classes + gt_frames[fg]
    counts = np.bincount(flat, minlength=n_clusters * n_classes)
    return counts.reshape(n_clusters, n_classes)


def match_clusters(predictions, ground_truths, n_clusters, n_classes, mode="activity"):
    """Optimal cluster-to-class mapping for one activity.

    mode="activity" pools overlap counts over all videos and solves one
    assignment; mode="video" solves one per video.  Returns
    {cluster: class} or {video_id: {cluster: class}} accordingly; padded
    (nonexistent) classes are dropped from the mapping.
    """
    if mode not in ("activity", "video"):
        raise ContractError(f"unknown matching mode {mode!r}")
    if n_clusters < 1 or n_classes < 1:
        raise DegenerateInputError("empty overlap matrix: no clusters or no classes")

    def solve(counts):
        if counts.sum() == 0:
            raise DegenerateInputError("empty overlap matrix: no foreground frames")
        assignment, _ = hungarian(-counts.astype(float))
        return {c: int(assignment[c]) for c in range(n_clusters)
                if assignment[c] < n_classes}

    if mode == "activity":
        pooled = np.zeros((n_clusters, n_classes), dtype=np.int64)
        for vid in predictions:
            pooled += overlap_counts(predictions[vid], ground_truths[vid],
                                     n_clusters, n_classes)
        return solve(pooled)
    return {vid: solve(overlap_counts(predictions[vid], ground_truths[vid],
                                      n_clusters, n_classes))
            for vid in predictions}


def apply_mapping(pred_frames, mapping):
    """Rewrite cluster ids as class ids; background stays, unplaced
    clusters become a distinct always-wrong value."""
    pred_frames = np.asarray(pred_frames)
    out = np.full(pred_frames.shape, UNMAPPED, dtype=int)
    out[pred_frames == BACKGROUND] = BACKGROUND
    for cluster, cls in mapping.items():
        out[pred_frames == cluster] = cls
    return out


def mof(mapped_frames, gt_frames):
    """Pooled frame accuracy, background predictions excluded."""
    mapped_frames = np.asarray(mapped_frames)
    gt_frames = np.asarray(gt_frames)
    if mapped_frames.shape != gt_frames.shape:
        raise ContractError(
            f"prediction length {mapped_frames.shape} != ground truth {gt_frames.shape}"
        )
    fg = mapped_frames != BACKGROUND
    total = int(fg.sum())
    if total == 0:
        return 0.0
    return float((mapped_frames[fg] == gt_frames[fg]).sum() / total)


def moc(per_activity_mof):
    """Unweighted mean of per-activity MoF values."""
    values = list(per_activity_mof)
    if not values:
        raise ContractError("MoC needs at least one activity")
    return float(np.mean(values))


def label_runs(frames):
    """Maximal constant runs as (label, start, end_exclusive) triples."""
    frames = np.asarray(frames)
    if len(frames) == 0:
        return []
    breaks = np.flatnonzero(frames[1:] != frames[:-1]) + 1
    starts = np.concatenate([[0], breaks])
    ends = np.concatenate([breaks, [len(frames)]])
    return [(frames[s], int(s), int(e)) for s, e in zip(starts, ends)]


def f1_counts(mapped_frames, gt_frames):
    """Segment-level detection counts for one video.

    A ground-truth segment is credited when at least half of its frames
    carry its class in the mapped prediction; its detector is the
    correct-class predicted run overlapping it the most (earliest run on
    ties).  Returns (credited, gt segments, detector runs, predicted
    runs); background runs are not detectors.
    """
    mapped_frames = np.asarray(mapped_frames)
    gt_frames = np.asarray(gt_frames)
    gt_runs = label_runs(gt_frames)
    pred_runs = [(lab, s, e) for lab, s, e in label_runs(mapped_frames)
                 if lab != BACKGROUND]
    credited = 0
    detectors = set()
    for label, start, end in gt_runs:
        span = end - start
        hits = int((mapped_frames[start:end] == label).sum())
        if 2 * hits < span:
            continue
        credited += 1
        best_run, best_overlap = None, 0
        for idx, (plab, ps, pe) in enumerate(pred_runs):
            if plab != label:
                continue
            overlap = min(end, pe) - max(start, ps)
            if overlap > best_overlap:
                best_run, best_overlap = idx, overlap
        if best_run is not None:
            detectors.add(best_run)
    return credited, len(gt_runs), len(detectors), len(pred_runs)


def f1_from_counts(credited, gt_total, detectors, pred_total):
    recall = credited / gt_total if gt_total else 0.0
    precision = detectors / pred_total if pred_total else 0.0
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def f1(mapped_by_video, gt_by_video):
    """Activity-level F1: counts pooled over the activity's videos."""
    totals = np.zeros(4, dtype=int)
    for vid in mapped_by_video:
        totals += np.array(f1_counts(mapped_by_video[vid], gt_by_video[vid]))
    return f1_from_counts(*totals)


def expand_segments(segment_labels, frame_span, frame_count):
    """Repeat each segment label over its frame span, truncated to the
    true video length."""
    frames = np.repeat(np.asarray(segment_labels), frame_span)
    if len(frames) < frame_count:
        raise ContractError(
            f"{len(segment_labels)} segments x {frame_span} frames cover "
            f"{len(frames)} < {frame_count} frames"
        )
    return frames[:frame_count]


@dataclass
class EvalReport:
    matching_mode: str
    mapping: dict          # activity -> {cluster: class token} (or per video)
    per_activity: dict     # activity -> {"mof": float, "f1": float}
    mof: float             # pooled over all activities' foreground frames
    moc: float
    mean_f1: float

    def to_dict(self):
        def keyed(m):
            return {str(k): (keyed(v) if isinstance(v, dict) else v)
                    for k, v in m.items()}

        return {
            "matching_mode": self.matching_mode,
            "mapping": keyed(self.mapping),
            "per_activity": {
                a: {"mof": v["mof"], "f1": v["f1"]}
                for a, v in self.per_activity.items()
            },
            "mof": self.mof,
            "moc": self.moc,
            "mean_f1": self.mean_f1,
        }


def evaluate(predictions, ground_truths, mode="activity", cluster_counts=None):
    """Score frame-level predictions against ground truth.

    predictions / ground_truths: {activity: {video_id: frame labels}};
    ground-truth labels may be arbitrary tokens (the per-activity class
    vocabulary is their sorted unique set).  cluster_counts optionally
    pins the number of clusters per activity; otherwise it is inferred
    from the predictions.
    """
    missing = sorted(
        f"{act}/{vid}"
        for act in ground_truths
        for vid in ground_truths[act]
        if act not in predictions or vid not in predictions[act]
    )
    if missing:
        raise InventoryError("predictions missing for: " + ", ".join(missing))

    mapping_out = {}
    per_activity = {}
    pooled_correct = 0
    pooled_total = 0
    for act in sorted(ground_truths):
        gts = ground_truths[act]
        preds = {vid: np.asarray(predictions[act][vid]) for vid in gts}
        vocab = sorted(set(np.concatenate([np.asarray(gts[vid]) for vid in gts]).tolist()))
        index = {tok: i for i, tok in enumerate(vocab)}
        gt_idx = {vid: np.array([index[t] for t in np.asarray(gts[vid]).tolist()])
                  for vid in gts}
        if cluster_counts and act in cluster_counts:
            n_clusters = cluster_counts[act]
        else:
            n_clusters = max(int(preds[vid].max(initial=-1)) for vid in preds) + 1
        mapping = match_clusters(preds, gt_idx, n_clusters, len(vocab), mode=mode)
        if mode == "activity":
            mapped = {vid: apply_mapping(preds[vid], mapping) for vid in preds}
            mapping_out[act] = {c: vocab[cls] for c, cls in mapping.items()}
        else:
            mapped = {vid: apply_mapping(preds[vid], mapping[vid]) for vid in preds}
            mapping_out[act] = {vid: {c: vocab[cls] for c, cls in mapping[vid].items()}
                                for vid in preds}
        all_mapped = np.concatenate([mapped[vid] for vid in sorted(gts)])
        all_gt = np.concatenate([gt_idx[vid] for vid in sorted(gts)])
        fg = all_mapped != BACKGROUND
        pooled_correct += int((all_mapped[fg] == all_gt[fg]).sum())
        pooled_total += int(fg.sum())
        per_activity[act] = {
            "mof": mof(all_mapped, all_gt),
            "f1": f1(mapped, gt_idx),
        }

    activities = sorted(per_activity)
    return EvalReport(
        matching_mode=mode,
        mapping=mapping_out,
        per_activity=per_activity,
        mof=(pooled_correct / pooled_total) if pooled_total else 0.0,
        moc=moc([per_activity[a]["mof"] for a in activities]),
        mean_f1=float(np.mean([per_activity[a]["f1"] for a in activities])),
    )
