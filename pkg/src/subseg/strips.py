"""Segmentation strips as standalone SVG.

Per video three horizontal strips are drawn: ground truth, initial
predictions, decoded labels.  Each run of equal labels becomes one
rectangle whose width is proportional to its duration in segments.
Colors come from a fixed 20-color palette indexed by label (ground-truth
tokens are indexed through their sorted vocabulary); background gets a
neutral gray.  Output bytes are deterministic.
"""

from pathlib import Path

from .errors import ContractError
from .evaluator import label_runs
from .segmenter import BACKGROUND

PALETTE = (
    "#1f77b4", "#aec7e8", "#ff7f0e", "#ffbb78", "#2ca02c",
    "#98df8a", "#d62728", "#ff9896", "#9467bd", "#c5b0d5",
    "#8c564b", "#c49c94", "#e377c2", "#f7b6d2", "#7f7f7f",
    "#c7c7c7", "#bcbd22", "#dbdb8d", "#17becf", "#9edae5",
)
BACKGROUND_COLOR = "#cccccc"

STRIP_WIDTH = 900.0
STRIP_HEIGHT = 22
ROW_GAP = 6
VIDEO_GAP = 18
LEFT_MARGIN = 170.0
PAD = 10


def _color(index):
    if index == BACKGROUND:
        return BACKGROUND_COLOR
    return PALETTE[int(index) % len(PALETTE)]


def _strip(labels, to_index, x0, y):
    total = len(labels)
    parts = [f'<g class="strip">']
    for label, start, end in label_runs(labels):
        left = round(x0 + STRIP_WIDTH * start / total, 2)
        right = round(x0 + STRIP_WIDTH * end / total, 2)
        parts.append(
            f'<rect x="{left:.2f}" y="{y}" width="{right - left:.2f}" '
            f'height="{STRIP_HEIGHT}" fill="{_color(to_index(label))}"/>'
        )
    parts.append("</g>")
    return parts


def emit_strips(labelings, ground_truth, path):
    """Write the strip chart; ground_truth maps video id to per-segment
    tokens and may be None or partial (those rows are omitted)."""
    if not labelings:
        raise ContractError("strip chart needs at least one labeling")
    ground_truth = ground_truth or {}
    vocab = sorted({tok for labels in ground_truth.values() for tok in labels})
    gt_index = {tok: i for i, tok in enumerate(vocab)}

    body = []
    y = PAD
    for lab in labelings:
        rows = []
        if lab.video_id in ground_truth:
            rows.append(("truth", ground_truth[lab.video_id], lambda t: gt_index[t]))
        rows.append(("initial", lab.initial_labels, int))
        if lab.decoded_labels is not None:
            rows.append(("decoded", lab.decoded_labels, int))
        for name, labels, to_index in rows:
            body.append(
                f'<text x="{PAD}" y="{y + STRIP_HEIGHT - 6}" font-family="monospace" '
                f'font-size="12">{lab.video_id} {name}</text>'
            )
            body.extend(_strip(labels, to_index, LEFT_MARGIN, y))
            y += STRIP_HEIGHT + ROW_GAP
        y += VIDEO_GAP

    width = int(LEFT_MARGIN + STRIP_WIDTH + PAD)
    doc = "\n".join(
        [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{y}" '
         f'viewBox="0 0 {width} {y}">']
        + body + ["</svg>", ""]
    )
    Path(path).write_text(doc)
    return doc
