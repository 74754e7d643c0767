"""From per-segment confidences to coherent sub-action labelings.

The pipeline for one activity: argmax concept assignments per segment,
optional background masking of the least-confident fraction, a temporal
ordering of the concept sets by mean normalized timestamp, a sparse
stay-or-advance transition model over that ordering, and a log-space
Viterbi pass per video.  Background segments are masked before ordering
and never enter the decoder; decoded labels are spliced back around
them.
"""

from dataclasses import dataclass, field

import numpy as np

from . import concepts as concepts_mod
from . import embedding as embed_mod
from .errors import ConfigError, ContractError, DecodingError

BACKGROUND = -1


@dataclass
class TransitionModel:
    order: np.ndarray      # permutation: temporal ordering of concept sets
    trans: np.ndarray      # K x K row-stochastic transition matrix
    terminal: int          # last set in the ordering


@dataclass
class VideoLabeling:
    video_id: str
    initial_labels: np.ndarray          # per segment; BACKGROUND where masked
    confidences: np.ndarray             # M x K
    background_mask: np.ndarray = None
    decoded_labels: np.ndarray = None

    def __post_init__(self):
        if self.background_mask is None:
            self.background_mask = np.zeros(len(self.initial_labels), dtype=bool)


@dataclass(frozen=True)
class BackgroundPolicy:
    """Fraction of least-confident segments to mask as background."""

    ratio: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.ratio < 1.0:
            raise ConfigError(f"background ratio must be in [0, 1), got {self.ratio}")


def initial_predictions(model, seq):
    """Per-segment argmax concept labels and full confidence rows."""
    net = model.net
    if seq.features.shape[1] != net.feature_dim or seq.pos_encodings.shape[1] != net.pe_dim:
        raise ContractError(
            f"sequence dims ({seq.features.shape[1]}, {seq.pos_encodings.shape[1]}) "
            f"do not match model ({net.feature_dim}, {net.pe_dim})"
        )
    encodings = seq.pos_encodings
    if not model.config.use_pe:
        encodings = np.zeros_like(encodings)
    fwd = embed_mod.forward_batch(net, seq.features, encodings)
    queries = np.concatenate([fwd.latent, encodings], axis=1)
    cfwd = concepts_mod.forward_batch(model.bank, queries)
    labels = np.argmax(cfwd.confidences, axis=1)
    return labels, cfwd.confidences


def apply_background(labelings, policy: BackgroundPolicy):
    """Mask the floor(ratio * total) least-confident segments activity-wide.

    Masked positions get the background label in initial_labels.  Ties on
    the confidence maxima resolve toward earlier pooled position (videos
    in given order, segments in temporal order).
    """
    total = sum(len(lab.initial_labels) for lab in labelings)
    n_mask = int(np.floor(policy.ratio * total))
    maxima = np.concatenate([lab.confidences.max(axis=1) for lab in labelings])
    picked = np.argsort(maxima, kind="stable")[:n_mask]
    flat_mask = np.zeros(total, dtype=bool)
    flat_mask[picked] = True

    offset = 0
    for lab in labelings:
        m = len(lab.initial_labels)
        mask = flat_mask[offset:offset + m]
        lab.background_mask = mask
        labels = np.array(lab.initial_labels, copy=True)
        labels[mask] = BACKGROUND
        lab.initial_labels = labels
        offset += m
    return labelings


def order_sets(labelings, concept_count):
    """Sort concept sets by mean normalized timestamp of their segments.

    Positions are segment_index / segment_count per video; background
    segments do not contribute.  Sets with no assigned segments go last,
    ordered among themselves by index; mean ties also break by index.
    """
    sums = np.zeros(concept_count)
    counts = np.zeros(concept_count, dtype=int)
    for lab in labelings:
        m = len(lab.initial_labels)
        positions = np.arange(m) / m
        for k in range(concept_count):
            sel = lab.initial_labels == k
            sums[k] += positions[sel].sum()
            counts[k] += int(sel.sum())
    if counts.sum() == 0:
        raise ContractError("ordering needs at least one foreground segment")
    keys = []
    for k in range(concept_count):
        if counts[k] > 0:
            keys.append((0, sums[k] / counts[k], k))
        else:
            keys.append((1, 0.0, k))
    return np.array([k for _, _, k in sorted(keys)], dtype=int)


def build_transitions(order) -> TransitionModel:
    """Stay-or-advance transition matrix over the given set ordering.

    Each non-terminal set keeps probability 0.5 on itself and 0.5 on its
    successor in the ordering; the terminal set self-loops with 1.
    """
    order = np.asarray(order, dtype=int)
    k = len(order)
    if sorted(order.tolist()) != list(range(k)):
        raise ContractError(f"order {order.tolist()} is not a permutation of 0..{k - 1}")
    trans = np.zeros((k, k))
    for pos in range(k - 1):
        cur, nxt = order[pos], order[pos + 1]
        trans[cur, cur] = 0.5
        trans[cur, nxt] = 0.5
    trans[order[-1], order[-1]] = 1.0
    return TransitionModel(order=order, trans=trans, terminal=int(order[-1]))


def viterbi_decode(tm: TransitionModel, confidences):
    """Most probable label path under the transition model, in log space.

    The path starts at the first set of the ordering with probability 1;
    zero transition probabilities are hard walls.  The result never moves
    backward along the ordering and never skips a set.
    """
    confidences = np.asarray(confidences, dtype=float)
    if confidences.ndim != 2 or confidences.shape[0] < 1:
        raise ContractError(f"confidence matrix shape {confidences.shape} is unusable")
    row_sums = confidences.sum(axis=1)
    if np.any(np.abs(row_sums - 1.0) > 1e-9):
        raise ContractError("confidence rows must each sum to 1")
    m, k = confidences.shape
    with np.errstate(divide="ignore"):
        log_conf = np.log(confidences)
        log_trans = np.log(tm.trans)

    score = np.full(k, -np.inf)
    score[tm.order[0]] = log_conf[0, tm.order[0]]
    if not np.isfinite(score[tm.order[0]]):
        raise DecodingError("no admissible state at segment 0")
    back = np.zeros((m, k), dtype=int)
    for step in range(1, m):
        cand = score[:, None] + log_trans
        back[step] = np.argmax(cand, axis=0)
        score = cand[back[step], np.arange(k)] + log_conf[step]
        if not np.any(np.isfinite(score)):
            raise DecodingError(f"no admissible state at segment {step}")

    labels = np.zeros(m, dtype=int)
    labels[-1] = int(np.argmax(score))
    for step in range(m - 1, 0, -1):
        labels[step - 1] = back[step, labels[step]]
    return labels


def decode_labelings(labelings, tm: TransitionModel):
    """Viterbi-decode each video's foreground, splicing background back in."""
    for lab in labelings:
        fg = ~lab.background_mask
        decoded = np.full(len(lab.initial_labels), BACKGROUND, dtype=int)
        if np.any(fg):
            decoded[fg] = viterbi_decode(tm, lab.confidences[fg])
        lab.decoded_labels = decoded
    return labelings


def segment_activity(model, sequences, policy: BackgroundPolicy = BackgroundPolicy()):
    """Full segmentation pass for one activity's videos.

    Returns the labelings (initial + decoded + masks) and the fitted
    transition model.
    """
    labelings = []
    for seq in sequences:
        labels, conf = initial_predictions(model, seq)
        labelings.append(VideoLabeling(video_id=seq.video_id, initial_labels=labels,
                                       confidences=conf))
    apply_background(labelings, policy)
    order = order_sets(labelings, model.bank.count)
    tm = build_transitions(order)
    decode_labelings(labelings, tm)
    return labelings, tm
