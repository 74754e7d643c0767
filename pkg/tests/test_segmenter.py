"""Unit tests for segmentation: background policy, ordering, transitions,
Viterbi decoding, and the full per-activity pass."""

import numpy as np
import pytest

from subseg.concepts import ConceptBank, assign
from subseg.embedding import EmbeddingNet, attention_input, encode
from subseg.errors import ConfigError, ContractError, DecodingError
from subseg.segmenter import (
    BACKGROUND,
    BackgroundPolicy,
    VideoLabeling,
    apply_background,
    build_transitions,
    decode_labelings,
    initial_predictions,
    order_sets,
    segment_activity,
    viterbi_decode,
)
from subseg.trainer import TrainConfig, TrainedModel

from conftest import make_sequence
from oracles import path_log_prob


def labeling(labels, confidences=None, video_id="v", k=None):
    labels = np.asarray(labels, dtype=int)
    if confidences is None:
        k = k if k is not None else int(labels.max()) + 1
        confidences = np.full((len(labels), k), 1.0 / k)
    return VideoLabeling(video_id=video_id, initial_labels=labels,
                         confidences=np.asarray(confidences, dtype=float))


def dirichlet_rows(rng, m, k):
    raw = rng.random(size=(m, k)) + 1e-3
    return raw / raw.sum(axis=1, keepdims=True)


def tiny_model(seed=0, feature_dim=4, pe_dim=2, latent_dim=3, k=3,
               use_pe=True):
    rng = np.random.default_rng(seed)
    net = EmbeddingNet.build(feature_dim, pe_dim, latent_dim=latent_dim, rng=rng)
    bank = ConceptBank.build(k, latent_dim + pe_dim, rng)
    cfg = TrainConfig(concept_count=k, epochs=1, latent_dim=latent_dim,
                      use_pe=use_pe)
    return TrainedModel(net=net, bank=bank, config=cfg)


# ------------------------------------------------------- background policy

def test_background_policy_bounds():
    BackgroundPolicy(ratio=0.0)
    BackgroundPolicy(ratio=0.999)
    with pytest.raises(ConfigError):
        BackgroundPolicy(ratio=1.0)
    with pytest.raises(ConfigError):
        BackgroundPolicy(ratio=-0.1)


def test_apply_background_zero_ratio_is_noop():
    lab = labeling([0, 1, 0], k=2)
    apply_background([lab], BackgroundPolicy(ratio=0.0))
    assert not lab.background_mask.any()
    assert np.array_equal(lab.initial_labels, [0, 1, 0])


def test_apply_background_masks_lowest_confidence():
    # per-segment confidence maxima 0.9, 0.1, 0.8, 0.2 with ratio 0.5:
    # the two weakest segments (indices 1 and 3) become background
    conf = np.array([[0.9, 0.05], [0.1, 0.05], [0.8, 0.05], [0.2, 0.05]])
    lab = labeling([0, 0, 0, 0], conf)
    apply_background([lab], BackgroundPolicy(ratio=0.5))
    assert np.array_equal(np.flatnonzero(lab.background_mask), [1, 3])
    assert np.array_equal(lab.initial_labels, [0, BACKGROUND, 0, BACKGROUND])


def test_apply_background_floor_count():
    conf = dirichlet_rows(np.random.default_rng(0), 10, 3)
    lab = labeling(np.argmax(conf, axis=1), conf)
    apply_background([lab], BackgroundPolicy(ratio=0.6))
    assert int(lab.background_mask.sum()) == 6  # floor(0.6 * 10)


def test_apply_background_pools_across_videos():
    # all low-confidence rows live in the second video
    high = np.array([[0.9, 0.1]] * 4)
    low = np.array([[0.55, 0.45]] * 4)
    a = labeling([0] * 4, high, video_id="a")
    b = labeling([0] * 4, low, video_id="b")
    apply_background([a, b], BackgroundPolicy(ratio=0.5))
    assert int(a.background_mask.sum()) == 0
    assert int(b.background_mask.sum()) == 4


def test_apply_background_ties_resolve_to_earlier_position():
    conf = np.full((6, 2), 0.5)
    lab = labeling([0] * 6, conf)
    apply_background([lab], BackgroundPolicy(ratio=0.5))
    assert np.array_equal(np.flatnonzero(lab.background_mask), [0, 1, 2])


# -------------------------------------------------------------- order_sets

def test_order_sets_by_mean_timestamp():
    # set 0 occupies early positions, set 1 late ones
    lab = labeling([0, 0, 1], k=2)
    assert np.array_equal(order_sets([lab], 2), [0, 1])
    lab = labeling([1, 1, 0], k=2)
    assert np.array_equal(order_sets([lab], 2), [1, 0])


def test_order_sets_places_empty_sets_last_by_index():
    lab = labeling([0, 0, 1], k=2)
    assert np.array_equal(order_sets([lab], 4), [0, 1, 2, 3])


def test_order_sets_three_set_hand_case():
    # normalized positions over 10 slots: set 0 -> {0.5}, set 1 -> {0.2},
    # set 2 -> {0.0, 0.8} with mean 0.4, so the order is [1, 2, 0]
    labels = np.array([2, BACKGROUND, 1, BACKGROUND, BACKGROUND, 0,
                       BACKGROUND, BACKGROUND, 2, BACKGROUND])
    lab = labeling(labels, k=3)
    assert np.array_equal(order_sets([lab], 3), [1, 2, 0])


def test_order_sets_exact_tie_uses_index():
    # both sets have the same mean normalized position
    labels = np.array([0, 1, 1, 0])
    lab = labeling(labels, k=2)
    assert np.array_equal(order_sets([lab], 2), [0, 1])


def test_order_sets_ignores_background():
    labels = np.array([BACKGROUND, 0, 1, BACKGROUND])
    lab = labeling(labels, k=2)
    assert np.array_equal(order_sets([lab], 2), [0, 1])


def test_order_sets_requires_foreground():
    lab = labeling([BACKGROUND, BACKGROUND], k=2)
    with pytest.raises(ContractError):
        order_sets([lab], 2)


def test_order_sets_pools_normalized_positions_across_videos():
    # set 1 sits late in a short video, set 0 early in a long one
    a = labeling([1, 1], k=2, video_id="a")
    b = labeling([0, 0, 0, 1], k=2, video_id="b")
    # means: set 0 -> (0+0.25+0.5)/3 = 0.25; set 1 -> (0+0.5+0.75)/3 = 0.4167
    assert np.array_equal(order_sets([a, b], 2), [0, 1])


# ------------------------------------------------------- build_transitions

def test_build_transitions_two_sets():
    tm = build_transitions([0, 1])
    assert np.array_equal(tm.trans, np.array([[0.5, 0.5], [0.0, 1.0]]))
    assert tm.terminal == 1


def test_build_transitions_three_sets_hand_case():
    tm = build_transitions([2, 0, 1])
    want = np.zeros((3, 3))
    want[2, 2] = 0.5
    want[2, 0] = 0.5
    want[0, 0] = 0.5
    want[0, 1] = 0.5
    want[1, 1] = 1.0
    assert np.array_equal(tm.trans, want)
    assert tm.terminal == 1
    assert np.allclose(tm.trans.sum(axis=1), 1.0)


def test_build_transitions_rejects_non_permutations():
    with pytest.raises(ContractError):
        build_transitions([0, 0, 1])
    with pytest.raises(ContractError):
        build_transitions([0, 2])


# ----------------------------------------------------------------- viterbi

def test_viterbi_single_segment_forced_start():
    tm = build_transitions([1, 0])
    conf = np.array([[0.3, 0.7]])
    assert np.array_equal(viterbi_decode(tm, conf), [1])


def test_viterbi_two_segment_hand_case():
    tm = build_transitions([0, 1])
    conf = np.array([[0.9, 0.1], [0.2, 0.8]])
    path = viterbi_decode(tm, conf)
    assert np.array_equal(path, [0, 1])
    prob = np.exp(path_log_prob(tm, conf, path))
    assert prob == pytest.approx(0.9 * 0.5 * 0.8, abs=1e-12)


def test_viterbi_rejects_unnormalized_rows():
    tm = build_transitions([0, 1])
    with pytest.raises(ContractError):
        viterbi_decode(tm, np.array([[0.9, 0.2], [0.5, 0.5]]))
    with pytest.raises(ContractError):
        viterbi_decode(tm, np.ones((0, 2)))
    with pytest.raises(ContractError):
        viterbi_decode(tm, np.array([0.5, 0.5]))


def test_viterbi_impossible_start_raises():
    tm = build_transitions([0, 1])
    conf = np.array([[0.0, 1.0], [0.5, 0.5]])
    with pytest.raises(DecodingError) as err:
        viterbi_decode(tm, conf)
    assert "segment 0" in str(err.value)


def test_viterbi_dead_end_raises_with_position():
    tm = build_transitions([0, 1])
    conf = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]])
    with pytest.raises(DecodingError) as err:
        viterbi_decode(tm, conf)
    assert "segment 2" in str(err.value)


def assert_walk(order, path):
    position = {int(s): i for i, s in enumerate(order)}
    steps = [position[int(v)] for v in path]
    assert steps[0] == 0
    for a, b in zip(steps, steps[1:]):
        assert b - a in (0, 1)


def test_viterbi_output_is_a_monotone_walk():
    rng = np.random.default_rng(10)
    for _ in range(50):
        k = int(rng.integers(2, 5))
        m = int(rng.integers(1, 12))
        tm = build_transitions(rng.permutation(k))
        conf = dirichlet_rows(rng, m, k)
        assert_walk(tm.order, viterbi_decode(tm, conf))


def test_viterbi_beats_feasible_greedy_paths():
    rng = np.random.default_rng(11)
    feasible_seen = 0
    for _ in range(200):
        k = int(rng.integers(2, 5))
        m = int(rng.integers(2, 9))
        order = rng.permutation(k)
        tm = build_transitions(order)
        # bias confidences toward an actual walk so greedy is often feasible
        walk_pos = np.minimum(np.arange(m), k - 1)
        conf = dirichlet_rows(rng, m, k)
        conf[np.arange(m), order[walk_pos]] += 2.0
        conf = conf / conf.sum(axis=1, keepdims=True)
        greedy = np.argmax(conf, axis=1)
        position = {int(s): i for i, s in enumerate(order)}
        steps = [position[int(v)] for v in greedy]
        feasible = steps[0] == 0 and all(b - a in (0, 1)
                                         for a, b in zip(steps, steps[1:]))
        if not feasible:
            continue
        feasible_seen += 1
        decoded = viterbi_decode(tm, conf)
        assert path_log_prob(tm, conf, decoded) >= \
            path_log_prob(tm, conf, greedy) - 1e-12
    assert feasible_seen >= 20


def test_viterbi_no_underflow_on_long_videos():
    rng = np.random.default_rng(12)
    tm = build_transitions([0, 1, 2])
    conf = dirichlet_rows(rng, 100000, 3)
    path = viterbi_decode(tm, conf)
    assert_walk(tm.order, path)
    assert np.isfinite(path_log_prob(tm, conf, path))


# --------------------------------------------------- relabeling invariance

def test_ordering_and_decoding_invariant_under_relabeling():
    rng = np.random.default_rng(13)
    k, m = 4, 30
    conf = dirichlet_rows(rng, m, k)
    labels = np.argmax(conf, axis=1)
    base = labeling(labels, conf)
    order = order_sets([base], k)
    decoded = viterbi_decode(build_transitions(order), conf)

    sigma = rng.permutation(k)
    perm_conf = np.empty_like(conf)
    perm_conf[:, sigma] = conf  # column k moves to sigma[k]
    perm_lab = labeling(sigma[labels], perm_conf)
    perm_order = order_sets([perm_lab], k)
    assert np.array_equal(perm_order, sigma[order])
    perm_decoded = viterbi_decode(build_transitions(perm_order), perm_conf)
    assert np.array_equal(perm_decoded, sigma[decoded])


# ------------------------------------------------------------------ splice

def test_decode_labelings_splices_background():
    tm = build_transitions([0, 1])
    conf = np.array([[0.9, 0.1], [0.5, 0.5], [0.1, 0.9], [0.2, 0.8]])
    lab = labeling([0, BACKGROUND, 1, 1], conf)
    lab.background_mask = np.array([False, True, False, False])
    decode_labelings([lab], tm)
    assert lab.decoded_labels[1] == BACKGROUND
    fg_decoded = lab.decoded_labels[[0, 2, 3]]
    assert np.array_equal(fg_decoded, viterbi_decode(tm, conf[[0, 2, 3]]))


def test_decode_labelings_all_background_video():
    tm = build_transitions([0, 1])
    lab = labeling([BACKGROUND, BACKGROUND], k=2)
    lab.background_mask = np.array([True, True])
    decode_labelings([lab], tm)
    assert np.array_equal(lab.decoded_labels, [BACKGROUND, BACKGROUND])


# ----------------------------------------------------- initial predictions

def test_initial_predictions_match_per_segment_assign():
    model = tiny_model(seed=7)
    rng = np.random.default_rng(8)
    seq = make_sequence(rng.normal(size=(9, 4)), groups=8, pe_dim=2)
    labels, conf = initial_predictions(model, seq)
    assert conf.shape == (9, 3)
    assert np.allclose(conf.sum(axis=1), 1.0, atol=1e-9)
    for m in range(9):
        latent, _ = encode(model.net, seq.features[m], seq.pos_encodings[m])
        query = attention_input(latent, seq.pos_encodings[m])
        want_label, want_conf = assign(model.bank, query)
        assert labels[m] == want_label
        assert conf[m, labels[m]] == pytest.approx(want_conf, abs=1e-12)


def test_initial_predictions_respect_use_pe_toggle():
    model = tiny_model(seed=9, use_pe=False)
    rng = np.random.default_rng(10)
    seq = make_sequence(rng.normal(size=(5, 4)), groups=8, pe_dim=2)
    labels, conf = initial_predictions(model, seq)
    zeros = np.zeros_like(seq.pos_encodings)
    for m in range(5):
        latent, _ = encode(model.net, seq.features[m], zeros[m])
        query = attention_input(latent, zeros[m])
        want_label, _ = assign(model.bank, query)
        assert labels[m] == want_label


def test_initial_predictions_dim_mismatch():
    model = tiny_model()
    seq = make_sequence(np.ones((3, 5)), groups=8, pe_dim=2)
    with pytest.raises(ContractError):
        initial_predictions(model, seq)


# ------------------------------------------------------------ full pass

def test_segment_activity_end_to_end():
    model = tiny_model(seed=20, k=3)
    rng = np.random.default_rng(21)
    seqs = [make_sequence(rng.normal(size=(int(rng.integers(6, 12)), 4)),
                          video_id=f"v{i}", groups=8, pe_dim=2)
            for i in range(3)]
    labelings, tm = segment_activity(model, seqs, BackgroundPolicy(ratio=0.25))
    assert sorted(tm.order.tolist()) == [0, 1, 2]
    total = sum(len(lab.initial_labels) for lab in labelings)
    masked = sum(int(lab.background_mask.sum()) for lab in labelings)
    assert masked == int(np.floor(0.25 * total))
    for lab in labelings:
        assert lab.decoded_labels is not None
        fg = ~lab.background_mask
        assert np.all(lab.decoded_labels[~fg] == BACKGROUND)
        if fg.any():
            assert_walk(tm.order, lab.decoded_labels[fg])
        assert np.all(lab.initial_labels[fg] >= 0)
        assert np.all(lab.initial_labels[fg] < 3)
