"""Unit tests for the binary/text file formats and their failure modes."""

import json
import struct

import numpy as np
import pytest

from subseg.concepts import ConceptBank
from subseg.embedding import EmbeddingNet
from subseg.errors import FormatError, IngestionError
from subseg.formats import (
    CHECKPOINT_MAGIC,
    Activity,
    Manifest,
    VideoEntry,
    canonical_json,
    config_hash,
    load_checkpoint,
    load_features,
    load_gt_frames,
    load_ground_truth,
    load_labels,
    load_manifest,
    load_report,
    save_checkpoint,
    segment_gt,
    write_features,
    write_features_tsv,
    write_gt_frames,
    write_labels,
    write_loss_log,
    write_manifest,
    write_report,
)
from subseg.trainer import EpochLoss, TrainConfig, TrainedModel


# ---------------------------------------------------------- binary features

def test_features_binary_round_trip_is_f32_exact(tmp_path):
    rng = np.random.default_rng(60)
    matrix = rng.normal(size=(5, 3)) * np.pi
    path = tmp_path / "v.vfea"
    write_features(path, matrix)
    loaded = load_features(path)
    assert loaded.dtype == np.float64
    assert np.array_equal(loaded, matrix.astype(np.float32).astype(np.float64))


def test_features_binary_exact_bytes(tmp_path):
    path = tmp_path / "v.vfea"
    write_features(path, [[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
    want = (b"VFEA" + struct.pack("<III", 1, 2, 3)
            + struct.pack("<6f", 1, 2, 3, 4, 5, 6))
    assert path.read_bytes() == want
    assert np.array_equal(load_features(path), [[1, 2, 3], [4, 5, 6]])


def test_features_binary_rejects_non_2d(tmp_path):
    with pytest.raises(FormatError):
        write_features(tmp_path / "v.vfea", [1.0, 2.0])


def test_features_binary_truncated_header(tmp_path):
    path = tmp_path / "v.vfea"
    path.write_bytes(b"VFEA" + b"\x00" * 6)
    with pytest.raises(FormatError) as err:
        load_features(path)
    assert "header truncated at byte 10" in str(err.value)


def test_features_binary_bad_version(tmp_path):
    path = tmp_path / "v.vfea"
    path.write_bytes(b"VFEA" + struct.pack("<III", 2, 1, 1) + b"\x00" * 4)
    with pytest.raises(FormatError) as err:
        load_features(path)
    assert "unsupported version 2 at byte offset 4" in str(err.value)


def test_features_binary_truncated_payload(tmp_path):
    path = tmp_path / "v.vfea"
    write_features(path, np.ones((2, 3)))
    path.write_bytes(path.read_bytes()[:-4])
    with pytest.raises(FormatError) as err:
        load_features(path)
    assert "expected 40 bytes, found 36" in str(err.value)


def test_features_binary_nan_payload_reports_offset(tmp_path):
    matrix = np.ones((2, 3), dtype=np.float32)
    matrix[1, 1] = np.nan  # flat entry 4 -> byte offset 16 + 4*4 = 32
    path = tmp_path / "v.vfea"
    payload = b"VFEA" + struct.pack("<III", 1, 2, 3) + matrix.tobytes()
    path.write_bytes(payload)
    with pytest.raises(FormatError) as err:
        load_features(path)
    assert "entry 4" in str(err.value) and "byte offset 32" in str(err.value)


def test_features_undecodable_magic(tmp_path):
    path = tmp_path / "v.bin"
    path.write_bytes(b"\xff\xfe\x00\x01junk")
    with pytest.raises(FormatError) as err:
        load_features(path)
    assert "bad magic bytes" in str(err.value)


# ------------------------------------------------------------- TSV features

def test_features_tsv_round_trip_is_f64_exact(tmp_path):
    rng = np.random.default_rng(61)
    matrix = rng.normal(size=(4, 2)) / 3.0
    path = tmp_path / "v.tsv"
    write_features_tsv(path, matrix)
    assert np.array_equal(load_features(path), matrix)


def test_features_tsv_header_line(tmp_path):
    path = tmp_path / "v.tsv"
    write_features_tsv(path, np.zeros((1, 3)))
    assert path.read_text().splitlines()[0] == "D=3"


def test_features_tsv_errors(tmp_path):
    path = tmp_path / "v.tsv"
    path.write_text("1.0\t2.0\n")
    with pytest.raises(FormatError, match="first line"):
        load_features(path)

    path.write_text("D=x\n1.0\n")
    with pytest.raises(FormatError, match="bad dimension header"):
        load_features(path)

    path.write_text("D=3\n1.0\t2.0\n")
    with pytest.raises(FormatError) as err:
        load_features(path)
    assert "line 2 has 2 values, want 3" in str(err.value)

    path.write_text("D=1\nhello\n")
    with pytest.raises(FormatError, match="non-numeric value on line 2"):
        load_features(path)

    path.write_text("D=1\ninf\n")
    with pytest.raises(FormatError, match="non-finite"):
        load_features(path)

    path.write_text("")
    with pytest.raises(FormatError, match="first line"):
        load_features(path)


# ------------------------------------------------------------- ground truth

def test_gt_frames_round_trip(tmp_path):
    path = tmp_path / "gt.txt"
    write_gt_frames(path, ["pour", "pour", "stir"])
    assert load_gt_frames(path) == ["pour", "pour", "stir"]


def test_gt_frames_empty_rejected(tmp_path):
    path = tmp_path / "gt.txt"
    path.write_text("\n\n")
    with pytest.raises(FormatError, match="empty"):
        load_gt_frames(path)


def test_segment_gt_majority():
    assert segment_gt(["a"] * 3 + ["b"] * 5) == ["b"]


def test_segment_gt_tie_takes_earliest_token_in_span():
    assert segment_gt(["a", "a", "a", "b", "b", "b", "b", "a"]) == ["a"]


def test_segment_gt_span_boundaries():
    assert segment_gt(["a"] * 8 + ["b"] * 8) == ["a", "b"]
    assert segment_gt(["a"] * 8 + ["b"] * 8 + ["c"]) == ["a", "b", "c"]


def test_segment_gt_custom_span():
    assert segment_gt(["a", "b", "b", "c"], frame_span=2) == ["a", "b"]


def test_load_ground_truth_collapses_spans(tmp_path):
    path = tmp_path / "gt.txt"
    write_gt_frames(path, ["x"] * 8 + ["y"] * 8)
    assert load_ground_truth(path) == ["x", "y"]


# --------------------------------------------------------------- checkpoint

def small_model(seed=0):
    rng = np.random.default_rng(seed)
    net = EmbeddingNet.build(4, 2, latent_dim=3, rng=rng)
    bank = ConceptBank.build(3, 5, rng)
    cfg = TrainConfig(concept_count=3, epochs=2, lr=3e-4)
    trace = [EpochLoss(0, 1.5, 0.25, 1.75), EpochLoss(1, 1.0, 0.125, 1.125)]
    return TrainedModel(net=net, bank=bank, config=cfg, loss_trace=trace)


def test_checkpoint_round_trip_bit_exact(tmp_path):
    model = small_model()
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, model, groups=16)
    loaded, groups = load_checkpoint(path)
    assert groups == 16
    assert loaded.config == model.config
    assert loaded.loss_trace == model.loss_trace
    for a, b in zip(model.net.encoder_layers, loaded.net.encoder_layers):
        assert np.array_equal(a.weight, b.weight)
        assert np.array_equal(a.bias, b.bias)
    for a, b in zip(model.net.decoder_layers, loaded.net.decoder_layers):
        assert np.array_equal(a.weight, b.weight)
        assert np.array_equal(a.bias, b.bias)
    assert np.array_equal(loaded.bank.anchors, model.bank.anchors)
    assert np.array_equal(loaded.bank.weight, model.bank.weight)
    assert np.array_equal(loaded.bank.bias, model.bank.bias)
    assert loaded.net.skip_enabled == model.net.skip_enabled


def test_checkpoint_resave_is_byte_identical(tmp_path):
    model = small_model()
    first = tmp_path / "a.ckpt"
    second = tmp_path / "b.ckpt"
    save_checkpoint(first, model, groups=8)
    loaded, groups = load_checkpoint(first)
    save_checkpoint(second, loaded, groups)
    assert first.read_bytes() == second.read_bytes()


def test_checkpoint_config_tamper_rejected(tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, small_model(), groups=8)
    raw = path.read_bytes()
    version, header_len = struct.unpack_from("<II", raw, 4)
    header = json.loads(raw[12:12 + header_len].decode())
    header["config"]["lr"] = 0.999  # stored hash now disagrees
    new_header = canonical_json(header).encode()
    tampered = (CHECKPOINT_MAGIC + struct.pack("<II", version, len(new_header))
                + new_header + raw[12 + header_len:])
    path.write_bytes(tampered)
    with pytest.raises(FormatError, match="config hash mismatch"):
        load_checkpoint(path)


def test_checkpoint_bad_magic(tmp_path):
    path = tmp_path / "m.ckpt"
    path.write_bytes(b"XXXX" + b"\x00" * 20)
    with pytest.raises(FormatError, match="bad checkpoint magic"):
        load_checkpoint(path)


def test_checkpoint_bad_version(tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, small_model(), groups=8)
    raw = bytearray(path.read_bytes())
    raw[4:8] = struct.pack("<I", 7)
    path.write_bytes(bytes(raw))
    with pytest.raises(FormatError, match="unsupported checkpoint version 7"):
        load_checkpoint(path)


def test_checkpoint_unreadable_header(tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, small_model(), groups=8)
    raw = bytearray(path.read_bytes())
    raw[12] = ord("X")  # breaks the JSON header
    path.write_bytes(bytes(raw))
    with pytest.raises(FormatError, match="unreadable checkpoint header"):
        load_checkpoint(path)


def test_checkpoint_truncated_arrays(tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, small_model(), groups=8)
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(FormatError, match="truncated at byte"):
        load_checkpoint(path)


def test_checkpoint_trailing_bytes(tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, small_model(), groups=8)
    path.write_bytes(path.read_bytes() + b"\x00")
    with pytest.raises(FormatError, match="1 trailing bytes"):
        load_checkpoint(path)


def test_config_hash_changes_with_content():
    a = {"config": {"lr": 1e-4}, "feature_dim": 4, "pe_dim": 2, "groups": 8}
    b = {"config": {"lr": 2e-4}, "feature_dim": 4, "pe_dim": 2, "groups": 8}
    assert config_hash(a) != config_hash(b)
    assert config_hash(a) == config_hash(json.loads(json.dumps(a)))


# ----------------------------------------------------------------- manifest

def build_tree(tmp_path):
    (tmp_path / "feats").mkdir()
    (tmp_path / "gt").mkdir()
    write_features(tmp_path / "feats" / "a0.vfea", np.ones((2, 3)))
    write_features_tsv(tmp_path / "feats" / "a1.tsv", np.zeros((3, 3)))
    write_gt_frames(tmp_path / "gt" / "a0.txt", ["x"] * 16)
    manifest = Manifest(root=tmp_path, activities=[
        Activity(name="demo", k=3, videos=[
            VideoEntry(id="a0", feature_path="feats/a0.vfea",
                       frame_count=16, gt_path="gt/a0.txt"),
            VideoEntry(id="a1", feature_path="feats/a1.tsv",
                       frame_count=24),
        ]),
    ])
    return manifest


def test_manifest_round_trip(tmp_path):
    manifest = build_tree(tmp_path)
    path = tmp_path / "manifest.json"
    write_manifest(path, manifest)
    loaded = load_manifest(path)
    assert loaded.root == tmp_path
    act = loaded.activity("demo")
    assert act.k == 3
    assert [v.id for v in act.videos] == ["a0", "a1"]
    assert act.videos[0].gt_path == "gt/a0.txt"
    assert act.videos[1].gt_path is None
    assert act.videos[0].frame_count == 16
    assert loaded.resolve("feats/a0.vfea") == tmp_path / "feats" / "a0.vfea"


def test_manifest_unknown_activity(tmp_path):
    manifest = build_tree(tmp_path)
    with pytest.raises(IngestionError, match="'nope' not in manifest"):
        manifest.activity("nope")


def test_manifest_problems_are_pooled(tmp_path):
    build_tree(tmp_path)
    doc = {"activities": [{"name": "bad", "k": 1, "videos": [
        {"id": "v", "feature_path": "feats/a0.vfea", "gt_path": None,
         "frame_count": 8},
        {"id": "v", "feature_path": "feats/missing.vfea", "gt_path": "gt/no.txt",
         "frame_count": 8},
    ]}]}
    path = tmp_path / "manifest.json"
    path.write_text(canonical_json(doc))
    with pytest.raises(IngestionError) as err:
        load_manifest(path)
    message = str(err.value)
    assert "k=1 < 2" in message
    assert "duplicate video id 'v'" in message
    assert "unreadable feature path 'feats/missing.vfea'" in message
    assert "unreadable gt path 'gt/no.txt'" in message


def test_manifest_unreadable_json(tmp_path):
    path = tmp_path / "manifest.json"
    path.write_text("{nope")
    with pytest.raises(FormatError, match="unreadable manifest"):
        load_manifest(path)


# ------------------------------------------------- labels, report, loss log

def test_labels_round_trip_with_background(tmp_path):
    path = tmp_path / "labels.txt"
    write_labels(path, np.array([0, -1, 2, 1]))
    assert np.array_equal(load_labels(path), [0, -1, 2, 1])


def test_labels_empty_rejected(tmp_path):
    path = tmp_path / "labels.txt"
    path.write_text("")
    with pytest.raises(FormatError, match="empty"):
        load_labels(path)


def test_labels_non_integer_rejected(tmp_path):
    path = tmp_path / "labels.txt"
    path.write_text("1\ntwo\n")
    with pytest.raises(FormatError, match="non-integer"):
        load_labels(path)


def test_canonical_json_is_order_insensitive():
    assert canonical_json({"b": 1, "a": 2}) == canonical_json({"a": 2, "b": 1})
    assert canonical_json({}).endswith("\n")


def test_report_round_trip_and_canonical_bytes(tmp_path):
    doc = {"moc": 0.7, "mof": 0.6, "per_activity": {"a": {"mof": 0.9}}}
    path = tmp_path / "report.json"
    write_report(path, {"per_activity": doc["per_activity"], "mof": 0.6,
                        "moc": 0.7})
    assert path.read_text() == canonical_json(doc)
    assert load_report(path) == doc


def test_report_unreadable(tmp_path):
    path = tmp_path / "report.json"
    path.write_text("not json")
    with pytest.raises(FormatError, match="unreadable report"):
        load_report(path)


def test_loss_log_format_and_dict_equivalence(tmp_path):
    objs = tmp_path / "objs.tsv"
    dicts = tmp_path / "dicts.tsv"
    trace = [EpochLoss(0, 0.5, 0.25, 0.75), EpochLoss(1, 0.1, 0.2, 0.3)]
    write_loss_log(objs, trace)
    write_loss_log(dicts, [{"epoch": e.epoch, "recon": e.recon,
                            "contrast": e.contrast, "total": e.total}
                           for e in trace])
    assert objs.read_bytes() == dicts.read_bytes()
    assert objs.read_text().splitlines()[0] == "0\t0.5\t0.25\t0.75"
