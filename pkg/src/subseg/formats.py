"""Bit-exact file formats.

Feature files come in two shapes: the VFEA binary layout (magic "VFEA",
u32 version, u32 row count, u32 column count, then row-major
little-endian float32 payload) and a TSV fallback whose first line is
`D=<int>`.  Ground truth is one label token per line per frame.
Checkpoints hold a canonical-JSON header (config snapshot, array table,
config hash) followed by little-endian float64 arrays.  Manifests and
evaluation reports are canonical JSON documents; label files are one
integer per segment per line; the loss log is four tab-separated columns
per epoch.  Every writer is deterministic: identical inputs give
identical bytes.
"""

import hashlib
import json
import struct
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .concepts import ConceptBank
from .embedding import EmbeddingNet
from .errors import FormatError, IngestionError
from .trainer import TrainConfig, TrainedModel

FEATURE_MAGIC = b"VFEA"
FEATURE_VERSION = 1
CHECKPOINT_MAGIC = b"SSCK"
CHECKPOINT_VERSION = 1


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, separators=(",", ": ")) + "\n"


# ---------------------------------------------------------------- features

def write_features(path, matrix):
    matrix = np.asarray(matrix, dtype=np.float32)
    if matrix.ndim != 2:
        raise FormatError(f"feature matrix must be 2-D, got shape {matrix.shape}")
    m, d = matrix.shape
    payload = FEATURE_MAGIC + struct.pack("<III", FEATURE_VERSION, m, d)
    payload += matrix.astype("<f4").tobytes(order="C")
    Path(path).write_bytes(payload)


def load_features(path):
    """Feature matrix as float64; dispatches on the magic bytes."""
    raw = Path(path).read_bytes()
    if raw[:4] == FEATURE_MAGIC:
        return _load_features_binary(raw, path)
    return _load_features_tsv(raw, path)


def _load_features_binary(raw, path):
    if len(raw) < 16:
        raise FormatError(f"{path}: header truncated at byte {len(raw)}, need 16")
    version, m, d = struct.unpack_from("<III", raw, 4)
    if version != FEATURE_VERSION:
        raise FormatError(f"{path}: unsupported version {version} at byte offset 4")
    expected = 16 + 4 * m * d
    if len(raw) != expected:
        raise FormatError(
            f"{path}: payload truncated, expected {expected} bytes, found {len(raw)}"
        )
    flat = np.frombuffer(raw, dtype="<f4", offset=16)
    matrix = flat.reshape(m, d).astype(np.float64)
    if not np.all(np.isfinite(matrix)):
        bad = int(np.flatnonzero(~np.isfinite(matrix.ravel()))[0])
        raise FormatError(
            f"{path}: non-finite value at entry {bad} (byte offset {16 + 4 * bad})"
        )
    return matrix


def _load_features_tsv(raw, path):
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"{path}: bad magic bytes {raw[:4]!r} at offset 0") from exc
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("D="):
        raise FormatError(f"{path}: first line must be 'D=<int>'")
    try:
        d = int(lines[0][2:])
    except ValueError as exc:
        raise FormatError(f"{path}: bad dimension header {lines[0]!r}") from exc
    rows = []
    for i, line in enumerate(lines[1:], start=2):
        parts = line.split()
        if len(parts) != d:
            raise FormatError(f"{path}: line {i} has {len(parts)} values, want {d}")
        try:
            rows.append([float(p) for p in parts])
        except ValueError as exc:
            raise FormatError(f"{path}: non-numeric value on line {i}") from exc
    matrix = np.array(rows, dtype=np.float64).reshape(len(rows), d)
    if not np.all(np.isfinite(matrix)):
        raise FormatError(f"{path}: non-finite value in TSV payload")
    return matrix


def write_features_tsv(path, matrix):
    matrix = np.asarray(matrix, dtype=np.float64)
    lines = [f"D={matrix.shape[1]}"]
    for row in matrix:
        lines.append("\t".join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


# ------------------------------------------------------------ ground truth

def load_gt_frames(path):
    """Frame-level label tokens, one per line."""
    lines = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines:
        raise FormatError(f"{path}: ground-truth file is empty")
    return lines


def write_gt_frames(path, labels):
    Path(path).write_text("\n".join(str(t) for t in labels) + "\n")


def segment_gt(frames, frame_span=8):
    """Collapse frame labels to one label per span: majority count, ties
    broken by whichever tied label occurs earliest within the span."""
    out = []
    for start in range(0, len(frames), frame_span):
        span = frames[start:start + frame_span]
        counts = Counter(span)
        top = max(counts.values())
        winner = next(tok for tok in span if counts[tok] == top)
        out.append(winner)
    return out


def load_ground_truth(path, frame_span=8):
    """Per-segment ground-truth labels for one video."""
    return segment_gt(load_gt_frames(path), frame_span=frame_span)


# -------------------------------------------------------------- checkpoint

def _model_arrays(model):
    arrays = []
    for i, layer in enumerate(model.net.encoder_layers):
        arrays.append((f"enc{i}.weight", layer.weight))
        arrays.append((f"enc{i}.bias", layer.bias))
    for i, layer in enumerate(model.net.decoder_layers):
        arrays.append((f"dec{i}.weight", layer.weight))
        arrays.append((f"dec{i}.bias", layer.bias))
    arrays.append(("bank.anchors", model.bank.anchors))
    arrays.append(("bank.weight", model.bank.weight))
    arrays.append(("bank.bias", model.bank.bias))
    return arrays


def _config_block(model, groups):
    cfg = model.config
    return {
        "config": {
            "concept_count": cfg.concept_count,
            "epochs": cfg.epochs,
            "batch_size": cfg.batch_size,
            "lr": cfg.lr,
            "seed": cfg.seed,
            "latent_dim": cfg.latent_dim,
            "recon_weight": cfg.recon_weight,
            "contrast_weight": cfg.contrast_weight,
            "position_weight": cfg.position_weight,
            "use_feature_loss": cfg.use_feature_loss,
            "use_position_loss": cfg.use_position_loss,
            "use_contrastive": cfg.use_contrastive,
            "use_skip": cfg.use_skip,
            "use_pe": cfg.use_pe,
        },
        "feature_dim": model.net.feature_dim,
        "pe_dim": model.net.pe_dim,
        "groups": groups,
    }


def config_hash(block) -> str:
    return hashlib.sha256(canonical_json(block).encode()).hexdigest()


def save_checkpoint(path, model, groups):
    block = _config_block(model, groups)
    arrays = _model_arrays(model)
    header = dict(block)
    header["config_sha256"] = config_hash(block)
    header["arrays"] = [{"name": n, "shape": list(a.shape)} for n, a in arrays]
    header["loss_trace"] = [[e.epoch, e.recon, e.contrast, e.total]
                            for e in model.loss_trace]
    header_bytes = canonical_json(header).encode()
    out = CHECKPOINT_MAGIC + struct.pack("<II", CHECKPOINT_VERSION, len(header_bytes))
    out += header_bytes
    for _, arr in arrays:
        out += np.asarray(arr, dtype="<f8").tobytes(order="C")
    Path(path).write_bytes(out)


def load_checkpoint(path):
    """Rebuild the trained model; returns (model, groups).

    The stored config hash is recomputed and must match, so corrupted or
    hand-edited config sections fail loudly.
    """
    raw = Path(path).read_bytes()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: bad checkpoint magic {raw[:4]!r} at offset 0")
    version, header_len = struct.unpack_from("<II", raw, 4)
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    header_end = 12 + header_len
    try:
        header = json.loads(raw[12:header_end].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: unreadable checkpoint header") from exc
    block = {k: header[k] for k in ("config", "feature_dim", "pe_dim", "groups")}
    if config_hash(block) != header.get("config_sha256"):
        raise FormatError(f"{path}: config hash mismatch, checkpoint rejected")

    offset = header_end
    values = {}
    for entry in header["arrays"]:
        count = int(np.prod(entry["shape"], dtype=int))
        nbytes = 8 * count
        if offset + nbytes > len(raw):
            raise FormatError(
                f"{path}: array {entry['name']} truncated at byte {len(raw)}, "
                f"need {offset + nbytes}"
            )
        flat = np.frombuffer(raw, dtype="<f8", offset=offset, count=count)
        values[entry["name"]] = flat.reshape(entry["shape"]).astype(np.float64)
        offset += nbytes
    if offset != len(raw):
        raise FormatError(f"{path}: {len(raw) - offset} trailing bytes after arrays")

    cfg = TrainConfig(**header["config"])
    from .numerics import LinearLayer
    from .trainer import EpochLoss
    enc = [LinearLayer(values[f"enc{i}.weight"], values[f"enc{i}.bias"]) for i in range(3)]
    dec = [LinearLayer(values[f"dec{i}.weight"], values[f"dec{i}.bias"]) for i in range(3)]
    net = EmbeddingNet(enc, dec, header["feature_dim"], header["pe_dim"],
                       skip_enabled=cfg.use_skip)
    bank = ConceptBank(values["bank.anchors"], values["bank.weight"], values["bank.bias"])
    trace = [EpochLoss(epoch=int(row[0]), recon=row[1], contrast=row[2], total=row[3])
             for row in header.get("loss_trace", [])]
    model = TrainedModel(net=net, bank=bank, config=cfg, loss_trace=trace)
    return model, header["groups"]


# ---------------------------------------------------------------- manifest

@dataclass
class VideoEntry:
    id: str
    feature_path: str
    frame_count: int
    gt_path: str = None


@dataclass
class Activity:
    name: str
    k: int
    videos: list = field(default_factory=list)


@dataclass
class Manifest:
    activities: list = field(default_factory=list)
    root: Path = Path(".")

    def activity(self, name):
        for act in self.activities:
            if act.name == name:
                return act
        raise IngestionError(f"activity {name!r} not in manifest")

    def resolve(self, rel):
        return self.root / rel


def write_manifest(path, manifest: Manifest):
    doc = {"activities": [
        {"name": act.name, "k": act.k, "videos": [
            {"id": v.id, "feature_path": v.feature_path,
             "gt_path": v.gt_path, "frame_count": v.frame_count}
            for v in act.videos
        ]} for act in manifest.activities
    ]}
    Path(path).write_text(canonical_json(doc))


def load_manifest(path):
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: unreadable manifest: {exc}") from exc
    root = path.parent
    manifest = Manifest(root=root)
    seen = set()
    problems = []
    for act_doc in doc.get("activities", []):
        act = Activity(name=act_doc["name"], k=int(act_doc["k"]))
        if act.k < 2:
            problems.append(f"activity {act.name!r}: k={act.k} < 2")
        for v in act_doc.get("videos", []):
            entry = VideoEntry(id=v["id"], feature_path=v["feature_path"],
                               frame_count=int(v["frame_count"]),
                               gt_path=v.get("gt_path"))
            if entry.id in seen:
                problems.append(f"duplicate video id {entry.id!r}")
            seen.add(entry.id)
            if not (root / entry.feature_path).is_file():
                problems.append(f"{entry.id}: unreadable feature path {entry.feature_path!r}")
            if entry.gt_path is not None and not (root / entry.gt_path).is_file():
                problems.append(f"{entry.id}: unreadable gt path {entry.gt_path!r}")
            act.videos.append(entry)
        manifest.activities.append(act)
    if problems:
        raise IngestionError("manifest invalid: " + "; ".join(problems))
    return manifest


# ----------------------------------------------------- labels, report, log

def write_labels(path, labels):
    Path(path).write_text("\n".join(str(int(v)) for v in labels) + "\n")


def load_labels(path):
    lines = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines:
        raise FormatError(f"{path}: label file is empty")
    try:
        return np.array([int(ln) for ln in lines], dtype=int)
    except ValueError as exc:
        raise FormatError(f"{path}: non-integer label line") from exc


def write_report(path, report_dict):
    Path(path).write_text(canonical_json(report_dict))


def load_report(path):
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: unreadable report: {exc}") from exc


def write_loss_log(path, loss_trace):
    lines = []
    for e in loss_trace:
        if isinstance(e, dict):
            epoch, recon, contrast, total = (e["epoch"], e["recon"],
                                             e["contrast"], e["total"])
        else:
            epoch, recon, contrast, total = e.epoch, e.recon, e.contrast, e.total
        lines.append(f"{epoch}\t{repr(float(recon))}\t{repr(float(contrast))}"
                     f"\t{repr(float(total))}")
    Path(path).write_text("\n".join(lines) + "\n")
