"""Synthetic activity generator for desk-scale verification.

Each video concatenates its activity's sub-actions in canonical order,
optionally with one adjacent swap (at the permutation rate) and one
dropped sub-action (at the dropout rate), then draws per-segment
features as the sub-action mean plus Gaussian noise.  Class means may
be supplied explicitly; by default they are mutually orthogonal scaled
basis vectors when the feature dimension allows, else random unit
vectors, which makes separability a single knob.  Ground-truth frame
labels and VFEA feature files land next to a manifest; everything is
deterministic in the seed.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import formats
from .encoding import DEFAULT_FRAME_SPAN
from .errors import ConfigError
from .rng import STREAM_SYNTH, make_rng


@dataclass(frozen=True)
class SyntheticSpec:
    concept_count: int
    videos: int = 10
    dim: int = 16
    min_segments: int = 40
    max_segments: int = 80
    mean_scale: float = 1.0
    noise: float = 0.1
    permutation_rate: float = 0.0
    dropout_rate: float = 0.0
    means: tuple | None = None

    def __post_init__(self):
        if self.concept_count < 2:
            raise ConfigError(f"sub-action count must be >= 2, got {self.concept_count}")
        if self.videos < 1:
            raise ConfigError(f"video count must be >= 1, got {self.videos}")
        if self.dim < 1:
            raise ConfigError(f"feature dim must be >= 1, got {self.dim}")
        if not 1 <= self.min_segments <= self.max_segments:
            raise ConfigError(
                f"segment range [{self.min_segments}, {self.max_segments}] invalid"
            )
        if self.noise < 0.0:
            raise ConfigError(f"noise must be >= 0, got {self.noise}")
        for name in ("permutation_rate", "dropout_rate"):
            rate = getattr(self, name)
            if not 0.0 <= rate <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {rate}")
        if self.means is not None:
            arr = np.asarray(self.means, dtype=np.float64)
            if arr.shape != (self.concept_count, self.dim):
                raise ConfigError(
                    f"means must be {self.concept_count} rows of dim {self.dim}, "
                    f"got shape {arr.shape}"
                )
            if not np.isfinite(arr).all():
                raise ConfigError("means must be finite")
            object.__setattr__(self, "means", tuple(tuple(row) for row in arr))

    @property
    def mean_separation(self) -> float:
        """Smallest distance between two class means."""
        if self.means is not None:
            arr = np.asarray(self.means, dtype=np.float64)
            diffs = arr[:, None, :] - arr[None, :, :]
            dists = np.sqrt((diffs ** 2).sum(axis=2))
            return float(dists[~np.eye(len(arr), dtype=bool)].min())
        return float(self.mean_scale * np.sqrt(2.0))


def make_means(count, dim, scale, rng, explicit=None):
    """Sub-action mean vectors: the explicit rows when given, else scaled
    basis rows, or random unit rows when the dimension cannot hold an
    orthogonal set."""
    if explicit is not None:
        return np.asarray(explicit, dtype=np.float64)
    if dim >= count:
        means = np.zeros((count, dim))
        means[np.arange(count), np.arange(count)] = scale
        return means
    raw = rng.normal(size=(count, dim))
    return scale * raw / np.linalg.norm(raw, axis=1, keepdims=True)


def sample_video(spec: SyntheticSpec, means, rng):
    """One video's per-segment labels and features."""
    order = list(range(spec.concept_count))
    if spec.dropout_rate > 0.0 and rng.random() < spec.dropout_rate:
        del order[rng.integers(len(order))]
    if spec.permutation_rate > 0.0 and len(order) >= 2 and rng.random() < spec.permutation_rate:
        pos = int(rng.integers(len(order) - 1))
        order[pos], order[pos + 1] = order[pos + 1], order[pos]

    total = int(rng.integers(spec.min_segments, spec.max_segments, endpoint=True))
    total = max(total, len(order))
    if len(order) > 1:
        cuts = np.sort(rng.choice(np.arange(1, total), size=len(order) - 1, replace=False))
        durations = np.diff(np.concatenate([[0], cuts, [total]]))
    else:
        durations = np.array([total])
    labels = np.repeat(order, durations)
    noise = rng.normal(0.0, spec.noise, size=(total, means.shape[1]))
    if spec.noise == 0.0:
        noise = np.zeros_like(noise)
    return labels, means[labels] + noise


def generate_synthetic(spec: SyntheticSpec, seed, outdir, activities=1,
                       frame_span=DEFAULT_FRAME_SPAN):
    """Write feature files, ground truth, and a manifest; returns the
    Manifest and its path."""
    outdir = Path(outdir)
    (outdir / "features").mkdir(parents=True, exist_ok=True)
    (outdir / "gt").mkdir(parents=True, exist_ok=True)
    rng = make_rng(seed, STREAM_SYNTH)

    manifest = formats.Manifest(root=outdir)
    for a in range(activities):
        act = formats.Activity(name=f"act{a:02d}", k=spec.concept_count)
        means = make_means(spec.concept_count, spec.dim, spec.mean_scale, rng,
                           explicit=spec.means)
        for v in range(spec.videos):
            vid = f"{act.name}_v{v:03d}"
            labels, features = sample_video(spec, means, rng)
            feature_rel = f"features/{vid}.vfea"
            gt_rel = f"gt/{vid}.txt"
            formats.write_features(outdir / feature_rel, features)
            tokens = np.repeat([f"sub{int(k):02d}" for k in labels], frame_span)
            formats.write_gt_frames(outdir / gt_rel, tokens)
            act.videos.append(formats.VideoEntry(
                id=vid, feature_path=feature_rel, gt_path=gt_rel,
                frame_count=len(labels) * frame_span,
            ))
        manifest.activities.append(act)

    manifest_path = outdir / "manifest.json"
    formats.write_manifest(manifest_path, manifest)
    return manifest, manifest_path
