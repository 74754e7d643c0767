"""Sinusoidal positional encodings over quantized temporal groups.

A video of M segments is split into `groups` equal temporal groups; every
segment inherits the encoding of its group, so two videos of very different
lengths produce bit-identical encoding rows at the same relative position.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, IngestionError

DEFAULT_GROUPS = 128
DEFAULT_PE_DIM = 64
DEFAULT_FRAME_SPAN = 8


@dataclass(frozen=True)
class PosEncodingConfig:
    groups: int = DEFAULT_GROUPS
    dim: int = DEFAULT_PE_DIM

    def __post_init__(self):
        if self.groups < 1:
            raise ConfigError(f"groups must be >= 1, got {self.groups}")
        if self.dim < 2 or self.dim % 2 != 0:
            raise ConfigError(f"encoding dim must be even and >= 2, got {self.dim}")


def group_index(m: int, total: int, groups: int) -> int:
    """Quantized temporal group of segment m out of total: floor(m*g/total)."""
    if not 0 <= m < total:
        raise IndexError(f"segment index {m} outside [0, {total})")
    return min((m * groups) // total, groups - 1)


def positional_encoding(pos: int, dim: int) -> np.ndarray:
    """Interleaved sin/cos encoding: entry 2i = sin(pos / 10000^(2i/dim)),
    entry 2i+1 the matching cos."""
    if dim < 2 or dim % 2 != 0:
        raise ConfigError(f"encoding dim must be even and >= 2, got {dim}")
    if pos < 0:
        raise IndexError(f"group index must be >= 0, got {pos}")
    i = np.arange(dim // 2, dtype=np.float64)
    angles = pos / np.power(10000.0, 2.0 * i / dim)
    out = np.empty(dim, dtype=np.float64)
    out[0::2] = np.sin(angles)
    out[1::2] = np.cos(angles)
    return out


@dataclass
class FeatureSequence:
    """One video's per-segment features with matching positional encodings."""

    video_id: str
    features: np.ndarray        # (M, D) float64
    pos_encodings: np.ndarray   # (M, dim) float64
    frame_span: int = DEFAULT_FRAME_SPAN

    def __post_init__(self):
        if self.features.ndim != 2 or self.pos_encodings.ndim != 2:
            raise IngestionError(f"{self.video_id}: features and encodings must be 2-D")
        if self.features.shape[0] != self.pos_encodings.shape[0]:
            raise IngestionError(
                f"{self.video_id}: {self.features.shape[0]} feature rows vs "
                f"{self.pos_encodings.shape[0]} encoding rows"
            )
        if self.features.shape[0] < 1:
            raise IngestionError(f"{self.video_id}: empty feature sequence")
        if not np.isfinite(self.features).all() or not np.isfinite(self.pos_encodings).all():
            raise IngestionError(f"{self.video_id}: non-finite entries")
        # shared read-only after construction
        self.features.setflags(write=False)
        self.pos_encodings.setflags(write=False)

    @property
    def segment_count(self) -> int:
        return self.features.shape[0]


def encode_sequence(
    features: np.ndarray,
    cfg: PosEncodingConfig,
    video_id: str = "",
    frame_span: int = DEFAULT_FRAME_SPAN,
) -> FeatureSequence:
    """Attach per-segment positional encodings to a feature matrix."""
    features = np.array(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] < 1:
        raise IngestionError(f"{video_id or 'sequence'}: empty or non-2-D feature matrix")
    total = features.shape[0]
    groups = np.array([group_index(m, total, cfg.groups) for m in range(total)])
    # rows are identical within a group; compute each distinct group once
    table = {g: positional_encoding(int(g), cfg.dim) for g in np.unique(groups)}
    enc = np.vstack([table[g] for g in groups])
    return FeatureSequence(video_id=video_id, features=features, pos_encodings=enc,
                           frame_span=frame_span)
